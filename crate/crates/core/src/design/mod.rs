//! End-to-end estimator design over a network of subsystems, plus the offline
//! plug-in and unplug operations.
//!
//! The design runs in three parts: local synthesis per subsystem (gain,
//! contractive set, disturbance scale), coupling synthesis per parent pair
//! (coupling gain and `μ_ij`), and the centralized scaling-factor analysis
//! (Schur test, equilibrium test, `Θ∞`, inner box).

mod model;
mod plug;

pub use model::{is_strongly_connected, ModelError, NetworkModel};
pub use plug::{plug_in, unplug, PlugInRequest, UnplugCheck, UnplugOutcome, UNPLUG_SAMPLES};

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec;
use crate::invariance::{
    assemble_theta_system, compute_alpha, compute_mu, maximal_invariant_set_with,
    synthesize_contractive_set, verify_prpi, ContractiveSet, InvarianceError, PrpiReport,
    PrpiSubsystem, ThetaInvariantSet, ThetaSystem, DEFAULT_K_STAR_CAP,
};
use crate::numerics::{Matrix, Vector};
use crate::observer::{
    design_coupling_gain, design_deadbeat_gain, suggest_delta_revision, CouplingMode, CrossTerm,
    EstimatorGains, Subsystem, SynthesisError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DesignError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Synthesis(#[from] SynthesisError),
    #[error(transparent)]
    Invariance(#[from] InvarianceError),
    #[error("subsystem cannot be added: {0}")]
    PlugInRejected(DesignStatus),
    #[error("subsystem index {index} out of range (network has {count})")]
    InvalidIndex { index: usize, count: usize },
    #[error("operation needs a successful design, found: {0}")]
    NotSuccessful(DesignStatus),
    #[error("design and model do not match: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignStatus {
    Success,
    StoppedNotObservable {
        subsystem: usize,
        rank: usize,
        required: usize,
    },
    StoppedNotContractive {
        subsystem: usize,
        gamma: f64,
    },
    StoppedNotSchur {
        rho: f64,
    },
    StoppedEquilibriumOutside {
        component: usize,
        theta_bar: f64,
        upper: f64,
    },
}

impl DesignStatus {
    pub fn is_success(&self) -> bool {
        matches!(self, DesignStatus::Success)
    }
}

impl std::fmt::Display for DesignStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DesignStatus::Success => write!(f, "success"),
            DesignStatus::StoppedNotObservable {
                subsystem,
                rank,
                required,
            } => write!(
                f,
                "subsystem {subsystem} not observable (rank {rank} < {required})"
            ),
            DesignStatus::StoppedNotContractive { subsystem, gamma } => write!(
                f,
                "subsystem {subsystem}: no contractive set for the chosen horizon (gamma={gamma})"
            ),
            DesignStatus::StoppedNotSchur { rho } => write!(f, "T not Schur, rho={rho}"),
            DesignStatus::StoppedEquilibriumOutside {
                component,
                theta_bar,
                upper,
            } => write!(
                f,
                "equilibrium outside the admissible box: theta_bar[{component}]={theta_bar} >= {upper}"
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignStep {
    LocalGain,
    ContractiveSet,
    DisturbanceScale,
    CouplingGain,
    CouplingScale,
    ThetaAssembly,
    SchurCheck,
    EquilibriumCheck,
    InvariantSet,
    InnerBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub step: DesignStep,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsystem: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
}

impl ProvenanceEntry {
    fn local(step: DesignStep, i: usize) -> Self {
        ProvenanceEntry {
            step,
            subsystem: Some(i),
            parent: None,
        }
    }

    fn pair(step: DesignStep, i: usize, j: usize) -> Self {
        ProvenanceEntry {
            step,
            subsystem: Some(i),
            parent: Some(j),
        }
    }

    fn global(step: DesignStep) -> Self {
        ProvenanceEntry {
            step,
            subsystem: None,
            parent: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemDesign {
    pub gains: EstimatorGains,
    pub contractive: ContractiveSet,
    pub alpha: f64,
    /// `μ_ij` per parent.
    pub mu: BTreeMap<usize, f64>,
    /// Suggested `δ_ij` after the coupling gains are known.
    pub delta_suggestion: BTreeMap<usize, bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub status: DesignStatus,
    pub mode: CouplingMode,
    /// Empty when the design stopped during local synthesis.
    pub subsystems: Vec<SubsystemDesign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_system: Option<ThetaSystem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invariant_set: Option<ThetaInvariantSet>,
    pub provenance: Vec<ProvenanceEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    pub mode: CouplingMode,
    pub k_star_cap: usize,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            mode: CouplingMode::Frobenius,
            k_star_cap: DEFAULT_K_STAR_CAP,
        }
    }
}

pub(crate) struct LocalPart {
    pub local_gain: Matrix,
    pub closed_loop: Matrix,
    pub contractive: ContractiveSet,
    pub alpha: f64,
}

pub(crate) enum LocalOutcome {
    Done(Box<LocalPart>),
    Stopped(DesignStatus),
}

/// Local gain, contractive set and disturbance scale for one subsystem.
pub(crate) fn local_part(i: usize, sub: &Subsystem) -> Result<LocalOutcome, DesignError> {
    let local_gain = match design_deadbeat_gain(&sub.a, &sub.c) {
        Ok(l) => l,
        Err(SynthesisError::NotObservable { rank, required }) => {
            return Ok(LocalOutcome::Stopped(DesignStatus::StoppedNotObservable {
                subsystem: i,
                rank,
                required,
            }))
        }
        Err(e) => return Err(e.into()),
    };
    let closed_loop = &sub.a + &local_gain * &sub.c;
    let seed = sub.seed().ok_or(ModelError::MissingSeed { index: i })?;
    let k = sub.horizon.unwrap_or(sub.state_dim());
    let contractive = match synthesize_contractive_set(&closed_loop, &sub.error_bound, &seed, k) {
        Ok(c) => c,
        Err(InvarianceError::NotContractive { gamma, .. }) => {
            return Ok(LocalOutcome::Stopped(DesignStatus::StoppedNotContractive {
                subsystem: i,
                gamma,
            }))
        }
        Err(e) => return Err(e.into()),
    };
    let alpha = compute_alpha(&sub.d, &sub.disturbance, &contractive.set)?;
    Ok(LocalOutcome::Done(Box::new(LocalPart {
        local_gain,
        closed_loop,
        contractive,
        alpha,
    })))
}

/// Coupling gain, residual block and `μ_ij` for parent `j` of `i`.
pub(crate) fn coupling_part(
    sub_i: &Subsystem,
    j: usize,
    c_j: &Matrix,
    s_i: &crate::sets::ConvexBody,
    s_j: &crate::sets::ConvexBody,
    mode: CouplingMode,
) -> Result<(CrossTerm, f64), DesignError> {
    let coupling = &sub_i.couplings[&j];
    let (gain, block) = if coupling.use_output {
        let gain = design_coupling_gain(&coupling.matrix, c_j, s_i, s_j, mode)?;
        let mut block = &coupling.matrix + &gain * c_j;
        // exact cancellation is expected when the coupling acts through measured coordinates
        let scale = crate::numerics::frobenius_norm(&coupling.matrix).max(1.0);
        block.iter_mut().for_each(|v| {
            if v.abs() <= 1e-14 * scale {
                *v = 0.0
            }
        });
        (gain, block)
    } else {
        (Matrix::zeros(sub_i.state_dim(), c_j.nrows()), coupling.matrix.clone())
    };
    let mu = compute_mu(&block, s_j, s_i)?;
    Ok((
        CrossTerm {
            gain,
            block,
            use_output: coupling.use_output,
        },
        mu,
    ))
}

/// Runs the centralized analysis on the assembled subsystem designs.
pub(crate) fn analyse(
    model: &NetworkModel,
    subs: &[SubsystemDesign],
    cap: usize,
    log: &mut Vec<ProvenanceEntry>,
) -> Result<(DesignStatus, ThetaSystem, Option<ThetaInvariantSet>), DesignError> {
    let m = subs.len();
    let mut t = Matrix::zeros(m, m);
    for (i, d) in subs.iter().enumerate() {
        t[(i, i)] = d.contractive.lambda;
        for (&j, &mu) in &d.mu {
            t[(i, j)] = mu;
        }
    }
    let alpha = Vector::from_iterator(m, subs.iter().map(|d| d.alpha));
    let sets: Vec<_> = subs.iter().map(|d| d.contractive.set.clone()).collect();
    let bounds: Vec<_> = model.subsystems.iter().map(|s| s.error_bound.clone()).collect();
    let ts = assemble_theta_system(&t, &alpha, &sets, &bounds)?;
    log.push(ProvenanceEntry::global(DesignStep::ThetaAssembly));
    log.push(ProvenanceEntry::global(DesignStep::SchurCheck));
    if !ts.is_schur() {
        let rho = ts.spectral_radius;
        return Ok((DesignStatus::StoppedNotSchur { rho }, ts, None));
    }
    log.push(ProvenanceEntry::global(DesignStep::EquilibriumCheck));
    let tis = match maximal_invariant_set_with(&ts, cap) {
        Ok(s) => s,
        Err(InvarianceError::InteriorViolation {
            component,
            theta_bar,
            upper,
        }) => {
            return Ok((
                DesignStatus::StoppedEquilibriumOutside {
                    component,
                    theta_bar,
                    upper,
                },
                ts,
                None,
            ))
        }
        Err(e) => return Err(e.into()),
    };
    log.push(ProvenanceEntry::global(DesignStep::InvariantSet));
    log.push(ProvenanceEntry::global(DesignStep::InnerBox));
    Ok((DesignStatus::Success, ts, Some(tis)))
}

fn stopped(status: DesignStatus, mode: CouplingMode, log: Vec<ProvenanceEntry>) -> DesignReport {
    DesignReport {
        status,
        mode,
        subsystems: Vec::new(),
        theta_system: None,
        invariant_set: None,
        provenance: log,
    }
}

/// Designs every local estimator and certifies the resulting set family.
pub fn design(model: &NetworkModel, config: &DesignConfig) -> Result<DesignReport, DesignError> {
    model.validate()?;
    let m = model.len();
    let mut log = Vec::new();

    let locals = exec::try_map_range(m, |i| local_part(i, &model.subsystems[i]))?;
    let mut parts = Vec::with_capacity(m);
    for (i, outcome) in locals.into_iter().enumerate() {
        log.push(ProvenanceEntry::local(DesignStep::LocalGain, i));
        match outcome {
            LocalOutcome::Done(p) => {
                log.push(ProvenanceEntry::local(DesignStep::ContractiveSet, i));
                log.push(ProvenanceEntry::local(DesignStep::DisturbanceScale, i));
                parts.push(*p);
            }
            LocalOutcome::Stopped(status) => return Ok(stopped(status, config.mode, log)),
        }
    }

    let couplings = exec::try_map_range(m, |i| -> Result<Vec<(usize, CrossTerm, f64)>, DesignError> {
        let sub = &model.subsystems[i];
        sub.parents()
            .map(|j| {
                let (term, mu) = coupling_part(
                    sub,
                    j,
                    &model.subsystems[j].c,
                    &parts[i].contractive.set,
                    &parts[j].contractive.set,
                    config.mode,
                )?;
                Ok((j, term, mu))
            })
            .collect()
    })?;

    let mut subs = Vec::with_capacity(m);
    for (i, (part, pairs)) in parts.into_iter().zip(couplings).enumerate() {
        subs.push(build_subsystem_design(i, part, pairs, &mut log));
    }
    let (status, ts, tis) = analyse(model, &subs, config.k_star_cap, &mut log)?;
    Ok(DesignReport {
        status,
        mode: config.mode,
        subsystems: subs,
        theta_system: Some(ts),
        invariant_set: tis,
        provenance: log,
    })
}

pub(crate) fn build_subsystem_design(
    i: usize,
    part: LocalPart,
    pairs: Vec<(usize, CrossTerm, f64)>,
    log: &mut Vec<ProvenanceEntry>,
) -> SubsystemDesign {
    let mut cross = BTreeMap::new();
    let mut mu = BTreeMap::new();
    for (j, term, value) in pairs {
        log.push(ProvenanceEntry::pair(DesignStep::CouplingGain, i, j));
        log.push(ProvenanceEntry::pair(DesignStep::CouplingScale, i, j));
        cross.insert(j, term);
        mu.insert(j, value);
    }
    let gains = EstimatorGains {
        local_gain: part.local_gain,
        closed_loop: part.closed_loop,
        cross,
    };
    let delta_suggestion = suggest_delta_revision(&gains);
    SubsystemDesign {
        gains,
        contractive: part.contractive,
        alpha: part.alpha,
        mu,
        delta_suggestion,
    }
}

impl DesignReport {
    pub fn require_success(&self) -> Result<(&ThetaSystem, &ThetaInvariantSet), DesignError> {
        match (&self.status, &self.theta_system, &self.invariant_set) {
            (DesignStatus::Success, Some(ts), Some(tis)) => Ok((ts, tis)),
            (DesignStatus::Success, _, _) => Err(DesignError::Mismatch(
                "successful design lacks its scaling-factor data".into(),
            )),
            (s, _, _) => Err(DesignError::NotSuccessful(s.clone())),
        }
    }

    pub fn check_against(&self, model: &NetworkModel) -> Result<(), DesignError> {
        if self.subsystems.len() != model.len() {
            return Err(DesignError::Mismatch(format!(
                "design has {} subsystems, model has {}",
                self.subsystems.len(),
                model.len()
            )));
        }
        for (i, (d, s)) in self.subsystems.iter().zip(&model.subsystems).enumerate() {
            let n = s.state_dim();
            if d.contractive.set.dim() != n
                || d.gains.closed_loop.nrows() != n
                || d.gains.local_gain.shape() != (n, s.output_dim())
            {
                return Err(DesignError::Mismatch(format!("subsystem {i} dimensions differ")));
            }
            let parents: Vec<usize> = s.parents().collect();
            let crossed: Vec<usize> = d.gains.cross.keys().copied().collect();
            if parents != crossed {
                return Err(DesignError::Mismatch(format!("subsystem {i} parents differ")));
            }
        }
        Ok(())
    }
}

/// Runs the sampled invariance check on a successful design.
pub fn verify_design(
    model: &NetworkModel,
    report: &DesignReport,
    samples: usize,
    seed: u64,
) -> Result<PrpiReport, DesignError> {
    let (ts, tis) = report.require_success()?;
    report.check_against(model)?;
    let cross: Vec<Vec<(usize, Matrix)>> = report
        .subsystems
        .iter()
        .map(|d| d.gains.cross.iter().map(|(&j, t)| (j, t.block.clone())).collect())
        .collect();
    let subs: Vec<PrpiSubsystem> = report
        .subsystems
        .iter()
        .zip(&model.subsystems)
        .zip(&cross)
        .map(|((d, s), c)| PrpiSubsystem {
            set: &d.contractive.set,
            error_bound: &s.error_bound,
            closed_loop: &d.gains.closed_loop,
            cross: c,
            d: &s.d,
            disturbance: &s.disturbance,
        })
        .collect();
    Ok(verify_prpi(&subs, ts, tis, samples, seed)?)
}

/// Which generator of `S_i` seeds the initial error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum GeneratorChoice {
    #[default]
    First,
    Index(usize),
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitPolicy {
    /// `θ(0)` as a fraction of the inner-box corner.
    pub fraction: f64,
    pub generator: GeneratorChoice,
}

impl Default for InitPolicy {
    fn default() -> Self {
        InitPolicy {
            fraction: 1.0,
            generator: GeneratorChoice::First,
        }
    }
}

/// Initial estimates `x̃_i(0) = x_i(0) − θ_i(0)·v_i` with `v_i` a generator of
/// `S_i`, and the matching `θ(0)`.
pub fn decentralized_init<R: Rng>(
    report: &DesignReport,
    true_states: &[Vector],
    policy: &InitPolicy,
    rng: &mut R,
) -> Result<(Vec<Vector>, Vector), DesignError> {
    let (_, tis) = report.require_success()?;
    if true_states.len() != report.subsystems.len() {
        return Err(DesignError::Mismatch(format!(
            "{} initial states for {} subsystems",
            true_states.len(),
            report.subsystems.len()
        )));
    }
    if !(0.0..=1.0).contains(&policy.fraction) {
        return Err(DesignError::Mismatch(format!(
            "initial fraction {} outside [0, 1]",
            policy.fraction
        )));
    }
    let theta0 = Vector::from_iterator(tis.dim(), tis.inner_box.iter().map(|b| b * policy.fraction));
    let mut estimates = Vec::with_capacity(true_states.len());
    for (i, (d, x)) in report.subsystems.iter().zip(true_states).enumerate() {
        let set = &d.contractive.set;
        if x.len() != set.dim() {
            return Err(DesignError::Mismatch(format!("state {i} has the wrong dimension")));
        }
        let k = match policy.generator {
            GeneratorChoice::First => 0,
            GeneratorChoice::Index(k) => k % set.len(),
            GeneratorChoice::Random => rng.random_range(0..set.len()),
        };
        estimates.push(x - set.generator(k) * theta0[i]);
    }
    Ok((estimates, theta0))
}
