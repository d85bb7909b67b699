use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    analyse, build_subsystem_design, coupling_part, is_strongly_connected, local_part, DesignConfig,
    DesignError, DesignReport, DesignStatus, LocalOutcome, NetworkModel, ProvenanceEntry,
};
use crate::design::DesignStep;
use crate::invariance::{maximal_invariant_set_with, ThetaInvariantSet};
use crate::numerics::{Tolerances, Vector};
use crate::observer::{suggest_delta_revision, Coupling, Subsystem};

/// Number of sampled points for the slice-invariance check after unplugging.
pub const UNPLUG_SAMPLES: usize = 100;

/// A new subsystem together with the couplings it induces on existing ones
/// (`children[k]` is the block `A_{k,new}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlugInRequest {
    pub subsystem: Subsystem,
    #[serde(default)]
    pub children: BTreeMap<usize, Coupling>,
}

/// Adds a subsystem, redoing local synthesis only for it, coupling synthesis
/// for its parent links and its children's links to it, and the
/// scaling-factor analysis once.
pub fn plug_in(
    report: &DesignReport,
    model: &NetworkModel,
    request: &PlugInRequest,
    config: &DesignConfig,
) -> Result<(NetworkModel, DesignReport), DesignError> {
    report.require_success()?;
    report.check_against(model)?;
    let new = model.len();
    let mut grown = model.clone();
    grown.subsystems.push(request.subsystem.clone());
    for (&k, coupling) in &request.children {
        if k >= new {
            return Err(DesignError::InvalidIndex { index: k, count: new });
        }
        grown.subsystems[k].couplings.insert(new, coupling.clone());
    }
    grown.validate()?;

    let mut log = vec![ProvenanceEntry::local(DesignStep::LocalGain, new)];
    let part = match local_part(new, &grown.subsystems[new])? {
        LocalOutcome::Done(p) => *p,
        LocalOutcome::Stopped(status) => return Err(DesignError::PlugInRejected(status)),
    };
    log.push(ProvenanceEntry::local(DesignStep::ContractiveSet, new));
    log.push(ProvenanceEntry::local(DesignStep::DisturbanceScale, new));

    let sub_new = &grown.subsystems[new];
    let mut pairs = Vec::new();
    for j in sub_new.parents() {
        let (term, mu) = coupling_part(
            sub_new,
            j,
            &grown.subsystems[j].c,
            &part.contractive.set,
            &report.subsystems[j].contractive.set,
            config.mode,
        )?;
        pairs.push((j, term, mu));
    }
    let new_set = part.contractive.set.clone();
    let mut subs = report.subsystems.clone();
    for &k in request.children.keys() {
        let (term, mu) = coupling_part(
            &grown.subsystems[k],
            new,
            &sub_new.c,
            &subs[k].contractive.set,
            &new_set,
            config.mode,
        )?;
        log.push(ProvenanceEntry::pair(DesignStep::CouplingGain, k, new));
        log.push(ProvenanceEntry::pair(DesignStep::CouplingScale, k, new));
        let d = &mut subs[k];
        d.gains.cross.insert(new, term);
        d.mu.insert(new, mu);
        d.delta_suggestion = suggest_delta_revision(&d.gains);
    }
    subs.push(build_subsystem_design(new, part, pairs, &mut log));

    let (status, ts, tis) = analyse(&grown, &subs, config.k_star_cap, &mut log)?;
    if !status.is_success() {
        return Err(DesignError::PlugInRejected(status));
    }
    Ok((
        grown,
        DesignReport {
            status: DesignStatus::Success,
            mode: report.mode,
            subsystems: subs,
            theta_system: Some(ts),
            invariant_set: tis,
            provenance: log,
        },
    ))
}

/// Numerical checks run after removing a subsystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnplugCheck {
    pub removed: usize,
    pub strongly_connected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    pub rho_before: f64,
    pub rho_after: f64,
    /// `ρ(T̂) ≤ ρ(T)`.
    pub spectral_radius_ok: bool,
    #[serde(with = "crate::formats::serde_matrix::vector")]
    pub theta_bar_after: Vector,
    /// `θ̂̄` inside the reduced admissible box.
    pub equilibrium_ok: bool,
    pub invariance_samples: usize,
    pub invariance_worst_margin: f64,
    /// `T̂θ̂ + α̂ ∈ Θ̂` on every sample.
    pub invariance_ok: bool,
    pub refreshed: bool,
}

impl UnplugCheck {
    pub fn all_passed(&self) -> bool {
        self.spectral_radius_ok && self.equilibrium_ok && self.invariance_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnplugOutcome {
    pub model: NetworkModel,
    pub report: DesignReport,
    pub check: UnplugCheck,
}

fn remap(j: usize, q: usize) -> usize {
    if j > q {
        j - 1
    } else {
        j
    }
}

fn rekey<V>(map: &mut BTreeMap<usize, V>, q: usize) {
    map.remove(&q);
    *map = std::mem::take(map).into_iter().map(|(j, v)| (remap(j, q), v)).collect();
}

/// Point of `set` drawn uniformly in its bounding box and, when outside,
/// scaled toward the origin onto the set (valid because the set is a lower set).
fn sample_in(set: &ThetaInvariantSet, upper: &[f64], rng: &mut ChaCha8Rng) -> Vector {
    let mut theta = Vector::from_iterator(
        upper.len(),
        upper.iter().map(|&u| if u > 0.0 { rng.random_range(0.0..=u) } else { 0.0 }),
    );
    let mut s: f64 = 1.0;
    for r in &set.rows {
        let v: f64 = r.normal.iter().zip(theta.iter()).map(|(a, b)| a * b).sum();
        if v > r.rhs {
            s = s.min((r.rhs / v).max(0.0));
        }
    }
    theta *= s;
    theta
}

/// Removes subsystem `q` without redesigning the others and checks that the
/// reduced scaling-factor system keeps the certified properties.
///
/// With `refresh` the reduced maximal invariant set is recomputed instead of
/// taking the `θ_q = 0` slice of the original one.
pub fn unplug(
    report: &DesignReport,
    model: &NetworkModel,
    q: usize,
    refresh: bool,
    seed: u64,
) -> Result<UnplugOutcome, DesignError> {
    let (ts, tis) = report.require_success()?;
    report.check_against(model)?;
    let m = model.len();
    if q >= m {
        return Err(DesignError::InvalidIndex { index: q, count: m });
    }
    if m == 1 {
        return Err(DesignError::Mismatch("cannot remove the only subsystem".into()));
    }
    let strongly_connected = is_strongly_connected(model);

    let mut reduced = model.clone();
    reduced.subsystems.remove(q);
    for s in &mut reduced.subsystems {
        rekey(&mut s.couplings, q);
    }
    let mut subs = report.subsystems.clone();
    subs.remove(q);
    for d in &mut subs {
        rekey(&mut d.gains.cross, q);
        rekey(&mut d.mu, q);
        rekey(&mut d.delta_suggestion, q);
    }

    let keep: Vec<usize> = (0..m).filter(|&i| i != q).collect();
    let ts_hat = ts.restrict(&keep)?;
    let tis_hat = if refresh {
        maximal_invariant_set_with(&ts_hat, crate::invariance::DEFAULT_K_STAR_CAP)?
    } else {
        tis.slice_without(q)
    };

    let spectral_radius_ok = ts_hat.spectral_radius <= ts.spectral_radius + 1e-12;
    let theta_bar_after = ts_hat
        .theta_bar
        .clone()
        .unwrap_or_else(|| Vector::from_element(keep.len(), f64::INFINITY));
    let equilibrium_ok = theta_bar_after
        .iter()
        .zip(ts_hat.theta0_upper.iter())
        .all(|(b, u)| *b <= u + 1e-12);

    let mut upper = Vec::with_capacity(keep.len());
    for i in 0..keep.len() {
        let mut e = vec![0.0; keep.len()];
        e[i] = 1.0;
        upper.push(tis_hat.maximize(&e)?.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for _ in 0..UNPLUG_SAMPLES {
        let theta = sample_in(&tis_hat, &upper, &mut rng);
        worst = worst.min(tis_hat.margin(&ts_hat.step(&theta)));
    }
    let invariance_ok = worst >= -Tolerances::DEFAULT.redundancy;

    let warning = (!strongly_connected).then(|| {
        "coupling graph is not strongly connected; the spectral-radius guarantee for removals \
         is stated for strongly connected graphs, the numerical checks still ran"
            .to_string()
    });
    let check = UnplugCheck {
        removed: q,
        strongly_connected,
        warning,
        rho_before: ts.spectral_radius,
        rho_after: ts_hat.spectral_radius,
        spectral_radius_ok,
        theta_bar_after,
        equilibrium_ok,
        invariance_samples: UNPLUG_SAMPLES,
        invariance_worst_margin: worst,
        invariance_ok,
        refreshed: refresh,
    };
    let out_report = DesignReport {
        status: DesignStatus::Success,
        mode: report.mode,
        subsystems: subs,
        theta_system: Some(ts_hat),
        invariant_set: Some(tis_hat),
        provenance: Vec::new(),
    };
    Ok(UnplugOutcome {
        model: reduced,
        report: out_report,
        check,
    })
}
