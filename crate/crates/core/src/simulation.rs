//! Closed simulation of the coupled plant and the local estimators, with the
//! scaling-factor recursion tracked alongside for monitoring.
//!
//! Randomness (initial generator choice, disturbances) comes from a single
//! ChaCha8 stream seeded by the configuration, so traces are reproducible
//! across platforms.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{decentralized_init, DesignError, DesignReport, InitPolicy, NetworkModel};
use crate::numerics::{Tolerances, Vector};
use crate::sets::{ConvexBody, SetError};

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("uniform sampling needs an axis-aligned box")]
    NotABox,
    #[error("subsystems have different state dimensions; the max-error metric is undefined")]
    HeterogeneousDims,
    #[error("at least one step is required")]
    ZeroSteps,
    #[error(transparent)]
    Design(#[from] DesignError),
    #[error(transparent)]
    Set(#[from] SetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceMode {
    #[default]
    None,
    Uniform,
}

/// Value `value` applied from step `start` until the next change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputChange {
    pub start: usize,
    pub value: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub disturbance: DisturbanceMode,
    /// Piecewise-constant input schedule per subsystem (zero before the first change).
    #[serde(default)]
    pub inputs: Vec<Vec<InputChange>>,
    #[serde(default)]
    pub init: InitPolicy,
    /// True initial states; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<Vec<f64>>>,
}

impl SimulationConfig {
    pub fn new(steps: usize, seed: u64) -> Self {
        SimulationConfig {
            steps,
            seed,
            disturbance: DisturbanceMode::None,
            inputs: Vec::new(),
            init: InitPolicy::default(),
            initial_states: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub states: Vec<Vec<f64>>,
    pub estimates: Vec<Vec<f64>>,
    pub errors: Vec<Vec<f64>>,
    pub theta: Vec<f64>,
    /// `e_i ∈ E_i`.
    pub in_bound: Vec<bool>,
    /// `gauge(S_i, e_i) ≤ θ_i`.
    pub in_scaled_set: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub steps: usize,
    pub violations: usize,
    /// `max_t max_i |e_{i,j}(t)|` per coordinate (empty for mixed dimensions).
    pub max_abs_error: Vec<f64>,
    pub final_error_inf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub records: Vec<StepRecord>,
}

impl SimulationTrace {
    pub fn violations(&self) -> usize {
        self.records
            .iter()
            .map(|r| {
                r.in_bound.iter().filter(|&&b| !b).count() + r.in_scaled_set.iter().filter(|&&b| !b).count()
            })
            .sum()
    }

    pub fn summary(&self) -> SimulationSummary {
        let max_abs_error = max_error_metric(self)
            .map(|series| {
                series
                    .iter()
                    .map(|s| s.iter().copied().fold(0.0, f64::max))
                    .collect()
            })
            .unwrap_or_default();
        let final_error_inf = self.records.last().map_or(0.0, |r| {
            r.errors
                .iter()
                .flatten()
                .map(|v| v.abs())
                .fold(0.0, f64::max)
        });
        SimulationSummary {
            steps: self.records.len().saturating_sub(1),
            violations: self.violations(),
            max_abs_error,
            final_error_inf,
        }
    }

    /// CSV with one row per step; see `csv_header` for the columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let Some(first) = self.records.first() else {
            return out;
        };
        let dims: Vec<usize> = first.states.iter().map(Vec::len).collect();
        out.push_str(&csv_header(&dims));
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{}", r.t);
            for i in 0..dims.len() {
                for group in [&r.states[i], &r.estimates[i], &r.errors[i]] {
                    for v in group {
                        let _ = write!(out, ",{v}");
                    }
                }
                let _ = write!(
                    out,
                    ",{},{},{}",
                    r.theta[i],
                    u8::from(r.in_bound[i]),
                    u8::from(r.in_scaled_set[i])
                );
            }
            out.push('\n');
        }
        out
    }
}

/// `t`, then per subsystem `i`: `x{i}_{k}`, `xhat{i}_{k}`, `e{i}_{k}` for each
/// state coordinate `k`, followed by `theta{i}`, `in_bound{i}`, `in_set{i}`.
pub fn csv_header(dims: &[usize]) -> String {
    let mut cols = vec!["t".to_string()];
    for (i, &n) in dims.iter().enumerate() {
        for prefix in ["x", "xhat", "e"] {
            cols.extend((0..n).map(|k| format!("{prefix}{i}_{k}")));
        }
        cols.push(format!("theta{i}"));
        cols.push(format!("in_bound{i}"));
        cols.push(format!("in_set{i}"));
    }
    cols.join(",")
}

/// Uniform sample from a box-shaped body (componentwise independent).
pub fn sample_disturbance<R: Rng>(w: &ConvexBody, rng: &mut R) -> Result<Vector, SimulationError> {
    let (lo, hi) = w.as_box().ok_or(SimulationError::NotABox)?;
    Ok(Vector::from_fn(w.dim(), |k, _| {
        if hi[k] > lo[k] {
            rng.random_range(lo[k]..=hi[k])
        } else {
            lo[k]
        }
    }))
}

/// `ẽ_j(t) = max_i |e_{i,j}(t)|`, one series per coordinate `j`.
pub fn max_error_metric(trace: &SimulationTrace) -> Result<Vec<Vec<f64>>, SimulationError> {
    let Some(first) = trace.records.first() else {
        return Ok(Vec::new());
    };
    let n = first.errors.first().map_or(0, Vec::len);
    if first.errors.iter().any(|e| e.len() != n) {
        return Err(SimulationError::HeterogeneousDims);
    }
    Ok((0..n)
        .map(|j| {
            trace
                .records
                .iter()
                .map(|r| r.errors.iter().map(|e| e[j].abs()).fold(0.0, f64::max))
                .collect()
        })
        .collect())
}

fn input_at(schedule: Option<&Vec<InputChange>>, t: usize, width: usize) -> Vector {
    schedule
        .and_then(|s| s.iter().filter(|c| c.start <= t).max_by_key(|c| c.start))
        .map_or_else(|| Vector::zeros(width), |c| Vector::from_column_slice(&c.value))
}

pub fn simulate(
    model: &NetworkModel,
    report: &DesignReport,
    config: &SimulationConfig,
) -> Result<SimulationTrace, SimulationError> {
    if config.steps == 0 {
        return Err(SimulationError::ZeroSteps);
    }
    let (ts, _) = report.require_success()?;
    report.check_against(model)?;
    let m = model.len();
    if !config.inputs.is_empty() && config.inputs.len() != m {
        return Err(SimulationError::DimensionMismatch(format!(
            "{} input schedules for {m} subsystems",
            config.inputs.len()
        )));
    }
    for (i, sched) in config.inputs.iter().enumerate() {
        let width = model.subsystems[i].input_dim();
        if sched.iter().any(|c| c.value.len() != width) {
            return Err(SimulationError::DimensionMismatch(format!(
                "input schedule {i} entries must have length {width}"
            )));
        }
    }
    let x0: Vec<Vector> = match &config.initial_states {
        Some(states) => {
            if states.len() != m {
                return Err(SimulationError::DimensionMismatch("initial state count".into()));
            }
            states.iter().map(|s| Vector::from_column_slice(s)).collect()
        }
        None => model.subsystems.iter().map(|s| Vector::zeros(s.state_dim())).collect(),
    };
    for (i, x) in x0.iter().enumerate() {
        if x.len() != model.subsystems[i].state_dim() {
            return Err(SimulationError::DimensionMismatch(format!(
                "initial state {i} has length {}",
                x.len()
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (estimates, theta0) = decentralized_init(report, &x0, &config.init, &mut rng)?;
    let mut x = x0;
    let mut xh = estimates;
    let mut theta = theta0;
    let tol = Tolerances::DEFAULT.invariance;

    let record = |t: usize, x: &[Vector], xh: &[Vector], theta: &Vector| -> Result<StepRecord, SimulationError> {
        let errors: Vec<Vector> = x.iter().zip(xh).map(|(a, b)| a - b).collect();
        let mut in_bound = Vec::with_capacity(m);
        let mut in_scaled_set = Vec::with_capacity(m);
        for (i, e) in errors.iter().enumerate() {
            in_bound.push(model.subsystems[i].error_bound.contains(e)?);
            let g = report.subsystems[i].contractive.set.gauge(e)?;
            in_scaled_set.push(g <= theta[i] + tol);
        }
        Ok(StepRecord {
            t,
            states: x.iter().map(|v| v.iter().copied().collect()).collect(),
            estimates: xh.iter().map(|v| v.iter().copied().collect()).collect(),
            errors: errors.iter().map(|v| v.iter().copied().collect()).collect(),
            theta: theta.iter().copied().collect(),
            in_bound,
            in_scaled_set,
        })
    };

    let mut records = Vec::with_capacity(config.steps + 1);
    records.push(record(0, &x, &xh, &theta)?);
    for t in 0..config.steps {
        let outputs_err: Vec<Vector> = model
            .subsystems
            .iter()
            .enumerate()
            .map(|(i, s)| &s.c * (&x[i] - &xh[i]))
            .collect();
        let mut x_next = Vec::with_capacity(m);
        let mut xh_next = Vec::with_capacity(m);
        for (i, s) in model.subsystems.iter().enumerate() {
            let u = input_at(config.inputs.get(i), t, s.input_dim());
            let w = match config.disturbance {
                DisturbanceMode::None => Vector::zeros(s.disturbance_dim()),
                DisturbanceMode::Uniform => sample_disturbance(&s.disturbance, &mut rng)?,
            };
            let gains = &report.subsystems[i].gains;
            let mut xn = &s.a * &x[i] + &s.b * &u + &s.d * &w;
            // estimator: x̃⁺ = A x̃ + B u + Σ A_ij x̃_j − L_ii(y_i − C_i x̃_i) − Σ δ_ij L_ij(y_j − C_j x̃_j)
            let mut xhn = &s.a * &xh[i] + &s.b * &u - &gains.local_gain * &outputs_err[i];
            for (&j, c) in &s.couplings {
                xn += &c.matrix * &x[j];
                xhn += &c.matrix * &xh[j];
                if c.use_output {
                    xhn -= &gains.cross[&j].gain * &outputs_err[j];
                }
            }
            x_next.push(xn);
            xh_next.push(xhn);
        }
        x = x_next;
        xh = xh_next;
        theta = ts.step(&theta);
        records.push(record(t + 1, &x, &xh, &theta)?);
    }
    Ok(SimulationTrace { records })
}
