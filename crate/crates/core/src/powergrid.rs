//! Multi-area load-frequency benchmark: linearized areas with primary control
//! coupled through tie lines, discretized exactly under a zero-order hold.
//!
//! Area states are `(Δθ, Δω, ΔP_m, ΔP_v)`; the known inputs are the governor
//! reference and the local load change `(ΔP_ref, ΔP_L)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{ModelError, NetworkModel};
use crate::numerics::{matrix_exponential, Matrix, NumericsError};
use crate::observer::{Coupling, Subsystem};
use crate::sets::{ConvexBody, HPolytope, SetError};

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILTIN_SCENARIOS: [&str; 3] = ["example1", "example2", "example3"];

const EXAMPLE1: &str = include_str!("../scenarios/example1.json");
const EXAMPLE2: &str = include_str!("../scenarios/example2.json");
const EXAMPLE3: &str = include_str!("../scenarios/example3.json");

#[derive(Debug, Error)]
pub enum PowerGridError {
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParameter { name: String, value: f64 },
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Inertia `H` (s).
    pub inertia: f64,
    /// Load damping coefficient.
    pub damping: f64,
    /// Turbine time constant `T_t` (s).
    pub turbine_time: f64,
    /// Governor time constant `T_g` (s).
    pub governor_time: f64,
    /// Speed droop `R`.
    pub droop: f64,
}

impl AreaParams {
    fn validate(&self, area: usize) -> Result<(), PowerGridError> {
        for (name, value) in [
            ("inertia", self.inertia),
            ("damping", self.damping),
            ("turbine_time", self.turbine_time),
            ("governor_time", self.governor_time),
            ("droop", self.droop),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(PowerGridError::NonPositiveParameter {
                    name: format!("areas[{area}].{name}"),
                    value,
                });
            }
        }
        Ok(())
    }
}

/// Tie line between areas `a` and `b` with stiffness `P_ab`; `reverse`
/// overrides `P_ba` when the configuration is asymmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TieLine {
    pub a: usize,
    pub b: usize,
    pub stiffness: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reverse: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Frequency deviation only.
    OmegaOnly,
    /// Angle and frequency deviations.
    ThetaOmega,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Sampling time (s).
    pub sampling_time: f64,
    pub areas: Vec<AreaParams>,
    pub tie_lines: Vec<TieLine>,
    pub outputs: OutputMode,
    /// Whether estimators use their parents' outputs.
    #[serde(default = "default_true")]
    pub use_neighbor_outputs: bool,
    /// Base error half widths per state coordinate.
    pub error_bounds: [f64; 4],
    /// Multiplier applied to `error_bounds`.
    #[serde(default = "default_one")]
    pub error_bound_scale: f64,
    /// Half width of the box of state disturbances (0 for none).
    #[serde(default)]
    pub disturbance_bound: f64,
}

fn default_true() -> bool {
    true
}

fn default_one() -> f64 {
    1.0
}

impl Scenario {
    pub fn builtin(name: &str) -> Result<Scenario, PowerGridError> {
        let text = match name {
            "example1" => EXAMPLE1,
            "example2" => EXAMPLE2,
            "example3" => EXAMPLE3,
            other => return Err(PowerGridError::UnknownScenario(other.to_string())),
        };
        Scenario::from_json(text)
    }

    pub fn from_json(text: &str) -> Result<Scenario, PowerGridError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), PowerGridError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(PowerGridError::Config(format!(
                "unsupported schema_version {}",
                self.schema_version
            )));
        }
        if self.areas.is_empty() {
            return Err(PowerGridError::Config("no areas".into()));
        }
        if !(self.sampling_time > 0.0) {
            return Err(PowerGridError::NonPositiveParameter {
                name: "sampling_time".into(),
                value: self.sampling_time,
            });
        }
        for (i, a) in self.areas.iter().enumerate() {
            a.validate(i)?;
        }
        for (k, t) in self.tie_lines.iter().enumerate() {
            if t.a >= self.areas.len() || t.b >= self.areas.len() || t.a == t.b {
                return Err(PowerGridError::Config(format!(
                    "tie_lines[{k}] joins invalid areas {} and {}",
                    t.a, t.b
                )));
            }
            for v in std::iter::once(t.stiffness).chain(t.reverse) {
                if !(v > 0.0) {
                    return Err(PowerGridError::NonPositiveParameter {
                        name: format!("tie_lines[{k}].stiffness"),
                        value: v,
                    });
                }
            }
        }
        for (k, &b) in self.error_bounds.iter().enumerate() {
            if !(b > 0.0) {
                return Err(PowerGridError::NonPositiveParameter {
                    name: format!("error_bounds[{k}]"),
                    value: b,
                });
            }
        }
        if !(self.error_bound_scale > 0.0) {
            return Err(PowerGridError::NonPositiveParameter {
                name: "error_bound_scale".into(),
                value: self.error_bound_scale,
            });
        }
        if !(self.disturbance_bound >= 0.0) {
            return Err(PowerGridError::Config("disturbance_bound must be nonnegative".into()));
        }
        Ok(())
    }

    /// Human-readable notes about asymmetric tie-line stiffness.
    pub fn warnings(&self) -> Vec<String> {
        self.tie_lines
            .iter()
            .filter_map(|t| match t.reverse {
                Some(r) if r != t.stiffness => Some(format!(
                    "tie line {}-{} is asymmetric ({} vs {})",
                    t.a, t.b, t.stiffness, r
                )),
                _ => None,
            })
            .collect()
    }

    /// `P_ij` for every ordered pair, keyed by the receiving area.
    pub fn neighbors(&self) -> Vec<BTreeMap<usize, f64>> {
        let mut out = vec![BTreeMap::new(); self.areas.len()];
        for t in &self.tie_lines {
            *out[t.a].entry(t.b).or_insert(0.0) += t.stiffness;
            *out[t.b].entry(t.a).or_insert(0.0) += t.reverse.unwrap_or(t.stiffness);
        }
        out
    }
}

/// Continuous-time area matrices: `A_ii`, the known-input matrix `B̄_i` and
/// the coupling blocks `A_ij`.
pub fn build_continuous(
    area: &AreaParams,
    neighbors: &BTreeMap<usize, f64>,
) -> Result<(Matrix, Matrix, BTreeMap<usize, Matrix>), PowerGridError> {
    area.validate(0)?;
    for (&j, &p) in neighbors {
        if !(p > 0.0) {
            return Err(PowerGridError::NonPositiveParameter {
                name: format!("stiffness to area {j}"),
                value: p,
            });
        }
    }
    let h2 = 2.0 * area.inertia;
    let total: f64 = neighbors.values().sum();
    let mut a = Matrix::zeros(4, 4);
    a[(0, 1)] = 1.0;
    a[(1, 0)] = -total / h2;
    a[(1, 1)] = -area.damping / h2;
    a[(1, 2)] = 1.0 / h2;
    a[(2, 2)] = -1.0 / area.turbine_time;
    a[(2, 3)] = 1.0 / area.turbine_time;
    a[(3, 1)] = -1.0 / (area.droop * area.governor_time);
    a[(3, 3)] = -1.0 / area.governor_time;
    let mut b = Matrix::zeros(4, 2);
    b[(3, 0)] = 1.0 / area.governor_time;
    b[(1, 1)] = -1.0 / h2;
    let couplings = neighbors
        .iter()
        .map(|(&j, &p)| {
            let mut m = Matrix::zeros(4, 4);
            m[(1, 0)] = p / h2;
            (j, m)
        })
        .collect();
    Ok((a, b, couplings))
}

/// Zero-order-hold discretization of `ẋ = A x + Σ_k G_k v_k`.
///
/// Uses one exponential of the augmented matrix `[[A, G_1 … G_K], [0, 0]]·Δ`;
/// the discrete state matrix is its top-left block and each discrete input
/// matrix the matching top-right block.
pub fn discretize(a: &Matrix, inputs: &[Matrix], dt: f64) -> Result<(Matrix, Vec<Matrix>), PowerGridError> {
    if !(dt > 0.0) {
        return Err(PowerGridError::NonPositiveParameter {
            name: "sampling_time".into(),
            value: dt,
        });
    }
    let n = a.nrows();
    if !a.is_square() || inputs.iter().any(|g| g.nrows() != n) {
        return Err(PowerGridError::Config("input matrices must have as many rows as A".into()));
    }
    let widths: Vec<usize> = inputs.iter().map(Matrix::ncols).collect();
    let total: usize = widths.iter().sum();
    let mut aug = Matrix::zeros(n + total, n + total);
    aug.view_mut((0, 0), (n, n)).copy_from(a);
    let mut col = n;
    for g in inputs {
        aug.view_mut((0, col), (n, g.ncols())).copy_from(g);
        col += g.ncols();
    }
    let e = matrix_exponential(&(aug * dt))?;
    let ad = e.view((0, 0), (n, n)).into_owned();
    let mut out = Vec::with_capacity(inputs.len());
    let mut col = n;
    for (g, w) in inputs.iter().zip(widths) {
        let mut block = e.view((0, col), (n, w)).into_owned();
        // an input that is identically zero stays zero
        if g.iter().all(|&v| v == 0.0) {
            block.fill(0.0);
        }
        out.push(block);
        col += w;
    }
    Ok((ad, out))
}

/// Discrete-time network model of the scenario.
pub fn build_scenario(s: &Scenario) -> Result<NetworkModel, PowerGridError> {
    s.validate()?;
    let neighbors = s.neighbors();
    let c = match s.outputs {
        OutputMode::OmegaOnly => Matrix::from_row_slice(1, 4, &[0.0, 1.0, 0.0, 0.0]),
        OutputMode::ThetaOmega => {
            Matrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])
        }
    };
    let half: Vec<f64> = s.error_bounds.iter().map(|b| b * s.error_bound_scale).collect();
    let error_bound = HPolytope::centered_box(&half)?;
    let disturbance = if s.disturbance_bound > 0.0 {
        ConvexBody::centered_box(&[s.disturbance_bound; 4])?
    } else {
        ConvexBody::origin(4)
    };
    let mut subsystems = Vec::with_capacity(s.areas.len());
    for (i, area) in s.areas.iter().enumerate() {
        let (a, b, coup) = build_continuous(area, &neighbors[i]).map_err(|e| match e {
            PowerGridError::NonPositiveParameter { name, value } => PowerGridError::NonPositiveParameter {
                name: format!("areas[{i}]: {name}"),
                value,
            },
            other => other,
        })?;
        let mut inputs = vec![b];
        inputs.extend(coup.values().cloned());
        inputs.push(Matrix::identity(4, 4));
        let (ad, mut blocks) = discretize(&a, &inputs, s.sampling_time)?;
        let d = blocks.pop().expect("disturbance block");
        let bd = blocks.remove(0);
        let couplings = coup
            .keys()
            .zip(blocks)
            .map(|(&j, m)| {
                (
                    j,
                    Coupling {
                        matrix: m,
                        use_output: s.use_neighbor_outputs,
                    },
                )
            })
            .collect();
        subsystems.push(Subsystem {
            name: area.name.clone(),
            a: ad,
            b: bd,
            c: c.clone(),
            d,
            couplings,
            disturbance: disturbance.clone(),
            error_bound: error_bound.clone(),
            seed_set: None,
            horizon: None,
        });
    }
    Ok(NetworkModel::new(subsystems)?)
}
