use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{InvarianceError, ThetaInvariantSet, ThetaSystem};
use crate::exec;
use crate::numerics::{Matrix, Tolerances, Vector};
use crate::sets::{linear_image, minkowski_sum_all, prune_generators, scale, ConvexBody, HPolytope};

/// Combination count above which the scaled pieces are summed and pruned
/// instead of enumerated.
const MAX_COMBINATIONS: usize = 4096;
const MAX_REPORTED: usize = 32;

/// What one subsystem contributes to the invariance check.
#[derive(Debug, Clone, Copy)]
pub struct PrpiSubsystem<'a> {
    pub set: &'a ConvexBody,
    pub error_bound: &'a HPolytope,
    pub closed_loop: &'a Matrix,
    /// `(j, Ā_ij)` for every parent.
    pub cross: &'a [(usize, Matrix)],
    pub d: &'a Matrix,
    pub disturbance: &'a ConvexBody,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrpiCondition {
    /// `θ_i S_i ⊆ E_i`.
    ErrorBound,
    /// One-step image inside `θ⁺_i S_i`.
    Propagation,
    /// `θ⁺ ∈ Θ∞`.
    ThetaInvariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrpiViolation {
    pub condition: PrpiCondition,
    pub subsystem: Option<usize>,
    pub theta: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrpiReport {
    pub passed: bool,
    pub samples_checked: usize,
    pub worst_margin_error_bound: f64,
    pub worst_margin_propagation: f64,
    pub worst_margin_theta: f64,
    pub violations: Vec<PrpiViolation>,
}

impl PrpiReport {
    pub fn worst_margin(&self) -> f64 {
        self.worst_margin_error_bound
            .min(self.worst_margin_propagation)
            .min(self.worst_margin_theta)
    }
}

struct Pieces {
    own: ConvexBody,
    cross: Vec<(usize, ConvexBody)>,
    noise: ConvexBody,
    reach: f64,
}

/// Distinct corners of `∏[0, upper_i]` (degenerate sides contribute one value).
fn corners(upper: &[f64]) -> Vec<Vector> {
    let m = upper.len();
    let free: Vec<usize> = (0..m).filter(|&i| upper[i] > 0.0).collect();
    let count = 1usize << free.len().min(20);
    (0..count)
        .map(|mask| {
            let mut v = Vector::zeros(m);
            for (bit, &i) in free.iter().enumerate() {
                if mask >> bit & 1 == 1 {
                    v[i] = upper[i];
                }
            }
            v
        })
        .collect()
}

/// Largest gauge over `θ_i·own ⊕ Σ θ_j·cross_j ⊕ noise`, attained at a
/// combination of generators since the gauge is convex.
fn worst_gauge(p: &Pieces, set: &ConvexBody, theta: &Vector, i: usize) -> Result<f64, InvarianceError> {
    let mut parts: Vec<ConvexBody> = Vec::with_capacity(p.cross.len() + 2);
    parts.push(scale(&p.own, theta[i])?);
    for (j, body) in &p.cross {
        parts.push(scale(body, theta[*j])?);
    }
    parts.push(p.noise.clone());
    let combos = parts.iter().try_fold(1usize, |acc, b| acc.checked_mul(b.len()));
    let dim = set.dim();
    let points: Matrix = match combos {
        Some(c) if c <= MAX_COMBINATIONS => {
            let mut pts = Matrix::zeros(dim, c);
            for k in 0..c {
                let mut rest = k;
                let mut col = Vector::zeros(dim);
                for b in &parts {
                    col += b.points().column(rest % b.len());
                    rest /= b.len();
                }
                pts.set_column(k, &col);
            }
            pts
        }
        _ => minkowski_sum_all(parts.iter())?
            .expect("at least one part")
            .points()
            .clone(),
    };
    let worst = exec::try_max_range(points.ncols(), |k| set.gauge(&points.column(k).into_owned()))?;
    Ok(worst.max(0.0))
}

/// Sampled check that `{θ_i S_i}` is a practical robust positive invariant
/// family on the inner box: samples are the box corners plus `samples`
/// uniform draws from a ChaCha8 stream seeded with `seed`.
pub fn verify_prpi(
    subs: &[PrpiSubsystem<'_>],
    ts: &ThetaSystem,
    tis: &ThetaInvariantSet,
    samples: usize,
    seed: u64,
) -> Result<PrpiReport, InvarianceError> {
    let m = subs.len();
    if ts.dim() != m || tis.dim() != m {
        return Err(InvarianceError::DimensionMismatch(format!(
            "{m} subsystems, θ-system of order {}, box of order {}",
            ts.dim(),
            tis.dim()
        )));
    }
    let pieces: Vec<Pieces> = subs
        .iter()
        .map(|s| -> Result<Pieces, InvarianceError> {
            Ok(Pieces {
                own: prune_generators(&linear_image(s.closed_loop, s.set)?),
                cross: s
                    .cross
                    .iter()
                    .map(|(j, a)| -> Result<_, InvarianceError> {
                        Ok((*j, prune_generators(&linear_image(a, subs[*j].set)?)))
                    })
                    .collect::<Result<_, _>>()?,
                noise: prune_generators(&linear_image(s.d, s.disturbance)?),
                reach: s.error_bound.max_row_value(s.set)?,
            })
        })
        .collect::<Result<_, _>>()?;

    let mut thetas = corners(&tis.inner_box);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..samples {
        thetas.push(Vector::from_fn(m, |i, _| {
            let hi = tis.inner_box[i];
            if hi > 0.0 {
                rng.random_range(0.0..=hi)
            } else {
                0.0
            }
        }));
    }

    let tol_contain = Tolerances::DEFAULT.containment;
    let tol_inv = Tolerances::DEFAULT.invariance;
    let mut report = PrpiReport {
        passed: true,
        samples_checked: thetas.len(),
        worst_margin_error_bound: f64::INFINITY,
        worst_margin_propagation: f64::INFINITY,
        worst_margin_theta: f64::INFINITY,
        violations: Vec::new(),
    };
    let record = |report: &mut PrpiReport, v: PrpiViolation| {
        report.passed = false;
        if report.violations.len() < MAX_REPORTED {
            report.violations.push(v);
        }
    };
    for theta in &thetas {
        let next = ts.step(theta);
        for i in 0..m {
            let margin_a = 1.0 - theta[i] * pieces[i].reach;
            report.worst_margin_error_bound = report.worst_margin_error_bound.min(margin_a);
            if margin_a < -tol_contain {
                record(
                    &mut report,
                    PrpiViolation {
                        condition: PrpiCondition::ErrorBound,
                        subsystem: Some(i),
                        theta: theta.iter().copied().collect(),
                        margin: margin_a,
                    },
                );
            }
            let g = worst_gauge(&pieces[i], subs[i].set, theta, i)?;
            let margin_b = next[i] - g;
            report.worst_margin_propagation = report.worst_margin_propagation.min(margin_b);
            if margin_b < -tol_inv {
                record(
                    &mut report,
                    PrpiViolation {
                        condition: PrpiCondition::Propagation,
                        subsystem: Some(i),
                        theta: theta.iter().copied().collect(),
                        margin: margin_b,
                    },
                );
            }
        }
        let margin_c = tis.margin(&next);
        report.worst_margin_theta = report.worst_margin_theta.min(margin_c);
        if margin_c < -Tolerances::DEFAULT.redundancy {
            record(
                &mut report,
                PrpiViolation {
                    condition: PrpiCondition::ThetaInvariance,
                    subsystem: None,
                    theta: theta.iter().copied().collect(),
                    margin: margin_c,
                },
            );
        }
    }
    Ok(report)
}
