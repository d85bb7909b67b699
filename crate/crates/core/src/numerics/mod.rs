//! Dense linear algebra helpers and a small dense simplex solver.
//!
//! Everything in here is a pure function of its inputs. Tolerances used by the
//! set computations live in [`Tolerances`] so containment checks across modules
//! share the same slack.

mod linalg;
mod lp;

pub use linalg::{
    ensure_finite, frobenius_norm, infinity_norm, matrix_exponential, matrix_from_rows,
    matrix_power, pseudo_inverse, solve_linear, spectral_radius,
};
pub use lp::{solve_lp, solve_lp_with, LpOutcome, LpProblem, LpStatus, SimplexOptions};

use thiserror::Error;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    SingularMatrix { condition: f64 },
    #[error("non-finite entry encountered")]
    NonFinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("simplex exceeded the pivot cap of {pivots}")]
    CycleLimitExceeded { pivots: usize },
}

/// Numerical slack shared by every module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Primal feasibility / optimality slack of the simplex solver.
    pub lp: f64,
    /// Slack for generator-vs-row containment and gauge comparisons.
    pub containment: f64,
    /// Slack for the sampled invariance checks on scaled sets.
    pub invariance: f64,
    /// Relative gauge slack under which a generator counts as redundant.
    pub prune: f64,
    /// Minimum LP improvement for a Gilbert-Tan row to count as non-redundant.
    pub redundancy: f64,
    /// Condition-number limit for linear solves.
    pub condition_limit: f64,
    /// Entries below this magnitude (relative) are treated as exact zeros.
    pub zero: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        lp: 1e-9,
        containment: 1e-9,
        invariance: 1e-7,
        prune: 1e-9,
        redundancy: 1e-9,
        condition_limit: 1e12,
        zero: 1e-12,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
