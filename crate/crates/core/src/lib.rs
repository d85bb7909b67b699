//! Partition-based distributed state estimation for coupled linear subsystems
//! with bounded disturbances.
//!
//! Each subsystem gets a local Luenberger estimator. Bounded estimation errors
//! are certified through a family of scaled sets `θ_i·S_i` whose scalings obey
//! the low-order recursion `θ⁺ = Tθ + α`.

// Negated comparisons are used on purpose so NaN fails every validity check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exec;
pub mod numerics;
pub mod sets;
pub mod formats;
pub mod observer;
pub mod invariance;
pub mod design;
pub mod powergrid;
pub mod simulation;
