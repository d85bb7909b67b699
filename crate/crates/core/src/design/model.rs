use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observer::Subsystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model has no subsystems")]
    Empty,
    #[error("subsystem {index}: {message}")]
    Subsystem { index: usize, message: String },
    #[error("subsystem {index} lists parent {parent}, which does not exist")]
    UnknownParent { index: usize, parent: usize },
    #[error("subsystem {index} lists itself as a parent")]
    SelfCoupling { index: usize },
    #[error("subsystem {index}: coupling from {parent} is identically zero")]
    ZeroCoupling { index: usize, parent: usize },
    #[error("subsystem {index}: error bound is not a box, so a seed set is required")]
    MissingSeed { index: usize },
}

/// Set of coupled subsystems `x_i⁺ = A_ii x_i + B_i u_i + Σ_j A_ij x_j + D_i w_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub subsystems: Vec<Subsystem>,
}

fn sub_err(index: usize, message: impl Into<String>) -> ModelError {
    ModelError::Subsystem {
        index,
        message: message.into(),
    }
}

impl NetworkModel {
    pub fn new(subsystems: Vec<Subsystem>) -> Result<Self, ModelError> {
        let m = NetworkModel { subsystems };
        m.validate()?;
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    /// Parents `N_i`.
    pub fn parents(&self, i: usize) -> Vec<usize> {
        self.subsystems[i].parents().collect()
    }

    /// Children `C_i = {k : i ∈ N_k}`.
    pub fn children(&self, i: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| self.subsystems[k].couplings.contains_key(&i))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.subsystems.is_empty() {
            return Err(ModelError::Empty);
        }
        let m = self.len();
        for (i, s) in self.subsystems.iter().enumerate() {
            validate_local(i, s)?;
            for (&j, c) in &s.couplings {
                if j == i {
                    return Err(ModelError::SelfCoupling { index: i });
                }
                if j >= m {
                    return Err(ModelError::UnknownParent { index: i, parent: j });
                }
                let nj = self.subsystems[j].state_dim();
                if c.matrix.nrows() != s.state_dim() || c.matrix.ncols() != nj {
                    return Err(sub_err(
                        i,
                        format!(
                            "coupling from {j} is {}x{}, expected {}x{}",
                            c.matrix.nrows(),
                            c.matrix.ncols(),
                            s.state_dim(),
                            nj
                        ),
                    ));
                }
                if c.matrix.iter().all(|&v| v == 0.0) {
                    return Err(ModelError::ZeroCoupling { index: i, parent: j });
                }
            }
        }
        Ok(())
    }
}

/// Checks that do not involve other subsystems.
pub(crate) fn validate_local(i: usize, s: &Subsystem) -> Result<(), ModelError> {
    let n = s.state_dim();
    if n == 0 {
        return Err(sub_err(i, "empty state"));
    }
    if !s.a.is_square() {
        return Err(sub_err(i, "A is not square"));
    }
    if s.b.nrows() != n || s.c.ncols() != n || s.d.nrows() != n {
        return Err(sub_err(i, "B, C or D does not match the state dimension"));
    }
    if s.disturbance.dim() != s.d.ncols() {
        return Err(sub_err(i, "disturbance set dimension differs from the columns of D"));
    }
    if s.error_bound.dim() != n {
        return Err(sub_err(i, "error bound dimension differs from the state dimension"));
    }
    // W and E must be C-sets: origin in W, E bounded with the origin inside.
    if s.disturbance.dim() > 0 && !s.disturbance.contains_origin() {
        return Err(sub_err(i, "disturbance set does not contain the origin"));
    }
    match &s.seed_set {
        Some(seed) => {
            if seed.dim() != n {
                return Err(sub_err(i, "seed set dimension differs from the state dimension"));
            }
        }
        None => {
            if s.error_bound.box_half_widths().is_none() {
                return Err(ModelError::MissingSeed { index: i });
            }
        }
    }
    if s.horizon == Some(0) {
        return Err(sub_err(i, "horizon must be at least 1"));
    }
    let finite = [&s.a, &s.b, &s.c, &s.d]
        .iter()
        .all(|m| m.iter().all(|v| v.is_finite()))
        && s.couplings.values().all(|c| c.matrix.iter().all(|v| v.is_finite()));
    if !finite {
        return Err(sub_err(i, "non-finite matrix entry"));
    }
    Ok(())
}

fn reach(count: usize, start: usize, next: impl Fn(usize) -> Vec<usize>) -> usize {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for w in next(v) {
            if w < count && seen.insert(w) {
                queue.push_back(w);
            }
        }
    }
    seen.len()
}

/// Whether the directed coupling graph (edge `j → i` for `j ∈ N_i`) is
/// strongly connected.
pub fn is_strongly_connected(model: &NetworkModel) -> bool {
    let m = model.len();
    if m <= 1 {
        return true;
    }
    reach(m, 0, |v| model.children(v)) == m && reach(m, 0, |v| model.parents(v)) == m
}
