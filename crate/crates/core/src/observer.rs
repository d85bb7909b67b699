//! Local and coupling gain synthesis for the Luenberger-type local estimators.
//!
//! Local gains place every eigenvalue of `A_ii + L_ii C_i` at the origin
//! (deadbeat). Coupling gains `L_ij` shrink the residual coupling
//! `A_ij + δ_ij L_ij C_j` that neighbors inject into the local error.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{pseudo_inverse, solve_lp, LpProblem, LpStatus, Matrix, NumericsError, Vector};
use crate::sets::{prune_generators, ConvexBody, HPolytope, SetError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthesisError {
    #[error("pair (A, C) is not observable: observability rank {rank} < {required}")]
    NotObservable { rank: usize, required: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Influence of parent `j` on subsystem `i`: the block `A_ij` and whether the
/// local estimator uses the parent's output (`δ_ij`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coupling {
    #[serde(with = "crate::formats::serde_matrix")]
    pub matrix: Matrix,
    pub use_output: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subsystem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(with = "crate::formats::serde_matrix")]
    pub a: Matrix,
    #[serde(with = "crate::formats::serde_matrix")]
    pub b: Matrix,
    #[serde(with = "crate::formats::serde_matrix")]
    pub c: Matrix,
    #[serde(with = "crate::formats::serde_matrix")]
    pub d: Matrix,
    /// Parents `j ∈ N_i`.
    #[serde(default)]
    pub couplings: BTreeMap<usize, Coupling>,
    /// Disturbance set `W_i` (generator form).
    pub disturbance: ConvexBody,
    /// Admissible error set `E_i`.
    pub error_bound: HPolytope,
    /// Seed set `S_i^0` of the contractive-set synthesis; defaults to the
    /// vertices of `E_i` when `E_i` is a centered box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_set: Option<ConvexBody>,
    /// Horizon `k_i`; defaults to the state dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

impl Subsystem {
    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.d.ncols()
    }

    pub fn parents(&self) -> impl Iterator<Item = usize> + '_ {
        self.couplings.keys().copied()
    }

    /// Seed set `S_i^0`, falling back to the vertex list of a box-shaped `E_i`.
    pub fn seed(&self) -> Option<ConvexBody> {
        if let Some(s) = &self.seed_set {
            return Some(s.clone());
        }
        let widths = self.error_bound.box_half_widths()?;
        ConvexBody::centered_box(&widths).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossTerm {
    /// `L_ij` (zero when `δ_ij = 0`).
    #[serde(with = "crate::formats::serde_matrix")]
    pub gain: Matrix,
    /// `Ā_ij = A_ij + δ_ij L_ij C_j`.
    #[serde(with = "crate::formats::serde_matrix")]
    pub block: Matrix,
    pub use_output: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorGains {
    /// `L_ii`.
    #[serde(with = "crate::formats::serde_matrix")]
    pub local_gain: Matrix,
    /// `Ā_ii = A_ii + L_ii C_i`.
    #[serde(with = "crate::formats::serde_matrix")]
    pub closed_loop: Matrix,
    #[serde(default)]
    pub cross: BTreeMap<usize, CrossTerm>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Closed-form minimizer of `‖A_ij + L C_j‖_F`.
    #[default]
    Frobenius,
    /// LP minimizing the containment factor of `Ā_ij S_j` in `S_i` directly.
    DirectMu,
}

fn observability_chains(f: &Matrix, g: &Matrix) -> (Vec<usize>, Vec<Vector>) {
    // Crate-ordered selection of g_1..g_p, F g_1..F g_p, ...
    let n = f.nrows();
    let p = g.ncols();
    let mut basis: Vec<Vector> = Vec::new(); // orthonormalized
    let mut chains: Vec<Vec<Vector>> = vec![Vec::new(); p];
    let mut alive = vec![true; p];
    let mut current: Vec<Vector> = (0..p).map(|j| g.column(j).into_owned()).collect();
    for _level in 0..n {
        for j in 0..p {
            if !alive[j] {
                continue;
            }
            let v = current[j].clone();
            let norm = v.norm();
            let mut r = v.clone();
            for q in &basis {
                let c = q.dot(&r);
                r -= q * c;
            }
            // second pass for numerical orthogonality
            for q in &basis {
                let c = q.dot(&r);
                r -= q * c;
            }
            if norm == 0.0 || r.norm() <= 1e-10 * norm || basis.len() == n {
                alive[j] = false;
                continue;
            }
            basis.push(&r / r.norm());
            chains[j].push(v);
            current[j] = f * &current[j];
        }
    }
    let lengths = chains.iter().map(Vec::len).collect();
    let ordered = chains.into_iter().flatten().collect();
    (lengths, ordered)
}

/// Rank of the observability matrix of `(a, c)`.
pub fn observability_rank(a: &Matrix, c: &Matrix) -> usize {
    let (lengths, _) = observability_chains(&a.transpose(), &c.transpose());
    lengths.iter().sum()
}

/// Gain `L` with `A + L C` nilpotent.
///
/// Works on the dual pair `(Aᵀ, Cᵀ)`: the controllability chains are selected
/// in crate order, the pair is brought to Luenberger controller form, and the
/// feedback cancels every block-end row so the closed loop becomes a block
/// shift. The nilpotency index equals the largest observability index.
pub fn design_deadbeat_gain(a: &Matrix, c: &Matrix) -> Result<Matrix, SynthesisError> {
    let n = a.nrows();
    if !a.is_square() || c.ncols() != n {
        return Err(SynthesisError::DimensionMismatch(format!(
            "A is {}x{}, C is {}x{}",
            a.nrows(),
            a.ncols(),
            c.nrows(),
            c.ncols()
        )));
    }
    let p = c.nrows();
    if n == 0 {
        return Ok(Matrix::zeros(0, p));
    }
    let f = a.transpose();
    let g = c.transpose();
    let (lengths, ordered) = observability_chains(&f, &g);
    let rank: usize = lengths.iter().sum();
    if rank < n {
        return Err(SynthesisError::NotObservable { rank, required: n });
    }
    let q = Matrix::from_columns(&ordered);
    let q_inv = q
        .clone()
        .try_inverse()
        .ok_or(SynthesisError::NotObservable { rank, required: n })?;

    let chain_cols: Vec<usize> = (0..p).filter(|&j| lengths[j] > 0).collect();
    let mut p_rows: Vec<nalgebra::RowDVector<f64>> = Vec::with_capacity(n);
    let mut ends = Vec::with_capacity(chain_cols.len());
    let mut offset = 0;
    for &j in &chain_cols {
        let k = lengths[j];
        let mut row = q_inv.row(offset + k - 1).into_owned();
        for _ in 0..k {
            p_rows.push(row.clone());
            row = &row * &f;
        }
        offset += k;
        ends.push(offset - 1);
    }
    let pm = Matrix::from_rows(&p_rows);
    let pm_inv = pm
        .clone()
        .try_inverse()
        .ok_or(SynthesisError::NotObservable { rank, required: n })?;
    let f_t = &pm * &f * &pm_inv;
    let g_sel = g.select_columns(&chain_cols);
    let g_t = &pm * &g_sel;
    let b_m = g_t.select_rows(&ends);
    let f_ends = f_t.select_rows(&ends);
    let k_sel_z = -b_m
        .lu()
        .solve(&f_ends)
        .ok_or(SynthesisError::NotObservable { rank, required: n })?;
    let k_sel = k_sel_z * &pm;
    let mut k = Matrix::zeros(p, n);
    for (r, &j) in chain_cols.iter().enumerate() {
        k.set_row(j, &k_sel.row(r));
    }
    Ok(k.transpose())
}

/// Gain `L_ij` reducing the coupling block `A_ij + L_ij C_j`.
pub fn design_coupling_gain(
    a_ij: &Matrix,
    c_j: &Matrix,
    s_i: &ConvexBody,
    s_j: &ConvexBody,
    mode: CouplingMode,
) -> Result<Matrix, SynthesisError> {
    if a_ij.ncols() != c_j.ncols() {
        return Err(SynthesisError::DimensionMismatch(format!(
            "A_ij has {} columns, C_j has {}",
            a_ij.ncols(),
            c_j.ncols()
        )));
    }
    if a_ij.iter().all(|&v| v == 0.0) {
        return Ok(Matrix::zeros(a_ij.nrows(), c_j.nrows()));
    }
    match mode {
        CouplingMode::Frobenius => Ok(-(a_ij * pseudo_inverse(c_j))),
        CouplingMode::DirectMu => direct_mu_gain(a_ij, c_j, s_i, s_j),
    }
}

fn direct_mu_gain(
    a_ij: &Matrix,
    c_j: &Matrix,
    s_i: &ConvexBody,
    s_j: &ConvexBody,
) -> Result<Matrix, SynthesisError> {
    let ni = a_ij.nrows();
    let pj = c_j.nrows();
    if s_i.dim() != ni || s_j.dim() != a_ij.ncols() {
        return Err(SynthesisError::DimensionMismatch(
            "set dimensions do not match the coupling block".into(),
        ));
    }
    s_i.ensure_c_set()?;
    s_j.ensure_c_set()?;
    let si = prune_generators(s_i);
    let sj = prune_generators(s_j);
    let (mi, mj) = (si.len(), sj.len());
    // variables: L (row-major ni*pj), mu, weights c[k][m]
    let n_l = ni * pj;
    let mu = n_l;
    let w0 = n_l + 1;
    let nvar = w0 + mj * mi;
    let mut obj = vec![0.0; nvar];
    obj[mu] = 1.0;
    let mut lp = LpProblem::minimize(obj);
    for v in mu..nvar {
        lp.lower_bound(v, 0.0);
    }
    for k in 0..mj {
        let v = sj.generator(k);
        let cv = c_j * &v;
        let av = a_ij * &v;
        for r in 0..ni {
            let mut row = vec![0.0; nvar];
            for m in 0..mi {
                row[w0 + k * mi + m] = si.points()[(r, m)];
            }
            for q in 0..pj {
                row[r * pj + q] = -cv[q];
            }
            lp.equal(row, av[r]);
        }
        let mut row = vec![0.0; nvar];
        row[w0 + k * mi..w0 + (k + 1) * mi].iter_mut().for_each(|x| *x = 1.0);
        row[mu] = -1.0;
        lp.at_most(row, 0.0);
    }
    let out = solve_lp(&lp)?;
    match out.status {
        LpStatus::Optimal => {
            let x = out.optimizer.expect("optimal outcome carries a point");
            Ok(Matrix::from_fn(ni, pj, |r, q| x[r * pj + q]))
        }
        // Ā_ij S_j may leave the cone of S_i for every L; fall back to least squares.
        _ => Ok(-(a_ij * pseudo_inverse(c_j))),
    }
}

/// Error-dynamics blocks `Ā_ii` and `Ā_ij` for the given gains.
pub fn assemble_error_blocks(
    sub: &Subsystem,
    local_gain: &Matrix,
    cross_gains: &BTreeMap<usize, Matrix>,
    output_maps: &BTreeMap<usize, Matrix>,
) -> Result<EstimatorGains, SynthesisError> {
    let closed_loop = &sub.a + local_gain * &sub.c;
    let mut cross = BTreeMap::new();
    for (&j, coupling) in &sub.couplings {
        let gain = if coupling.use_output {
            cross_gains
                .get(&j)
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(sub.state_dim(), output_maps[&j].nrows()))
        } else {
            let pj = output_maps.get(&j).map_or(0, |c| c.nrows());
            Matrix::zeros(sub.state_dim(), pj)
        };
        let block = if coupling.use_output {
            let c_j = output_maps.get(&j).ok_or_else(|| {
                SynthesisError::DimensionMismatch(format!("missing output map of parent {j}"))
            })?;
            &coupling.matrix + &gain * c_j
        } else {
            coupling.matrix.clone()
        };
        cross.insert(
            j,
            CrossTerm {
                gain,
                block,
                use_output: coupling.use_output,
            },
        );
    }
    Ok(EstimatorGains {
        local_gain: local_gain.clone(),
        closed_loop,
        cross,
    })
}

/// Parents whose coupling gain came out (numerically) zero: their outputs are
/// useless to the local estimator, so `δ_ij` can be switched off.
pub fn suggest_delta_revision(gains: &EstimatorGains) -> BTreeMap<usize, bool> {
    gains
        .cross
        .iter()
        .map(|(&j, t)| {
            let useless = crate::numerics::frobenius_norm(&t.gain) <= 1e-10;
            (j, t.use_output && !useless)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{frobenius_norm, matrix_power};
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    #[test]
    fn deadbeat_double_integrator() {
        let a = dmatrix![1.0, 1.0; 0.0, 1.0];
        let c = dmatrix![1.0, 0.0];
        let l = design_deadbeat_gain(&a, &c).unwrap();
        // A + LC = [[1+l1, 1],[l2, 1]]: trace 2+l1 = 0, det (1+l1) - l2 = 0
        assert_relative_eq!(l, dmatrix![-2.0; -1.0], epsilon = 1e-12);
        let cl = &a + &l * &c;
        assert!(frobenius_norm(&(&cl * &cl)) < 1e-12);
    }

    #[test]
    fn deadbeat_on_nilpotent_input() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let c = dmatrix![1.0, 0.0];
        let l = design_deadbeat_gain(&a, &c).unwrap();
        let cl = &a + &l * &c;
        assert!(frobenius_norm(&matrix_power(&cl, 2)) < 1e-12);
    }

    #[test]
    fn deadbeat_rejects_unobservable() {
        let a = Matrix::identity(2, 2);
        let c = dmatrix![1.0, 0.0];
        assert_eq!(
            design_deadbeat_gain(&a, &c),
            Err(SynthesisError::NotObservable {
                rank: 1,
                required: 2
            })
        );
    }

    #[test]
    fn deadbeat_multi_output_has_minimal_index() {
        // two decoupled double integrators observed through positions: index 2
        let a = dmatrix![
            1.0, 1.0, 0.0, 0.0;
            0.0, 1.0, 0.0, 0.0;
            0.0, 0.0, 1.0, 1.0;
            0.0, 0.0, 0.0, 1.0
        ];
        let c = dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 0.0, 1.0, 0.0];
        let l = design_deadbeat_gain(&a, &c).unwrap();
        let cl = &a + &l * &c;
        assert!(frobenius_norm(&matrix_power(&cl, 2)) < 1e-12);
    }

    #[test]
    fn deadbeat_with_duplicate_outputs() {
        let a = dmatrix![1.0, 1.0; 0.0, 1.0];
        let c = dmatrix![1.0, 0.0; 2.0, 0.0];
        let l = design_deadbeat_gain(&a, &c).unwrap();
        let cl = &a + &l * &c;
        assert!(frobenius_norm(&(&cl * &cl)) < 1e-12);
    }

    #[test]
    fn coupling_gain_cancels_measured_columns() {
        let a_ij = dmatrix![0.0, 0.0, 0.0, 0.0; 0.3, 0.0, 0.0, 0.0; 0.1, 0.0, 0.0, 0.0; 0.0, 0.0, 0.0, 0.0];
        let c_j = dmatrix![1.0, 0.0, 0.0, 0.0; 0.0, 1.0, 0.0, 0.0];
        let s = ConvexBody::unit_box(4);
        for mode in [CouplingMode::Frobenius, CouplingMode::DirectMu] {
            let l = design_coupling_gain(&a_ij, &c_j, &s, &s, mode).unwrap();
            let block = &a_ij + &l * &c_j;
            assert!(block.iter().all(|v| v.abs() < 1e-10), "{mode:?}: {block}");
        }
    }

    #[test]
    fn coupling_gain_examples() {
        let s = ConvexBody::unit_box(2);
        let zero = design_coupling_gain(
            &Matrix::zeros(2, 2),
            &dmatrix![1.0, 0.0],
            &s,
            &s,
            CouplingMode::Frobenius,
        )
        .unwrap();
        assert_eq!(zero, Matrix::zeros(2, 1));
        let l = design_coupling_gain(
            &dmatrix![0.4, 0.0; 0.0, 0.0],
            &dmatrix![1.0, 0.0],
            &s,
            &s,
            CouplingMode::Frobenius,
        )
        .unwrap();
        assert_relative_eq!(l, dmatrix![-0.4; 0.0], epsilon = 1e-14);
    }

    #[test]
    fn delta_revision() {
        let mut cross = BTreeMap::new();
        cross.insert(
            1,
            CrossTerm {
                gain: Matrix::zeros(2, 1),
                block: Matrix::identity(2, 2),
                use_output: true,
            },
        );
        cross.insert(
            2,
            CrossTerm {
                gain: dmatrix![5.0; 1.0],
                block: Matrix::zeros(2, 2),
                use_output: true,
            },
        );
        let g = EstimatorGains {
            local_gain: Matrix::zeros(2, 1),
            closed_loop: Matrix::zeros(2, 2),
            cross,
        };
        let rev = suggest_delta_revision(&g);
        assert!(!rev[&1]);
        assert!(rev[&2]);
        let lonely = EstimatorGains {
            cross: BTreeMap::new(),
            ..g
        };
        assert!(suggest_delta_revision(&lonely).is_empty());
    }
}
