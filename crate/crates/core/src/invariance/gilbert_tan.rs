use serde::{Deserialize, Serialize};

use super::{InvarianceError, ThetaSystem};
use crate::numerics::{solve_lp, LpProblem, LpStatus, Matrix, Tolerances, Vector};

pub const DEFAULT_K_STAR_CAP: usize = 1000;

/// One half-space `normal·θ ≤ rhs` of `Θ∞`, produced at propagation step `step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub normal: Vec<f64>,
    pub rhs: f64,
    pub step: usize,
}

/// `Θ∞ ∩ ℝ₊ᴹ` in half-space form plus the inner box `∏[0, box_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaInvariantSet {
    pub rows: Vec<ThetaRow>,
    pub k_star: usize,
    #[serde(rename = "box")]
    pub inner_box: Vec<f64>,
}

impl ThetaInvariantSet {
    pub fn dim(&self) -> usize {
        self.inner_box.len()
    }

    /// Smallest `rhs − normal·θ` over all rows.
    pub fn margin(&self, theta: &Vector) -> f64 {
        self.rows
            .iter()
            .map(|r| r.rhs - r.normal.iter().zip(theta.iter()).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, theta: &Vector, tol: f64) -> bool {
        theta.iter().all(|&v| v >= -tol) && self.margin(theta) >= -tol
    }

    /// Maximizes `objective·θ` over the set (θ ≥ 0).
    pub fn maximize(&self, objective: &[f64]) -> Result<(f64, Vec<f64>), InvarianceError> {
        let mut lp = LpProblem::maximize(objective.to_vec());
        lp.nonnegative();
        for r in &self.rows {
            lp.at_most(r.normal.clone(), r.rhs);
        }
        let out = solve_lp(&lp)?;
        match out.status {
            LpStatus::Optimal => Ok((out.value, out.optimizer.expect("optimal"))),
            LpStatus::Infeasible => Err(InvarianceError::EmptySet),
            LpStatus::Unbounded => Err(InvarianceError::Postcondition("unbounded Θ∞".into())),
        }
    }

    /// The set with coordinate `q` fixed to zero and removed.
    pub fn slice_without(&self, q: usize) -> ThetaInvariantSet {
        let rows = self
            .rows
            .iter()
            .map(|r| ThetaRow {
                normal: r
                    .normal
                    .iter()
                    .enumerate()
                    .filter(|&(c, _)| c != q)
                    .map(|(_, &v)| v)
                    .collect(),
                rhs: r.rhs,
                step: r.step,
            })
            .collect();
        let inner_box = self
            .inner_box
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != q)
            .map(|(_, &v)| v)
            .collect();
        ThetaInvariantSet {
            rows,
            k_star: self.k_star,
            inner_box,
        }
    }
}

pub fn maximal_invariant_set(ts: &ThetaSystem) -> Result<ThetaInvariantSet, InvarianceError> {
    maximal_invariant_set_with(ts, DEFAULT_K_STAR_CAP)
}

/// Finitely determined maximal invariant subset of `Θ₀` for `θ⁺ = Tθ + α`.
///
/// Rows `e_iᵀT^kθ ≤ θ̃_i − e_iᵀ Σ_{j<k} T^j α` are generated for increasing `k`
/// until every new row is implied by the current ones (one LP per row).
pub fn maximal_invariant_set_with(ts: &ThetaSystem, cap: usize) -> Result<ThetaInvariantSet, InvarianceError> {
    let m = ts.dim();
    if !ts.is_schur() {
        return Err(InvarianceError::NotSchur {
            rho: ts.spectral_radius,
        });
    }
    let theta_bar = ts.theta_bar.as_ref().ok_or(InvarianceError::NotSchur {
        rho: ts.spectral_radius,
    })?;
    for i in 0..m {
        if !(theta_bar[i] <= ts.theta0_upper[i] - 1e-9) {
            return Err(InvarianceError::InteriorViolation {
                component: i,
                theta_bar: theta_bar[i],
                upper: ts.theta0_upper[i],
            });
        }
    }
    let finite_upper = ts.theta0_upper.iter().all(|v| v.is_finite());
    if !finite_upper {
        return Err(InvarianceError::Postcondition(
            "Θ₀ must be bounded in every component".into(),
        ));
    }

    let mut rows: Vec<ThetaRow> = (0..m)
        .map(|i| {
            let mut normal = vec![0.0; m];
            normal[i] = 1.0;
            ThetaRow {
                normal,
                rhs: ts.theta0_upper[i],
                step: 0,
            }
        })
        .collect();
    let mut power: Matrix = ts.t.clone();
    let mut offset: Vector = ts.alpha.clone();
    let redundancy = Tolerances::DEFAULT.redundancy;
    let mut k = 1;
    loop {
        if k > cap {
            return Err(InvarianceError::KStarCap { cap });
        }
        let current = ThetaInvariantSet {
            rows: rows.clone(),
            k_star: 0,
            inner_box: vec![0.0; m],
        };
        let mut added = Vec::new();
        for i in 0..m {
            let normal: Vec<f64> = power.row(i).iter().copied().collect();
            let rhs = ts.theta0_upper[i] - offset[i];
            if normal.iter().all(|&v| v == 0.0) && rhs >= 0.0 {
                continue;
            }
            let (value, _) = current.maximize(&normal)?;
            if value > rhs + redundancy {
                added.push(ThetaRow { normal, rhs, step: k });
            }
        }
        if added.is_empty() {
            let k_star = k - 1;
            let mut set = ThetaInvariantSet {
                rows,
                k_star,
                inner_box: vec![0.0; m],
            };
            set.inner_box = inner_box(&set)?;
            return Ok(set);
        }
        rows.extend(added);
        offset = &power * &ts.alpha + offset;
        power = &power * &ts.t;
        k += 1;
    }
}

/// Inner box `∏[0, θ*_i]` with `θ*` maximizing `Σ θ_i / max_{Θ∞} θ_i`.
///
/// Ties on the optimal face are broken by maximizing the smallest normalized
/// component, which centers the corner on the face. The corner is then checked
/// against every row (enough since all normals are nonnegative) and shrunk if
/// rounding pushed it outside.
pub fn inner_box(set: &ThetaInvariantSet) -> Result<Vec<f64>, InvarianceError> {
    let m = set.dim();
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut gamma = vec![0.0; m];
    for i in 0..m {
        let mut e = vec![0.0; m];
        e[i] = 1.0;
        let (top, _) = set.maximize(&e)?;
        if top > 0.0 {
            gamma[i] = 1.0 / top;
        }
    }
    let active: Vec<usize> = (0..m).filter(|&i| gamma[i] > 0.0).collect();
    if active.is_empty() {
        return Ok(vec![0.0; m]);
    }
    let (best, _) = set.maximize(&gamma)?;

    // variables θ_1..θ_m, s; maximize s on the optimal face
    let mut obj = vec![0.0; m + 1];
    obj[m] = 1.0;
    let mut lp = LpProblem::maximize(obj);
    lp.nonnegative();
    for r in &set.rows {
        let mut row = r.normal.clone();
        row.push(0.0);
        lp.at_most(row, r.rhs);
    }
    let mut face = gamma.clone();
    face.push(0.0);
    lp.at_least(face, best - 1e-9 * best.abs().max(1.0));
    for &i in &active {
        let mut row = vec![0.0; m + 1];
        row[i] = gamma[i];
        row[m] = -1.0;
        lp.at_least(row, 0.0);
    }
    let out = solve_lp(&lp)?;
    let mut corner = match out.status {
        LpStatus::Optimal => out.optimizer.expect("optimal")[..m].to_vec(),
        _ => set.maximize(&gamma)?.1,
    };
    for (i, c) in corner.iter_mut().enumerate() {
        if gamma[i] == 0.0 || *c < 0.0 {
            *c = 0.0;
        }
    }

    let mut shrink: f64 = 1.0;
    for r in &set.rows {
        let v: f64 = r.normal.iter().zip(&corner).map(|(a, b)| a * b).sum();
        if v > r.rhs {
            shrink = shrink.min((r.rhs / v).max(0.0));
        }
    }
    if shrink < 1.0 {
        corner.iter_mut().for_each(|c| *c *= shrink);
    }
    let theta = Vector::from_vec(corner.clone());
    if set.margin(&theta) < -Tolerances::DEFAULT.redundancy {
        return Err(InvarianceError::Postcondition(
            "inner box corner violates Θ∞".into(),
        ));
    }
    Ok(corner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invariance::ThetaSystem;
    use crate::numerics::spectral_radius;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn system(t: Matrix, alpha: Vector, upper: Vector) -> ThetaSystem {
        let m = t.nrows();
        let rho = spectral_radius(&t).unwrap();
        let bar = crate::numerics::solve_linear(&(Matrix::identity(m, m) - &t), &alpha).unwrap();
        ThetaSystem {
            t,
            alpha,
            theta0_upper: upper,
            spectral_radius: rho,
            theta_bar: Some(bar),
        }
    }

    #[test]
    fn diagonal_contraction_keeps_box() {
        let ts = system(dmatrix![0.5, 0.0; 0.0, 0.5], dvector![0.0, 0.0], dvector![1.0, 1.0]);
        let s = maximal_invariant_set(&ts).unwrap();
        assert_eq!(s.k_star, 0);
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.inner_box, vec![1.0, 1.0]);
        let ts = system(dmatrix![0.5, 0.0; 0.0, 0.8], dvector![0.3, 0.1], dvector![1.0, 1.0]);
        let s = maximal_invariant_set(&ts).unwrap();
        assert_eq!(s.k_star, 0);
    }

    #[test]
    fn coupled_adds_a_row() {
        let ts = system(dmatrix![0.5, 0.4; 0.0, 0.5], dvector![0.0, 0.0], dvector![1.0, 1.0]);
        let s = maximal_invariant_set(&ts).unwrap();
        // 0.5 + 0.4 > 1 is false, so the first step is redundant: the box is invariant
        assert_eq!(s.k_star, 0);
        let ts = system(dmatrix![0.5, 0.8; 0.0, 0.5], dvector![0.0, 0.0], dvector![1.0, 1.0]);
        let s = maximal_invariant_set(&ts).unwrap();
        assert!(s.k_star >= 1);
        assert!(s.rows.iter().any(|r| r.normal == vec![0.5, 0.8] && r.rhs == 1.0));
        // invariance of the corner image
        let corner = Vector::from_vec(s.inner_box.clone());
        assert!(s.contains(&ts.step(&corner), 1e-9));
    }

    #[test]
    fn interior_violation() {
        let ts = system(dmatrix![0.5], dvector![0.5], dvector![1.0]);
        assert!(matches!(
            maximal_invariant_set(&ts),
            Err(InvarianceError::InteriorViolation { component: 0, .. })
        ));
    }

    #[test]
    fn inner_box_examples() {
        let simplex = ThetaInvariantSet {
            rows: vec![ThetaRow {
                normal: vec![1.0, 1.0],
                rhs: 1.0,
                step: 0,
            }],
            k_star: 0,
            inner_box: vec![0.0, 0.0],
        };
        let b = inner_box(&simplex).unwrap();
        assert_relative_eq!(b[0], 0.5, epsilon = 1e-9);
        assert_relative_eq!(b[1], 0.5, epsilon = 1e-9);
        assert!(b[0] + b[1] <= 1.0 + 1e-9);

        let point = ThetaInvariantSet {
            rows: vec![
                ThetaRow { normal: vec![1.0, 0.0], rhs: 0.0, step: 0 },
                ThetaRow { normal: vec![0.0, 1.0], rhs: 0.0, step: 0 },
            ],
            k_star: 0,
            inner_box: vec![0.0, 0.0],
        };
        assert_eq!(inner_box(&point).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn cap_is_enforced() {
        let ts = system(dmatrix![0.5, 0.8; 0.0, 0.5], dvector![0.0, 0.0], dvector![1.0, 1.0]);
        assert!(matches!(
            maximal_invariant_set_with(&ts, 0),
            Err(InvarianceError::KStarCap { cap: 0 })
        ));
    }
}
