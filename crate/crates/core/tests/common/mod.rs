//! Independent oracles and random instance generators shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use dse_core::design::NetworkModel;
use dse_core::invariance::ThetaSystem;
use dse_core::numerics::{solve_linear, spectral_radius, Matrix, Vector};
use dse_core::observer::{observability_rank, Coupling, Subsystem};
use dse_core::sets::{ConvexBody, HPolytope};
use rand::Rng;

/// Random `(A, C)` with full observability rank.
pub fn random_observable_pair<R: Rng>(rng: &mut R, n: usize, p: usize) -> (Matrix, Matrix) {
    loop {
        let a = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let c = Matrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        if observability_rank(&a, &c) == n && observability_matrix_rank(&a, &c) == n {
            return (a, c);
        }
    }
}

/// Numerical rank of `[C; CA; …; CA^{n−1}]` through its singular values.
pub fn observability_matrix_rank(a: &Matrix, c: &Matrix) -> usize {
    let n = a.nrows();
    let p = c.nrows();
    let mut o = Matrix::zeros(n * p, n);
    let mut block = c.clone();
    for k in 0..n {
        o.view_mut((k * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    let sv = o.singular_values();
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-9 * top).count()
}

/// θ-system from `T`, `α` and `θ̃`.
pub fn theta_system(t: Matrix, alpha: Vector, upper: Vector) -> ThetaSystem {
    let m = t.nrows();
    let rho = spectral_radius(&t).unwrap();
    let bar = (rho < 1.0).then(|| solve_linear(&(Matrix::identity(m, m) - &t), &alpha).unwrap());
    ThetaSystem {
        t,
        alpha,
        theta0_upper: upper,
        spectral_radius: rho,
        theta_bar: bar,
    }
}

/// Random nonnegative 2×2 system with `ρ(T) ≤ 0.9` and the equilibrium well
/// inside the admissible box.
pub fn random_theta_system_2d<R: Rng>(rng: &mut R) -> ThetaSystem {
    let raw = Matrix::from_fn(2, 2, |_, _| rng.random_range(0.0..1.0));
    let rho_raw = spectral_radius(&raw).unwrap();
    let target = rng.random_range(0.3..0.9);
    let t = raw * (target / rho_raw);
    let upper = Vector::from_fn(2, |_, _| rng.random_range(0.5..2.0));
    let dir = Vector::from_fn(2, |_, _| rng.random_range(0.0..1.0));
    let bar_dir = solve_linear(&(Matrix::identity(2, 2) - &t), &dir).unwrap();
    // scale α so that θ̄ ≤ frac·θ̃
    let frac = rng.random_range(0.0..0.8);
    let s = (0..2)
        .map(|i| frac * upper[i] / bar_dir[i].max(1e-12))
        .fold(f64::INFINITY, f64::min);
    theta_system(t, dir * s, upper)
}

/// Rows `e_iᵀT^kθ ≤ θ̃_i − e_iᵀΣ_{j<k}T^jα` for `k = 0..=horizon`, dropping
/// those already implied by the box `Θ₀` itself.
pub fn propagated_rows(ts: &ThetaSystem, horizon: usize) -> Vec<(Vec<f64>, f64)> {
    let m = ts.dim();
    let mut rows = Vec::new();
    let mut power = Matrix::identity(m, m);
    let mut offset = Vector::zeros(m);
    for _ in 0..=horizon {
        for i in 0..m {
            let normal: Vec<f64> = power.row(i).iter().copied().collect();
            let rhs = ts.theta0_upper[i] - offset[i];
            let box_max: f64 = normal.iter().zip(ts.theta0_upper.iter()).map(|(a, b)| a * b).sum();
            let is_box_row = normal.iter().filter(|&&v| v != 0.0).count() == 1 && normal[i] == 1.0;
            if is_box_row || box_max > rhs {
                rows.push((normal, rhs));
            }
        }
        offset = &power * &ts.alpha + offset;
        power = &power * &ts.t;
    }
    rows
}

/// Vertices of `{θ ∈ ℝ²₊ : rows}` by pairwise line intersection.
pub fn polygon_vertices(rows: &[(Vec<f64>, f64)]) -> Vec<[f64; 2]> {
    let mut lines: Vec<([f64; 2], f64)> = rows.iter().map(|(n, r)| ([n[0], n[1]], *r)).collect();
    lines.push(([-1.0, 0.0], 0.0));
    lines.push(([0.0, -1.0], 0.0));
    let feasible = |p: [f64; 2]| {
        lines
            .iter()
            .all(|(n, r)| n[0] * p[0] + n[1] * p[1] <= r + 1e-9 * (1.0 + r.abs()))
    };
    let mut out: Vec<[f64; 2]> = Vec::new();
    for a in 0..lines.len() {
        for b in (a + 1)..lines.len() {
            let (n1, r1) = lines[a];
            let (n2, r2) = lines[b];
            let det = n1[0] * n2[1] - n1[1] * n2[0];
            if det.abs() < 1e-14 {
                continue;
            }
            let p = [(r1 * n2[1] - r2 * n1[1]) / det, (n1[0] * r2 - n2[0] * r1) / det];
            if feasible(p) && !out.iter().any(|q| (q[0] - p[0]).abs() < 1e-12 && (q[1] - p[1]).abs() < 1e-12) {
                out.push(p);
            }
        }
    }
    out
}

/// Maximum of `c·x` over `{x ≥ 0 : A x ≤ b}` by enumerating every basic
/// point; `None` when the feasible set is empty. Requires a bounded set.
pub fn lp_by_vertices(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    let mut cons: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for i in 0..n {
        let mut row = vec![0.0; n];
        row[i] = -1.0;
        cons.push((row, 0.0));
    }
    let k = cons.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let m = Matrix::from_fn(n, n, |r, col| cons[idx[r]].0[col]);
        let rhs = Vector::from_fn(n, |r, _| cons[idx[r]].1);
        if let Some(x) = m.lu().solve(&rhs) {
            let ok = cons.iter().all(|(row, r)| {
                row.iter().zip(x.iter()).map(|(p, q)| p * q).sum::<f64>() <= r + 1e-9
            });
            if ok && x.iter().all(|v| v.is_finite()) {
                let v: f64 = c.iter().zip(x.iter()).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < k - n + i {
                idx[i] += 1;
                for j in (i + 1)..n {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Observable 2-state subsystem `x⁺ = A x + w` with position readout.
pub fn random_subsystem<R: Rng>(rng: &mut R, couplings: BTreeMap<usize, Coupling>) -> Subsystem {
    let (a, c) = loop {
        let a = Matrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0));
        let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        if observability_matrix_rank(&a, &c) == 2 {
            break (a, c);
        }
    };
    let w = rng.random_range(0.0..0.01);
    Subsystem {
        name: None,
        a,
        b: Matrix::zeros(2, 1),
        c,
        d: Matrix::identity(2, 2),
        couplings,
        disturbance: if w > 0.0 {
            ConvexBody::centered_box(&[w, w]).unwrap()
        } else {
            ConvexBody::origin(2)
        },
        error_bound: HPolytope::centered_box(&[1.0, 1.0]).unwrap(),
        seed_set: None,
        horizon: None,
    }
}

/// Random network of 2–4 subsystems with weak couplings that the estimator
/// does not measure (so `Ā_ij = A_ij`).
pub fn random_network<R: Rng>(rng: &mut R) -> NetworkModel {
    let m = rng.random_range(2..=4);
    let mut subs = Vec::with_capacity(m);
    for i in 0..m {
        let mut couplings = BTreeMap::new();
        for j in 0..m {
            if j != i && rng.random_bool(0.6) {
                let scale = rng.random_range(0.001..0.03);
                let matrix = Matrix::from_fn(2, 2, |_, _| rng.random_range(-1.0..1.0) * scale);
                couplings.insert(
                    j,
                    Coupling {
                        matrix,
                        use_output: rng.random_bool(0.5),
                    },
                );
            }
        }
        subs.push(random_subsystem(rng, couplings));
    }
    NetworkModel::new(subs).unwrap()
}
