//! Set-invariance machinery: contractive sets, the scalar couplings `μ_ij` and
//! `α_i`, the scaling-factor system `θ⁺ = Tθ + α`, its maximal invariant set
//! and the practical robust positive invariance check.

mod gilbert_tan;
mod verify;

pub use gilbert_tan::{inner_box, maximal_invariant_set, maximal_invariant_set_with, ThetaRow, DEFAULT_K_STAR_CAP};
pub use verify::{verify_prpi, PrpiCondition, PrpiReport, PrpiSubsystem, PrpiViolation};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{frobenius_norm, solve_linear, spectral_radius, Matrix, NumericsError, Tolerances, Vector};
use crate::sets::{
    containment_factor, linear_image, minkowski_sum_all, prune_generators, scale, ConvexBody,
    HPolytope, SetError,
};

pub use gilbert_tan::ThetaInvariantSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvarianceError {
    #[error("seed set image after {k} steps is not strictly inside the seed (γ* = {gamma})")]
    NotContractive { gamma: f64, k: usize },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("T is not Schur (spectral radius {rho})")]
    NotSchur { rho: f64 },
    #[error("equilibrium component {component} ({theta_bar}) is not strictly below the bound {upper}")]
    InteriorViolation {
        component: usize,
        theta_bar: f64,
        upper: f64,
    },
    #[error("maximal invariant set not determined within {cap} steps")]
    KStarCap { cap: usize },
    #[error("invariant set is empty")]
    EmptySet,
    #[error("postcondition failed: {0}")]
    Postcondition(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A λ-contractive C-set for `Ā_ii` together with the scalars it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractiveSet {
    pub set: ConvexBody,
    pub lambda: f64,
    pub horizon: usize,
    pub beta: f64,
    pub gamma_star: f64,
    pub delta: f64,
}

/// `M v` for every generator, collapsing to the origin when the map is
/// numerically zero (powers of nilpotent matrices).
fn image_or_origin(m: &Matrix, body: &ConvexBody, reference: f64) -> Result<ConvexBody, SetError> {
    if frobenius_norm(m) <= Tolerances::DEFAULT.zero * reference.max(1.0) {
        return Ok(ConvexBody::origin(body.dim()));
    }
    linear_image(m, body)
}

/// Builds `S = β⁻¹(S⁰ ⊕ ĀS⁰ ⊕ … ⊕ Ā^{k−1}S⁰)` and its contractivity `λ`.
pub fn synthesize_contractive_set(
    a_bar: &Matrix,
    bound: &HPolytope,
    seed: &ConvexBody,
    k: usize,
) -> Result<ContractiveSet, InvarianceError> {
    if k == 0 {
        return Err(InvarianceError::ZeroHorizon);
    }
    let n = a_bar.nrows();
    if seed.dim() != n || bound.dim() != n || !a_bar.is_square() {
        return Err(InvarianceError::DimensionMismatch(format!(
            "Ā is {}x{}, seed has dimension {}, bound has dimension {}",
            a_bar.nrows(),
            a_bar.ncols(),
            seed.dim(),
            bound.dim()
        )));
    }
    seed.ensure_c_set()?;
    let reference = frobenius_norm(a_bar);
    let seed = prune_generators(seed);

    let mut layers = Vec::with_capacity(k);
    let mut power = Matrix::identity(n, n);
    for _ in 0..k {
        layers.push(prune_generators(&image_or_origin(&power, &seed, reference)?));
        power = &power * a_bar;
    }
    let last = image_or_origin(&power, &seed, reference)?;
    let gamma_star = containment_factor(&last, &seed)?;
    if gamma_star >= 1.0 {
        return Err(InvarianceError::NotContractive { gamma: gamma_star, k });
    }

    let mut beta = f64::NEG_INFINITY;
    for h in bound.rows().row_iter() {
        let h = h.transpose();
        let mut total = 0.0;
        for layer in &layers {
            total += layer.support(&h)?;
        }
        beta = beta.max(total);
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(InvarianceError::Postcondition(format!(
            "error bound gives a non-positive scale β = {beta}"
        )));
    }

    let sum = minkowski_sum_all(layers.iter())?.expect("k >= 1 layers");
    let delta = containment_factor(&sum, &seed)?.max(1.0);
    let set = scale(&sum, 1.0 / beta)?;
    let lambda = (delta + gamma_star - 1.0) / delta;

    let image_factor = containment_factor(&linear_image(a_bar, &set)?, &set)?;
    if image_factor > lambda + 1e-8 {
        return Err(InvarianceError::Postcondition(format!(
            "image containment factor {image_factor} exceeds λ = {lambda}"
        )));
    }
    let reach = bound.max_row_value(&set)?;
    if reach > 1.0 + Tolerances::DEFAULT.containment {
        return Err(InvarianceError::Postcondition(format!(
            "contractive set leaves the error bound (row value {reach})"
        )));
    }
    Ok(ContractiveSet {
        set,
        lambda,
        horizon: k,
        beta,
        gamma_star,
        delta,
    })
}

/// Smallest `μ` with `Ā_ij S_j ⊆ μ S_i`.
pub fn compute_mu(a_ij: &Matrix, s_j: &ConvexBody, s_i: &ConvexBody) -> Result<f64, InvarianceError> {
    if a_ij.nrows() != s_i.dim() || a_ij.ncols() != s_j.dim() {
        return Err(InvarianceError::DimensionMismatch(format!(
            "Ā_ij is {}x{} for sets of dimensions {} and {}",
            a_ij.nrows(),
            a_ij.ncols(),
            s_i.dim(),
            s_j.dim()
        )));
    }
    s_i.ensure_c_set()?;
    s_j.ensure_c_set()?;
    if a_ij.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    Ok(containment_factor(&linear_image(a_ij, s_j)?, s_i)?)
}

/// Smallest `α` with `D W ⊆ α S`.
pub fn compute_alpha(d: &Matrix, w: &ConvexBody, s: &ConvexBody) -> Result<f64, InvarianceError> {
    if d.nrows() != s.dim() || d.ncols() != w.dim() {
        return Err(InvarianceError::DimensionMismatch(format!(
            "D is {}x{} for W of dimension {} and S of dimension {}",
            d.nrows(),
            d.ncols(),
            w.dim(),
            s.dim()
        )));
    }
    s.ensure_c_set()?;
    if d.iter().all(|&v| v == 0.0) {
        return Ok(0.0);
    }
    Ok(containment_factor(&linear_image(d, w)?, s)?)
}

/// The recursion `θ⁺ = Tθ + α` plus the admissible box `Θ₀ = ∏[0, θ̃_i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaSystem {
    #[serde(with = "crate::formats::serde_matrix")]
    pub t: Matrix,
    #[serde(with = "crate::formats::serde_matrix::vector")]
    pub alpha: Vector,
    #[serde(with = "crate::formats::serde_matrix::vector")]
    pub theta0_upper: Vector,
    pub spectral_radius: f64,
    /// `(I − T)⁻¹α`, present when `T` is Schur.
    #[serde(default, with = "option_vector", skip_serializing_if = "Option::is_none")]
    pub theta_bar: Option<Vector>,
}

mod option_vector {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use crate::numerics::Vector;

    pub fn serialize<S: Serializer>(v: &Option<Vector>, s: S) -> Result<S::Ok, S::Error> {
        v.as_ref().map(|v| v.as_slice().to_vec()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vector>, D::Error> {
        let v = Option::<Vec<f64>>::deserialize(d)?;
        Ok(v.map(Vector::from_vec))
    }
}

impl ThetaSystem {
    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_schur(&self) -> bool {
        self.spectral_radius < 1.0
    }

    pub fn step(&self, theta: &Vector) -> Vector {
        &self.t * theta + &self.alpha
    }

    /// `(T, α, θ̃)` with the components in `keep` only, in that order.
    pub fn restrict(&self, keep: &[usize]) -> Result<ThetaSystem, InvarianceError> {
        let t = Matrix::from_fn(keep.len(), keep.len(), |r, c| self.t[(keep[r], keep[c])]);
        let alpha = Vector::from_fn(keep.len(), |r, _| self.alpha[keep[r]]);
        let upper = Vector::from_fn(keep.len(), |r, _| self.theta0_upper[keep[r]]);
        from_parts(t, alpha, upper)
    }
}

fn from_parts(t: Matrix, alpha: Vector, theta0_upper: Vector) -> Result<ThetaSystem, InvarianceError> {
    let rho = spectral_radius(&t)?;
    let theta_bar = if rho < 1.0 {
        let m = t.nrows();
        Some(solve_linear(&(Matrix::identity(m, m) - &t), &alpha)?)
    } else {
        None
    };
    Ok(ThetaSystem {
        t,
        alpha,
        theta0_upper,
        spectral_radius: rho,
        theta_bar,
    })
}

/// `θ̃_i = 1 / max_{v ∈ gen(S_i), h ∈ rows(E_i)} h·v`.
pub fn theta0_bound(set: &ConvexBody, bound: &HPolytope) -> Result<f64, InvarianceError> {
    let reach = bound.max_row_value(set)?;
    Ok(if reach > 0.0 { 1.0 / reach } else { f64::INFINITY })
}

/// Assembles `T` (diagonal `λ_i`, off-diagonal `μ_ij`), `α` and `θ̃`.
pub fn assemble_theta_system(
    mus: &Matrix,
    alphas: &Vector,
    sets: &[ConvexBody],
    bounds: &[HPolytope],
) -> Result<ThetaSystem, InvarianceError> {
    let m = alphas.len();
    if mus.nrows() != m || mus.ncols() != m || sets.len() != m || bounds.len() != m {
        return Err(InvarianceError::DimensionMismatch(format!(
            "{m} subsystems but T is {}x{}, {} sets, {} bounds",
            mus.nrows(),
            mus.ncols(),
            sets.len(),
            bounds.len()
        )));
    }
    if mus.iter().chain(alphas.iter()).any(|&v| !(v >= 0.0)) {
        return Err(InvarianceError::DimensionMismatch(
            "μ and α entries must be nonnegative".into(),
        ));
    }
    let upper: Result<Vec<f64>, _> = sets
        .iter()
        .zip(bounds)
        .map(|(s, e)| theta0_bound(s, e))
        .collect();
    from_parts(mus.clone(), alphas.clone(), Vector::from_vec(upper?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{dmatrix, dvector};

    fn inf_ball(r: f64, n: usize) -> HPolytope {
        HPolytope::centered_box(&vec![r; n]).unwrap()
    }

    #[test]
    fn contractive_set_shift_matrix() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let cs = synthesize_contractive_set(&a, &inf_ball(2.0, 2), &ConvexBody::unit_box(2), 2).unwrap();
        assert_eq!(cs.gamma_star, 0.0);
        assert_relative_eq!(cs.delta, 2.0, epsilon = 1e-12);
        assert_relative_eq!(cs.beta, 1.0, epsilon = 1e-12);
        assert_relative_eq!(cs.lambda, 0.5, epsilon = 1e-12);
        let (lo, hi) = cs.set.as_box().unwrap();
        assert_relative_eq!(hi, dvector![2.0, 1.0], epsilon = 1e-12);
        assert_relative_eq!(lo, dvector![-2.0, -1.0], epsilon = 1e-12);
        // Ā·S = [−1,1]×{0} ⊆ 0.5·S
        let img = linear_image(&a, &cs.set).unwrap();
        assert!(containment_factor(&img, &cs.set).unwrap() <= 0.5 + 1e-12);
    }

    #[test]
    fn contractive_set_zero_matrix() {
        let s0 = ConvexBody::centered_box(&[0.5, 0.25]).unwrap();
        let cs = synthesize_contractive_set(&Matrix::zeros(2, 2), &inf_ball(1.0, 2), &s0, 1).unwrap();
        assert_eq!(cs.gamma_star, 0.0);
        assert_eq!(cs.delta, 1.0);
        assert_eq!(cs.lambda, 0.0);
        assert_relative_eq!(cs.beta, 0.5, epsilon = 1e-12);
        let (_, hi) = cs.set.as_box().unwrap();
        assert_relative_eq!(hi, dvector![1.0, 0.5], epsilon = 1e-12);
    }

    #[test]
    fn contractive_set_rejects_short_horizon() {
        let a = dmatrix![0.0, 1.0; 0.0, 0.0];
        let err = synthesize_contractive_set(&a, &inf_ball(2.0, 2), &ConvexBody::unit_box(2), 1);
        assert!(matches!(err, Err(InvarianceError::NotContractive { .. })));
    }

    #[test]
    fn contractive_set_stable_non_nilpotent() {
        let a = dmatrix![0.5, 0.0; 0.0, 0.2];
        let cs = synthesize_contractive_set(&a, &inf_ball(1.0, 2), &ConvexBody::unit_box(2), 1).unwrap();
        assert_relative_eq!(cs.gamma_star, 0.5, epsilon = 1e-12);
        assert_relative_eq!(cs.lambda, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn mu_examples() {
        let s1 = ConvexBody::unit_box(1);
        assert_eq!(compute_mu(&Matrix::zeros(1, 1), &s1, &s1).unwrap(), 0.0);
        assert_relative_eq!(compute_mu(&dmatrix![0.3], &s1, &s1).unwrap(), 0.3, epsilon = 1e-12);
        let s2 = ConvexBody::unit_box(2);
        let big = scale(&s2, 2.0).unwrap();
        assert_relative_eq!(
            compute_mu(&Matrix::identity(2, 2), &big, &s2).unwrap(),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn alpha_examples() {
        let s = ConvexBody::unit_box(2);
        assert_eq!(compute_alpha(&Matrix::identity(2, 2), &ConvexBody::origin(2), &s).unwrap(), 0.0);
        let w = ConvexBody::centered_box(&[1e-5, 1e-5]).unwrap();
        assert_relative_eq!(
            compute_alpha(&Matrix::identity(2, 2), &w, &s).unwrap(),
            1e-5,
            max_relative = 1e-10
        );
        assert_eq!(compute_alpha(&Matrix::zeros(2, 2), &w, &s).unwrap(), 0.0);
    }

    #[test]
    fn theta_system_examples() {
        let ts = assemble_theta_system(
            &dmatrix![0.5],
            &dvector![0.1],
            &[ConvexBody::unit_box(1)],
            &[inf_ball(0.01, 1)],
        )
        .unwrap();
        assert_relative_eq!(ts.theta0_upper[0], 0.01, max_relative = 1e-12);
        assert_relative_eq!(ts.theta_bar.unwrap()[0], 0.2, epsilon = 1e-14);
        let touching = assemble_theta_system(
            &dmatrix![0.0],
            &dvector![0.0],
            &[ConvexBody::unit_box(1)],
            &[inf_ball(1.0, 1)],
        )
        .unwrap();
        assert_eq!(touching.theta0_upper[0], 1.0);
        let unstable = assemble_theta_system(
            &dmatrix![1.2],
            &dvector![0.0],
            &[ConvexBody::unit_box(1)],
            &[inf_ball(1.0, 1)],
        )
        .unwrap();
        assert!(!unstable.is_schur());
        assert!(unstable.theta_bar.is_none());
    }
}
