//! Observer gain synthesis properties.

mod common;

use dse_core::invariance::compute_mu;
use dse_core::numerics::{matrix_power, Matrix};
use dse_core::observer::{design_coupling_gain, design_deadbeat_gain, CouplingMode, SynthesisError};
use dse_core::sets::ConvexBody;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn deadbeat_gain_is_nilpotent(seed in any::<u64>(), n in 1usize..=5, p_raw in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = p_raw.min(n);
        let (a, c) = common::random_observable_pair(&mut rng, n, p);
        let l = design_deadbeat_gain(&a, &c).unwrap();
        prop_assert_eq!(l.shape(), (n, p));
        let r = matrix_power(&(&a + &l * &c), n).norm();
        let bound = 1e-8 * (1.0 + a.norm()).powi(n as i32);
        prop_assert!(r <= bound, "residual {} > {}", r, bound);
    }

    #[test]
    fn frobenius_gain_is_stationary(seed in any::<u64>(), n in 1usize..=4, p in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a_ij = Matrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let c_j = Matrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let s = ConvexBody::unit_box(n);
        let l = design_coupling_gain(&a_ij, &c_j, &s, &s, CouplingMode::Frobenius).unwrap();
        let grad = (&a_ij + &l * &c_j) * c_j.transpose() * 2.0;
        prop_assert!(grad.amax() <= 1e-8 * (1.0 + a_ij.norm()), "gradient {}", grad.amax());
    }

    #[test]
    fn direct_mu_never_worse_than_frobenius(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(1..=3);
        let p = rng.random_range(1..=n);
        let a_ij = Matrix::from_fn(n, n, |_, _| rng.random_range(-0.5..0.5));
        let c_j = Matrix::from_fn(p, n, |_, _| rng.random_range(-1.0..1.0));
        let half_i: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let half_j: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let s_i = ConvexBody::centered_box(&half_i).unwrap();
        let s_j = ConvexBody::centered_box(&half_j).unwrap();
        let mu = |mode| {
            let l = design_coupling_gain(&a_ij, &c_j, &s_i, &s_j, mode).unwrap();
            compute_mu(&(&a_ij + l * &c_j), &s_j, &s_i).unwrap()
        };
        let frob = mu(CouplingMode::Frobenius);
        let direct = mu(CouplingMode::DirectMu);
        prop_assert!(direct <= frob + 1e-9 * (1.0 + frob), "direct {} > frobenius {}", direct, frob);
    }
}

#[test]
fn unobservable_pair_is_rejected() {
    let a = Matrix::identity(2, 2);
    let c = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
    assert!(matches!(
        design_deadbeat_gain(&a, &c),
        Err(SynthesisError::NotObservable { rank: 1, required: 2 })
    ));
}

#[test]
fn zero_coupling_gets_zero_gain() {
    let s = ConvexBody::unit_box(2);
    let l = design_coupling_gain(&Matrix::zeros(2, 2), &Matrix::identity(2, 2), &s, &s, CouplingMode::DirectMu).unwrap();
    assert_eq!(l, Matrix::zeros(2, 2));
}
