mod common;

use ceo_rd::spectra::{basis, SymmetricSpec};
use ceo_rd::{Error, SourceModel};
use common::{arb_model, dense_d_min};
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #[test]
    fn eigenvalues_match_dense_solver(gamma in 0.1..5.0f64, u in 0.0..1.0f64, ell in 2usize..9) {
        let lo = -1.0 / (ell as f64 - 1.0);
        let spec = SymmetricSpec::new(gamma, lo + (1.0 - lo) * u, ell);
        for j in 1..=ell {
            let mut dense: Vec<f64> = spec.dense(j).symmetric_eigenvalues().iter().copied().collect();
            dense.sort_by(f64::total_cmp);
            let mut closed = vec![spec.lambda2(); j - 1];
            closed.push(spec.lambda1(j));
            closed.sort_by(f64::total_cmp);
            for (a, b) in dense.iter().zip(&closed) {
                prop_assert!((a - b).abs() <= 1e-12 * gamma * j as f64 + 1e-12);
            }
        }
    }

    #[test]
    fn factorization_reconstructs(gamma in 0.1..5.0f64, rho in -0.1..1.0f64, j in 1usize..9) {
        let spec = SymmetricSpec::new(gamma, rho, 10);
        let view = spec.eigenvalues(j).unwrap();
        prop_assert!((view.reconstruct() - spec.dense(j)).amax() <= 1e-12 * gamma.max(1.0));
    }

    #[test]
    fn basis_is_orthogonal_with_constant_first_column(j in 1usize..12) {
        let theta = basis(j);
        let eye = DMatrix::<f64>::identity(j, j);
        prop_assert!((theta.transpose() * &theta - eye).amax() <= 1e-14);
        let u = 1.0 / (j as f64).sqrt();
        for r in 0..j {
            prop_assert!((theta[(r, 0)] - u).abs() <= 1e-15);
        }
    }

    #[test]
    fn d_min_matches_dense_mmse(model in arb_model(8)) {
        for j in 1..=model.ell() {
            let a = model.d_min(j);
            let b = dense_d_min(&model, j);
            prop_assert!((a - b).abs() <= 1e-9 * b.max(1e-3), "j={j}: {a} vs {b}");
        }
    }

    #[test]
    fn observation_is_sum_of_blocks(model in arb_model(8)) {
        let ell = model.ell();
        let sum = model.x.dense(ell) + model.z.dense(ell);
        prop_assert!((model.s.dense(ell) - sum).amax() <= 1e-12);
    }

    #[test]
    fn d_min_lies_below_signal_variance(model in arb_model(8)) {
        for j in 1..=model.ell() {
            prop_assert!(model.d_min(j) < model.x.gamma);
            prop_assert!(model.d_min(j) >= 0.0);
        }
    }
}

#[test]
fn invalid_models_are_rejected() {
    assert!(matches!(
        SourceModel::new(1.0, -0.6, 1.0, 0.0, 3),
        Err(Error::NotPsd { .. })
    ));
    assert!(matches!(
        SourceModel::new(1.0, 0.0, 1.0, 1.2, 3),
        Err(Error::NotPsd { .. })
    ));
    assert!(matches!(
        SourceModel::new(0.0, 0.0, 1.0, 0.0, 3),
        Err(Error::NonPositiveSignalVariance(_))
    ));
    assert!(matches!(
        SourceModel::new(1.0, 0.0, 1.0, 0.0, 1),
        Err(Error::DimensionTooSmall(1))
    ));
}

#[test]
fn boundary_correlations_snap_to_zero() {
    let m = SourceModel::new(1.0, -0.5, 1.0, -0.5, 3).unwrap();
    assert_eq!(m.s.lambda1(3), 0.0);
    assert!(m.s.lambda1(2) > 0.0);
    let m = SourceModel::new(1.0, 1.0, 1.0, 1.0, 3).unwrap();
    assert_eq!(m.s.lambda2(), 0.0);
}
