mod common;

use ceo_rd::converse::{
    candidate_minimizer, concavity_gap, delta_bound, dj_lower_bound, kkt_multipliers,
    kkt_residuals, objective_eta, objective_eta_hat, select_case, sigma_identity, solve_numeric,
    verify_kkt, Case, FeasiblePoint, PSD_ORDER_TOL, STATIONARITY_TOL,
};
use ceo_rd::linalg::min_eigenvalue;
use ceo_rd::rdcore::{
    check_conditions, cond1_value, cond3_value, cond4_value, distortion_profile, mu_nu, rate_bar,
    solve_lambda_q,
};
use ceo_rd::SourceModel;
use common::{arb_instance, rng};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn random_spd(rng: &mut impl Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(n, n) * floor
}

proptest! {
    #[test]
    fn candidate_attains_the_rate((model, k, d) in arb_instance(6)) {
        let rate = rate_bar(&model, k, d).unwrap();
        for j in k..=model.ell() {
            let case = select_case(&model, j).unwrap();
            let p = candidate_minimizer(&model, k, j, d, case).unwrap();
            let eta = match case {
                Case::P => objective_eta(&model, k, &p).unwrap(),
                Case::PHat => objective_eta_hat(&model, k, j, &p).unwrap(),
            };
            prop_assert!((eta - rate).abs() <= 1e-10 * rate.max(1.0));
        }
    }

    #[test]
    fn candidate_is_stationary_and_tight((model, k, d) in arb_instance(6)) {
        for j in k..=model.ell() {
            let case = select_case(&model, j).unwrap();
            let cert = verify_kkt(&model, k, j, d, case, STATIONARITY_TOL).unwrap();
            prop_assert!(cert.valid || cert.fails_only_on_sign(), "{:?}", cert.violations);
        }
    }

    #[test]
    fn multiplier_signs_track_conditions((model, k, d) in arb_instance(6)) {
        let r = mu_nu(&model, k, d).unwrap();
        for j in k..=model.ell() {
            let case = select_case(&model, j).unwrap();
            let m = kkt_multipliers(&model, k, j, d, case).unwrap();
            prop_assert!(m.c > 0.0);
            match case {
                Case::P => {
                    let c1 = cond1_value(&model, k, r.mu.unwrap());
                    prop_assert_eq!(m.b1 >= 0.0, c1 >= 0.0, "b1={} cond1={}", m.b1, c1);
                    prop_assert!(m.b2 >= 0.0);
                }
                Case::PHat => {
                    let nu = r.nu.unwrap();
                    let nkj = r.nu_kj.iter().find(|(jj, _)| *jj == j).unwrap().1.unwrap();
                    let c3 = cond3_value(&model, k, nu, nkj);
                    prop_assert_eq!(m.b1 >= 0.0, c3 >= 0.0, "b1={} cond3={}", m.b1, c3);
                    if k >= 2 {
                        let c4 = cond4_value(&model, k, nu, nkj);
                        prop_assert_eq!(m.b2 >= 0.0, c4 >= 0.0, "b2={} cond4={}", m.b2, c4);
                    }
                }
            }
        }
    }

    #[test]
    fn numeric_optimum_never_exceeds_candidate((model, k, d) in arb_instance(5)) {
        let rate = rate_bar(&model, k, d).unwrap();
        let j = model.ell();
        let case = select_case(&model, j).unwrap();
        let opt = solve_numeric(&model, k, j, d, case).unwrap();
        prop_assert!(opt.objective <= rate + 1e-9);
    }

    #[test]
    fn certified_points_match_numeric_optimum((model, k, d) in arb_instance(5)) {
        let j = model.ell();
        let case = select_case(&model, j).unwrap();
        let cert = verify_kkt(&model, k, j, d, case, STATIONARITY_TOL).unwrap();
        if cert.valid {
            let opt = solve_numeric(&model, k, j, d, case).unwrap();
            prop_assert!((opt.objective - cert.rate_bar).abs() <= 1e-6);
            prop_assert!((opt.point.delta - cert.point.delta).abs() <= 1e-5 * cert.point.delta.max(1.0));
        }
    }

    #[test]
    fn lower_bound_closes_on_profile((model, k, d) in arb_instance(6)) {
        let prof = distortion_profile(&model, k, d).unwrap();
        for (i, j) in (k..=model.ell()).enumerate() {
            let case = select_case(&model, j).unwrap();
            let p = candidate_minimizer(&model, k, j, d, case).unwrap();
            let bound = dj_lower_bound(&model, k, j, p.delta, case).unwrap();
            prop_assert!((bound - prof[i]).abs() <= 1e-10 * prof[i].max(1.0));
        }
    }

    #[test]
    fn lower_bound_increases_in_delta((model, k, d) in arb_instance(6), scale in 0.5..0.99f64) {
        let j = model.ell();
        let case = select_case(&model, j).unwrap();
        let p = candidate_minimizer(&model, k, j, d, case).unwrap();
        let at = dj_lower_bound(&model, k, j, p.delta, case).unwrap();
        let below = dj_lower_bound(&model, k, j, p.delta * scale, case).unwrap();
        prop_assert!(below <= at);
    }
}

#[test]
fn rate_certificate_matches_condition_report() {
    let mut r = rng(17);
    let mut checked = 0;
    while checked < 100 {
        let inst = common::random_instance(&mut r, 6);
        let rep = check_conditions(&inst.model, inst.k, inst.d_k).unwrap();
        let j = inst.k;
        let case = select_case(&inst.model, j).unwrap();
        let cert = verify_kkt(&inst.model, inst.k, j, inst.d_k, case, STATIONARITY_TOL).unwrap();
        let expected = match case {
            Case::P => rep.cond1.holds(),
            Case::PHat => rep.cond2.holds() || inst.k == 1,
        };
        if case == Case::PHat && inst.k == 1 {
            continue;
        }
        assert_eq!(cert.valid, expected, "{:?}", cert.violations);
        checked += 1;
    }
}

#[test]
fn k1_p_hat_b2_does_not_track_cond4() {
    // With a single encoder the second multiplier carries a factor k - 1
    // and vanishes, while the cond4 polynomial can still be negative.
    let m = SourceModel::new(1.0, 0.9, 4.0, -0.3, 4).unwrap();
    let d = common::at_fraction(&m, 1, 0.95);
    let mult = kkt_multipliers(&m, 1, 4, d, Case::PHat).unwrap();
    assert_eq!(mult.b2, 0.0);
    let r = mu_nu(&m, 1, d).unwrap();
    let nkj = r.nu_kj.iter().find(|(j, _)| *j == 4).unwrap().1.unwrap();
    let nu = r.nu.unwrap();
    assert!(cond4_value(&m, 1, nu, nkj) < 0.0);
    let cert = verify_kkt(&m, 1, 4, d, Case::PHat, STATIONARITY_TOL).unwrap();
    assert_eq!(cert.valid, cond3_value(&m, 1, nu, nkj) >= 0.0);
}

#[test]
fn residuals_flag_perturbed_points() {
    let m = SourceModel::new(1.2, 0.4, 0.8, 0.2, 4).unwrap();
    let d = common::at_fraction(&m, 2, 0.5);
    let base = candidate_minimizer(&m, 2, 4, d, Case::P).unwrap();
    let mult = kkt_multipliers(&m, 2, 4, d, Case::P).unwrap();
    for (dd1, dd2, ddelta) in [(1e-3, 0.0, 0.0), (0.0, 1e-3, 0.0), (0.0, 0.0, 1e-3)] {
        let p = FeasiblePoint {
            d1: base.d1 + dd1,
            d2: base.d2 + dd2,
            delta: base.delta + ddelta,
        };
        let cert = kkt_residuals(&m, 2, 4, d, Case::P, &p, &mult, STATIONARITY_TOL).unwrap();
        assert!(!cert.valid);
    }
}

#[test]
fn delta_bound_is_exact_for_gaussian_test_channel() {
    let gs = SourceModel::new(1.0, 0.3, 0.7, -0.1, 4).unwrap().s.dense(4);
    let lambda_q = 0.9;
    let lambda_w = 0.5;
    let eye = DMatrix::<f64>::identity(4, 4);
    let d = &gs - &gs * (&gs + &eye * lambda_q).try_inverse().unwrap() * &gs;
    let bound = delta_bound(&d, lambda_w, &gs).unwrap();
    let expected = &eye * (lambda_w * lambda_q / (lambda_w + lambda_q));
    assert!((bound - expected).amax() < 1e-12);
}

#[test]
fn sigma_identity_is_psd_for_feasible_d() {
    let mut r = rng(3);
    for _ in 0..50 {
        let n = r.random_range(1..6);
        let gs = random_spd(&mut r, n, 0.5);
        let lw = 0.5 * min_eigenvalue(&gs);
        let gu = &gs - DMatrix::identity(n, n) * lw;
        // Any D between 0 and Gamma_S.
        let t = r.random_range(0.0..1.0);
        let d = &gs * t;
        let sigma = sigma_identity(&gu, &gs, &d).unwrap();
        assert!(min_eigenvalue(&sigma) >= -1e-10);
    }
}

#[test]
fn concavity_gap_is_psd_on_random_pairs() {
    let mut r = rng(99);
    for _ in 0..200 {
        let n = r.random_range(1..7);
        let gs = random_spd(&mut r, n, 0.2);
        let lw = r.random_range(0.05..0.95) * min_eigenvalue(&gs);
        let d1 = random_spd(&mut r, n, 0.05);
        let d2 = random_spd(&mut r, n, 0.05);
        let gap = concavity_gap(&d1, &d2, lw, &gs).unwrap();
        assert!(min_eigenvalue(&gap) >= -PSD_ORDER_TOL);
    }
}

#[test]
fn case_follows_spectrum_ordering() {
    let m = SourceModel::new(1.0, -0.2, 1.0, 0.0, 5).unwrap();
    let lambda = solve_lambda_q(&m, 2, 0.8).unwrap();
    assert!(lambda > 0.0);
    for j in 2..=5 {
        assert_eq!(select_case(&m, j).unwrap(), Case::PHat);
    }
}
