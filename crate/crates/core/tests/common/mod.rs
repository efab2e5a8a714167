#![allow(dead_code)]

use ceo_rd::linalg::{spd_inverse, spd_log_det};
use ceo_rd::SourceModel;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Correlation strictly inside `(-1/(ell-1), 1)`.
pub fn correlation(rng: &mut impl Rng, ell: usize) -> f64 {
    let lo = -1.0 / (ell as f64 - 1.0);
    lo + (1.0 - lo) * rng.random_range(1e-6..1.0 - 1e-6)
}

pub fn random_model(rng: &mut impl Rng, ell: usize) -> SourceModel {
    let gx = rng.random_range(0.2..3.0);
    let rx = correlation(rng, ell);
    let gz = rng.random_range(0.05..3.0);
    let rz = correlation(rng, ell);
    SourceModel::new(gx, rx, gz, rz, ell).expect("interior parameters are valid")
}

/// Distortion at fraction `u` of the open interval `(d_min^(k), gamma_x)`.
pub fn at_fraction(model: &SourceModel, k: usize, u: f64) -> f64 {
    let lo = model.d_min(k);
    lo + u * (model.x.gamma - lo)
}

pub struct Instance {
    pub model: SourceModel,
    pub k: usize,
    pub d_k: f64,
}

pub fn random_instance(rng: &mut impl Rng, max_ell: usize) -> Instance {
    let ell = rng.random_range(2..=max_ell);
    let model = random_model(rng, ell);
    let k = rng.random_range(1..=ell);
    let u = rng.random_range(1e-3..1.0 - 1e-3);
    Instance {
        d_k: at_fraction(&model, k, u),
        model,
        k,
    }
}

/// `tr(Gamma_X - Gamma_X (Gamma_S + lambda I)^-1 Gamma_X) / j` on dense matrices.
pub fn dense_distortion(model: &SourceModel, j: usize, lambda_q: f64) -> f64 {
    let gx = model.x.dense(j);
    let v = model.s.dense(j) + DMatrix::identity(j, j) * lambda_q;
    let inv = spd_inverse(&v, "oracle").unwrap();
    (&gx - &gx * inv * &gx).trace() / j as f64
}

/// `log det(I + Gamma_S / lambda) / 2k` on dense matrices.
pub fn dense_rate(model: &SourceModel, k: usize, lambda_q: f64) -> f64 {
    let m = DMatrix::identity(k, k) + model.s.dense(k) / lambda_q;
    spd_log_det(&m, "oracle").unwrap() / (2.0 * k as f64)
}

/// Dense MMSE distortion with all `j` observations, no quantization.
pub fn dense_d_min(model: &SourceModel, j: usize) -> f64 {
    let gx = model.x.dense(j);
    let inv = spd_inverse(&model.s.dense(j), "oracle").unwrap();
    (&gx - &gx * inv * &gx).trace() / j as f64
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

prop_compose! {
    pub fn arb_model(max_ell: usize)(ell in 2..=max_ell)(
        ell in Just(ell),
        gx in 0.2..3.0f64,
        ux in 1e-6..1.0 - 1e-6f64,
        gz in 0.05..3.0f64,
        uz in 1e-6..1.0 - 1e-6f64,
    ) -> SourceModel {
        let lo = -1.0 / (ell as f64 - 1.0);
        SourceModel::new(gx, lo + (1.0 - lo) * ux, gz, lo + (1.0 - lo) * uz, ell).unwrap()
    }
}

prop_compose! {
    /// `(model, k, d_k)` with `d_k` strictly inside its interval.
    pub fn arb_instance(max_ell: usize)(model in arb_model(max_ell))(
        k in 1..=model.ell(),
        u in 1e-3..1.0 - 1e-3f64,
        model in Just(model),
    ) -> (SourceModel, usize, f64) {
        let d = at_fraction(&model, k, u);
        (model, k, d)
    }
}
