//! Monte Carlo checks of the Gaussian scheme.
//!
//! Sample `t` draws its randomness from a ChaCha8 stream keyed by the seed
//! and selected by `t`, so every sample is a pure function of
//! `(seed, t)`. Work is split into fixed-size chunks that are reduced in
//! index order, which makes every result independent of the number of
//! threads.
//!
//! Per sample the stream yields, in order, `ell` standard normals for the
//! signal, `ell` for the noise, `ell` for the quantization noise, and `ell`
//! for the auxiliary decomposition noise. Functions that need only a prefix
//! of this layout still see the same signal and noise for a given `t`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::converse::{delta_bound, sigma_identity};
use crate::error::{Error, Result};
use crate::linalg::spd_inverse;
use crate::spectra::{basis, SourceModel, SymmetricSpec};

/// Standard-error multiple used for value comparisons.
pub const VALUE_GATE: f64 = 3.0;

/// Standard-error multiple used for covariance entries.
pub const ENTRY_GATE: f64 = 5.0;

const CHUNK: usize = 4096;

/// Row-major `n x ell` draws of signal, noise, and observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub n: usize,
    pub ell: usize,
    pub seed: u64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
}

impl SampleBatch {
    pub fn x_row(&self, t: usize) -> &[f64] {
        &self.x[t * self.ell..(t + 1) * self.ell]
    }

    pub fn z_row(&self, t: usize) -> &[f64] {
        &self.z[t * self.ell..(t + 1) * self.ell]
    }

    pub fn s_row(&self, t: usize) -> &[f64] {
        &self.s[t * self.ell..(t + 1) * self.ell]
    }

    /// Largest entrywise z-score of the empirical covariances of `X`, `Z`,
    /// `S`, and the cross-covariance of `X` and `Z`, against the model.
    pub fn covariance_check(&self, model: &SourceModel) -> CovarianceCheck {
        let ell = self.ell;
        let zero = DMatrix::zeros(ell, ell);
        CovarianceCheck {
            x: max_entry_z(&self.x, &self.x, ell, &model.x.dense(ell)),
            z: max_entry_z(&self.z, &self.z, ell, &model.z.dense(ell)),
            s: max_entry_z(&self.s, &self.s, ell, &model.s.dense(ell)),
            xz: max_entry_z(&self.x, &self.z, ell, &zero),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceCheck {
    pub x: f64,
    pub z: f64,
    pub s: f64,
    pub xz: f64,
}

impl CovarianceCheck {
    pub fn passes(&self, gate: f64) -> bool {
        [self.x, self.z, self.s, self.xz].iter().all(|z| *z <= gate)
    }
}

fn max_entry_z(a: &[f64], b: &[f64], dim: usize, expected: &DMatrix<f64>) -> f64 {
    let n = a.len() / dim;
    let mut worst: f64 = 0.0;
    for r in 0..dim {
        for c in 0..dim {
            let mut stats = Moments::new(1);
            for t in 0..n {
                stats.push(&[a[t * dim + r] * b[t * dim + c]]);
            }
            let z =
                (stats.mean[0] - expected[(r, c)]).abs() / stats.std_err(0).max(f64::MIN_POSITIVE);
            worst = worst.max(z);
        }
    }
    worst
}

/// Running mean and centered sum of squares per coordinate, mergeable in a
/// fixed order.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(dim: usize) -> Self {
        Self {
            n: 0.0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.n += 1.0;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(values) {
            let delta = v - *mean;
            *mean += delta / self.n;
            *m2 += delta * (v - *mean);
        }
    }

    fn merge(mut self, other: &Moments) -> Self {
        if other.n == 0.0 {
            return self;
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * other.n / n;
            self.m2[i] += other.m2[i] + delta * delta * self.n * other.n / n;
        }
        self.n = n;
        self
    }

    fn std_err(&self, i: usize) -> f64 {
        if self.n < 2.0 {
            return f64::INFINITY;
        }
        (self.m2[i] / (self.n - 1.0) / self.n).sqrt()
    }
}

/// Spectral square root `Theta Lambda^{1/2}` stored row-major.
fn factor(spec: &SymmetricSpec, j: usize) -> Vec<f64> {
    spectral_root(spec.lambda1(j), spec.lambda2(), j)
}

/// `Theta diag(sqrt(l1), sqrt(l2), ..)`, row-major.
fn spectral_root(l1: f64, l2: f64, j: usize) -> Vec<f64> {
    let theta = basis(j);
    let mut f = vec![0.0; j * j];
    for r in 0..j {
        for c in 0..j {
            let lambda = if c == 0 { l1 } else { l2 };
            f[r * j + c] = theta[(r, c)] * lambda.max(0.0).sqrt();
        }
    }
    f
}

fn mat_vec(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        *o = m[r * cols..(r + 1) * cols]
            .iter()
            .zip(v)
            .map(|(a, b)| a * b)
            .sum();
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            out.push(m[(r, c)]);
        }
    }
    out
}

struct Sampler {
    ell: usize,
    key: [u8; 32],
    fx: Vec<f64>,
    fz: Vec<f64>,
}

/// Standard normals for one sample, in stream order.
struct Draw {
    x: Vec<f64>,
    z: Vec<f64>,
    q: Vec<f64>,
    e: Vec<f64>,
}

impl Sampler {
    fn new(model: &SourceModel, seed: u64) -> Self {
        let ell = model.ell();
        Self {
            ell,
            key: ChaCha8Rng::seed_from_u64(seed).get_seed(),
            fx: factor(&model.x, ell),
            fz: factor(&model.z, ell),
        }
    }

    /// Signal and noise for sample `t`, plus the raw normals for the
    /// quantization and decomposition noise.
    fn draw(&self, t: usize) -> Draw {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(t as u64);
        let ell = self.ell;
        let mut normals = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        };
        let xi_x = normals(ell);
        let xi_z = normals(ell);
        let q = normals(ell);
        let e = normals(ell);
        let mut x = vec![0.0; ell];
        let mut z = vec![0.0; ell];
        mat_vec(&self.fx, &xi_x, &mut x);
        mat_vec(&self.fz, &xi_z, &mut z);
        Draw { x, z, q, e }
    }
}

/// Moments of `stat(t)` over `t < n`, reduced in chunk order.
fn reduce<F>(n: usize, dim: usize, stat: F) -> Moments
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut moments = Moments::new(dim);
            let mut buf = vec![0.0; dim];
            for t in c * CHUNK..((c + 1) * CHUNK).min(n) {
                stat(t, &mut buf);
                moments.push(&buf);
            }
            moments
        })
        .collect();
    parts
        .iter()
        .fold(Moments::new(dim), |acc, part| acc.merge(part))
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::IndexOutOfRange {
            name: "n",
            value: 0,
            lo: 1,
            hi: usize::MAX,
        });
    }
    Ok(())
}

/// Draw `n` i.i.d. copies of `(X, Z, S)`.
pub fn sample(model: &SourceModel, n: usize, seed: u64) -> Result<SampleBatch> {
    check_n(n)?;
    let ell = model.ell();
    let sampler = Sampler::new(model, seed);
    let mut x = vec![0.0; n * ell];
    let mut z = vec![0.0; n * ell];
    x.par_chunks_mut(ell)
        .zip(z.par_chunks_mut(ell))
        .enumerate()
        .for_each(|(t, (xr, zr))| {
            let d = sampler.draw(t);
            xr.copy_from_slice(&d.x);
            zr.copy_from_slice(&d.z);
        });
    let s = x.iter().zip(&z).map(|(a, b)| a + b).collect();
    Ok(SampleBatch {
        n,
        ell,
        seed,
        x,
        z,
        s,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistortionEstimate {
    pub j: usize,
    /// Per-component mean squared error, averaged over samples.
    pub mean: f64,
    pub std_err: f64,
}

impl DistortionEstimate {
    pub fn z_score(&self, expected: f64) -> f64 {
        (self.mean - expected).abs() / self.std_err
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalRD {
    pub k: usize,
    pub lambda_q: f64,
    pub n: usize,
    pub seed: u64,
    pub estimates: Vec<DistortionEstimate>,
}

impl EmpiricalRD {
    pub fn at(&self, j: usize) -> Option<&DistortionEstimate> {
        self.estimates.iter().find(|e| e.j == j)
    }
}

/// `Gamma_X^(j) (Gamma_S^(j) + lambda_q I)^-1`, row-major.
fn mmse_gain(model: &SourceModel, j: usize, lambda_q: f64) -> Result<Vec<f64>> {
    let inner = model.s.dense(j) + DMatrix::identity(j, j) * lambda_q;
    let inv = spd_inverse(&inner, "Gamma_S + lambda_q I")?;
    Ok(row_major(&(model.x.dense(j) * inv)))
}

fn check_lambda_q(lambda_q: f64) -> Result<()> {
    if !(lambda_q.is_finite() && lambda_q >= 0.0) {
        return Err(Error::NonFinite {
            name: "lambda_q (must be nonnegative)",
            value: lambda_q,
        });
    }
    Ok(())
}

/// Empirical per-component distortions of the conditional-mean estimate of
/// `(X_1..X_j)` from `V = S + Q`, `Q ~ N(0, lambda_q I)`, for each `j` in
/// `js`. All `j` share the same samples.
fn empirical_at(
    model: &SourceModel,
    k: usize,
    lambda_q: f64,
    js: &[usize],
    n: usize,
    seed: u64,
) -> Result<EmpiricalRD> {
    check_n(n)?;
    check_lambda_q(lambda_q)?;
    let gains: Vec<Vec<f64>> = js
        .iter()
        .map(|&j| mmse_gain(model, j, lambda_q))
        .collect::<Result<_>>()?;
    let sampler = Sampler::new(model, seed);
    let sq = lambda_q.sqrt();
    let moments = reduce(n, js.len(), |t, out| {
        let d = sampler.draw(t);
        let v: Vec<f64> = (0..sampler.ell)
            .map(|i| d.x[i] + d.z[i] + sq * d.q[i])
            .collect();
        for ((slot, &j), gain) in out.iter_mut().zip(js).zip(&gains) {
            let mut est = vec![0.0; j];
            mat_vec(gain, &v[..j], &mut est);
            let err: f64 = est
                .iter()
                .zip(&d.x[..j])
                .map(|(e, x)| (x - e) * (x - e))
                .sum();
            *slot = err / j as f64;
        }
    });
    Ok(EmpiricalRD {
        k,
        lambda_q,
        n,
        seed,
        estimates: js
            .iter()
            .enumerate()
            .map(|(i, &j)| DistortionEstimate {
                j,
                mean: moments.mean[i],
                std_err: moments.std_err(i),
            })
            .collect(),
    })
}

/// Empirical distortion at a single `j` in `k..=ell`.
pub fn empirical_distortion(
    model: &SourceModel,
    k: usize,
    lambda_q: f64,
    j: usize,
    n: usize,
    seed: u64,
) -> Result<EmpiricalRD> {
    model.check_index("k", k, 1)?;
    model.check_index("j", j, k)?;
    empirical_at(model, k, lambda_q, &[j], n, seed)
}

/// Empirical distortions for every `j` in `k..=ell` from one set of samples.
pub fn empirical_profile(
    model: &SourceModel,
    k: usize,
    lambda_q: f64,
    n: usize,
    seed: u64,
) -> Result<EmpiricalRD> {
    model.check_index("k", k, 1)?;
    let js: Vec<usize> = (k..=model.ell()).collect();
    empirical_at(model, k, lambda_q, &js, n, seed)
}

/// Upper end of the admissible `lambda_w` interval at `j`:
/// `min(lambda_s1^(j), lambda_s2)`.
pub fn admissible_lambda_w_upper(model: &SourceModel, j: usize) -> f64 {
    model.s.lambda1(j).min(model.s.lambda2())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntryComparison {
    pub row: usize,
    pub col: usize,
    pub estimate: f64,
    pub expected: f64,
    pub std_err: f64,
}

impl EntryComparison {
    pub fn z_score(&self) -> f64 {
        (self.estimate - self.expected).abs() / self.std_err.max(f64::MIN_POSITIVE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionReport {
    pub j: usize,
    pub lambda_w: f64,
    pub lambda_q: f64,
    pub n: usize,
    pub seed: u64,
    /// `cov(U - U_hat)` against the identity evaluated at the empirical
    /// `cov(S - S_hat)`.
    pub sigma: Vec<EntryComparison>,
    /// `cov(S - S_tilde)` with `S_tilde = E[S | U, V]`, against
    /// `(D^-1 + I / lambda_w - Gamma_S^-1)^-1`.
    pub delta: Vec<EntryComparison>,
    /// The exact per-component residual `delta`.
    pub delta_diagonal: f64,
    pub gate: f64,
}

impl DecompositionReport {
    pub fn max_sigma_z(&self) -> f64 {
        self.sigma.iter().map(|e| e.z_score()).fold(0.0, f64::max)
    }

    pub fn max_delta_z(&self) -> f64 {
        self.delta.iter().map(|e| e.z_score()).fold(0.0, f64::max)
    }

    pub fn max_off_diagonal_z(&self) -> f64 {
        self.delta
            .iter()
            .filter(|e| e.row != e.col)
            .map(|e| e.z_score())
            .fold(0.0, f64::max)
    }

    pub fn sigma_passes(&self) -> bool {
        self.max_sigma_z() <= self.gate
    }

    pub fn delta_passes(&self) -> bool {
        self.max_delta_z() <= self.gate
    }

    pub fn passes(&self) -> bool {
        self.sigma_passes() && self.delta_passes()
    }
}

/// Monte Carlo check of the fictitious decomposition `S = U + W` on the
/// first `j` components.
///
/// `W = lambda_w Gamma_S^-1 S + E` with `E ~ N(0, lambda_w I - lambda_w^2 Gamma_S^-1)`
/// independent of `S` gives `cov(W) = lambda_w I` and `U = S - W`
/// independent of `W`. The decoder observes `V = S + Q`.
pub fn decomposition_check(
    model: &SourceModel,
    j: usize,
    lambda_w: f64,
    lambda_q: f64,
    n: usize,
    seed: u64,
) -> Result<DecompositionReport> {
    model.check_index("j", j, 1)?;
    check_n(n)?;
    check_lambda_q(lambda_q)?;
    let upper = admissible_lambda_w_upper(model, j);
    if !(lambda_w > 0.0 && lambda_w < upper) {
        return Err(Error::LambdaWOutOfRange { lambda_w, upper });
    }

    let eye = DMatrix::<f64>::identity(j, j);
    let gs = model.s.dense(j);
    let gs_inv = spd_inverse(&gs, "Gamma_S")?;
    let gu = &gs - &eye * lambda_w;
    let fe = spectral_root(
        lambda_w - lambda_w * lambda_w / model.s.lambda1(j),
        lambda_w - lambda_w * lambda_w / model.s.lambda2(),
        j,
    );
    let w_gain = row_major(&(&gs_inv * lambda_w));

    // S_hat = E[S | V], U_hat = E[U | V] = Gamma_U Gamma_S^-1 S_hat.
    let v_cov = &gs + &eye * lambda_q;
    let v_inv = spd_inverse(&v_cov, "Gamma_S + lambda_q I")?;
    let s_hat_gain = row_major(&(&gs * &v_inv));
    let g = &gu * &gs_inv;
    let u_from_s = row_major(&g);

    // S_tilde = E[S | U, V] by joint regression.
    let mut joint = DMatrix::zeros(2 * j, 2 * j);
    joint.view_mut((0, 0), (j, j)).copy_from(&gu);
    joint.view_mut((0, j), (j, j)).copy_from(&gu);
    joint.view_mut((j, 0), (j, j)).copy_from(&gu);
    joint.view_mut((j, j), (j, j)).copy_from(&v_cov);
    let mut cross = DMatrix::zeros(j, 2 * j);
    cross.view_mut((0, 0), (j, j)).copy_from(&gu);
    cross.view_mut((0, j), (j, j)).copy_from(&gs);
    let s_tilde_gain = row_major(&(cross * spd_inverse(&joint, "cov(U, V)")?));

    let sampler = Sampler::new(model, seed);
    let sq = lambda_q.sqrt();
    let pairs: Vec<(usize, usize)> = (0..j).flat_map(|r| (r..j).map(move |c| (r, c))).collect();
    let np = pairs.len();
    // Layout: [sigma entries, (S - S_hat) entries, paired residual, delta entries].
    let moments = reduce(n, 4 * np, |t, out| {
        let d = sampler.draw(t);
        let s: Vec<f64> = (0..j).map(|i| d.x[i] + d.z[i]).collect();
        let v: Vec<f64> = (0..j).map(|i| s[i] + sq * d.q[i]).collect();
        let mut e = vec![0.0; j];
        mat_vec(&fe, &d.e[..j], &mut e);
        let mut w = vec![0.0; j];
        mat_vec(&w_gain, &s, &mut w);
        let u: Vec<f64> = (0..j).map(|i| s[i] - w[i] - e[i]).collect();

        let mut s_hat = vec![0.0; j];
        mat_vec(&s_hat_gain, &v, &mut s_hat);
        let mut u_hat = vec![0.0; j];
        mat_vec(&u_from_s, &s_hat, &mut u_hat);
        let uv: Vec<f64> = u.iter().chain(&v).copied().collect();
        let mut s_tilde = vec![0.0; j];
        mat_vec(&s_tilde_gain, &uv, &mut s_tilde);

        let eu: Vec<f64> = (0..j).map(|i| u[i] - u_hat[i]).collect();
        let es: Vec<f64> = (0..j).map(|i| s[i] - s_hat[i]).collect();
        let mut ges = vec![0.0; j];
        mat_vec(&u_from_s, &es, &mut ges);
        let et: Vec<f64> = (0..j).map(|i| s[i] - s_tilde[i]).collect();
        for (p, &(r, c)) in pairs.iter().enumerate() {
            out[p] = eu[r] * eu[c];
            out[np + p] = es[r] * es[c];
            out[2 * np + p] = eu[r] * eu[c] - ges[r] * ges[c];
            out[3 * np + p] = et[r] * et[c];
        }
    });

    let mut d_hat = DMatrix::zeros(j, j);
    for (p, &(r, c)) in pairs.iter().enumerate() {
        d_hat[(r, c)] = moments.mean[np + p];
        d_hat[(c, r)] = moments.mean[np + p];
    }
    let sigma_expected = sigma_identity(&gu, &gs, &d_hat)?;
    let d_exact = &gs - &gs * &v_inv * &gs;
    let delta_expected = delta_bound(&d_exact, lambda_w, &gs)?;

    let sigma = pairs
        .iter()
        .enumerate()
        .map(|(p, &(r, c))| EntryComparison {
            row: r,
            col: c,
            estimate: moments.mean[p],
            expected: sigma_expected[(r, c)],
            std_err: moments.std_err(2 * np + p),
        })
        .collect();
    let delta = pairs
        .iter()
        .enumerate()
        .map(|(p, &(r, c))| EntryComparison {
            row: r,
            col: c,
            estimate: moments.mean[3 * np + p],
            expected: delta_expected[(r, c)],
            std_err: moments.std_err(3 * np + p),
        })
        .collect();

    Ok(DecompositionReport {
        j,
        lambda_w,
        lambda_q,
        n,
        seed,
        sigma,
        delta,
        delta_diagonal: crate::rdcore::harmonic(lambda_w, lambda_q),
        gate: ENTRY_GATE,
    })
}
