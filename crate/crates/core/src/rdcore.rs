//! Frontier quantities: the test-channel noise level `lambda_q`, the
//! symmetric rate `r_bar^(k)(d_k)`, the induced distortion profile
//! `d_j^(k)(d_k)`, and the matching conditions that decide when the
//! achievable rate is also a lower bound.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Bound, Error, Result};
use crate::spectra::SourceModel;

/// Inputs closer than this to either end of `(d_min^(k), gamma_x)` are rejected.
pub const ENDPOINT_TOL: f64 = 1e-12;

const BISECTION_STEPS: usize = 200;

/// `(1/a + 1/b)^-1` for nonnegative `a`, `b`, with the convention that a
/// zero argument yields zero.
pub(crate) fn harmonic(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        0.0
    } else {
        a * b / (a + b)
    }
}

/// One point on the achievable frontier at cooperation level `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RDPoint {
    pub k: usize,
    pub d_k: f64,
    pub lambda_q: f64,
    /// Per-encoder rate in nats.
    pub rate: f64,
    /// `d_j^(k)(d_k)` for `j = k..=ell`; entry 0 is `d_k` itself.
    pub profile: Vec<f64>,
}

impl RDPoint {
    /// Distortion with `j` encoders available, `None` when `j` is outside `k..=ell`.
    pub fn distortion(&self, j: usize) -> Option<f64> {
        j.checked_sub(self.k)
            .and_then(|i| self.profile.get(i))
            .copied()
    }

    /// `(j, d_j)` pairs.
    pub fn profile_entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.profile
            .iter()
            .enumerate()
            .map(|(i, &d)| (self.k + i, d))
    }
}

/// Reject `d_k` outside the open interval `(d_min^(k), gamma_x)`.
pub fn check_distortion(model: &SourceModel, k: usize, d_k: f64) -> Result<()> {
    model.check_index("k", k, 1)?;
    if !d_k.is_finite() {
        return Err(Error::NonFinite {
            name: "d_k",
            value: d_k,
        });
    }
    let lower = model.d_min(k);
    if d_k <= lower + ENDPOINT_TOL {
        return Err(Error::DistortionOutOfRange {
            k,
            d: d_k,
            bound: Bound::Lower,
            limit: lower,
        });
    }
    let upper = model.x.gamma;
    if d_k >= upper - ENDPOINT_TOL {
        return Err(Error::DistortionOutOfRange {
            k,
            d: d_k,
            bound: Bound::Upper,
            limit: upper,
        });
    }
    Ok(())
}

/// Average MMSE of the first `j` targets from `V_i = S_i + Q_i`, `i <= j`,
/// as a function of the per-encoder noise `lambda_q`.
pub fn distortion_at(model: &SourceModel, j: usize, lambda_q: f64) -> f64 {
    let (x, z, s) = (&model.x, &model.z, &model.s);
    let lead = x.lambda1(j) * (z.lambda1(j) + lambda_q) / (s.lambda1(j) + lambda_q);
    let rest = if j > 1 {
        x.lambda2() * (z.lambda2() + lambda_q) / (s.lambda2() + lambda_q)
    } else {
        0.0
    };
    let jf = j as f64;
    lead / jf + (jf - 1.0) / jf * rest
}

/// Symmetric per-encoder rate `(1/2k) log det(Gamma_S + lambda_q I) / lambda_q^k`, in nats.
pub fn rate_at(model: &SourceModel, k: usize, lambda_q: f64) -> f64 {
    let s1 = model.s.lambda1(k);
    let s2 = model.s.lambda2();
    let kf = k as f64;
    ((s1 / lambda_q).ln_1p() + (kf - 1.0) * (s2 / lambda_q).ln_1p()) / (2.0 * kf)
}

/// The unique `lambda_q > 0` with `distortion_at(model, k, lambda_q) == d_k`.
///
/// The left side is strictly increasing in `lambda_q`, running from
/// `d_min^(k)` at zero to `gamma_x` at infinity, so bracketed bisection
/// converges unconditionally. The bracket's upper end is doubled until it
/// overshoots, then bisection runs until the bracket stops shrinking.
pub fn solve_lambda_q(model: &SourceModel, k: usize, d_k: f64) -> Result<f64> {
    check_distortion(model, k, d_k)?;
    let f = |lambda: f64| distortion_at(model, k, lambda);

    let mut lo = 0.0_f64;
    let mut hi = model.s.gamma;
    while f(hi) <= d_k {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Inconsistent(format!(
                "no finite lambda_q bracket for d_{k} = {d_k}"
            )));
        }
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match f(mid).partial_cmp(&d_k) {
            Some(Ordering::Less) => lo = mid,
            Some(Ordering::Greater) => hi = mid,
            _ => return Ok(mid),
        }
    }
    if lo == 0.0 || (f(hi) - d_k).abs() <= (f(lo) - d_k).abs() {
        Ok(hi)
    } else {
        Ok(lo)
    }
}

pub fn rate_bar(model: &SourceModel, k: usize, d_k: f64) -> Result<f64> {
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    Ok(rate_at(model, k, lambda_q))
}

/// `d_j^(k)(d_k)` for `j = k..=ell`.
pub fn distortion_profile(model: &SourceModel, k: usize, d_k: f64) -> Result<Vec<f64>> {
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    Ok(profile_at(model, k, lambda_q))
}

pub(crate) fn profile_at(model: &SourceModel, k: usize, lambda_q: f64) -> Vec<f64> {
    (k..=model.ell())
        .map(|j| distortion_at(model, j, lambda_q))
        .collect()
}

/// Rate, `lambda_q`, and the full profile in one call.
pub fn frontier_point(model: &SourceModel, k: usize, d_k: f64) -> Result<RDPoint> {
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    Ok(RDPoint {
        k,
        d_k,
        lambda_q,
        rate: rate_at(model, k, lambda_q),
        profile: profile_at(model, k, lambda_q),
    })
}

/// The ratios `mu^(k)`, `nu^(k)` and `nu^(k,j)`. `None` marks a zero
/// denominator (a degenerate spectrum).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuNu {
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    /// `(j, nu^(k,j))` for `j = k..=ell`.
    pub nu_kj: Vec<(usize, Option<f64>)>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den != 0.0).then(|| num / den)
}

/// `mu^(k)` at a given `lambda_q`, via the harmonic-mean form
/// `[l2 q/(l2 + q)] / [l1 q/(l1 + q)]`.
pub fn mu_at(model: &SourceModel, k: usize, lambda_q: f64) -> Option<f64> {
    ratio(
        harmonic(model.s.lambda2(), lambda_q),
        harmonic(model.s.lambda1(k), lambda_q),
    )
}

/// `nu^(k,j)` at a given `lambda_q`; `nu^(k) = nu^(k,k)`.
pub fn nu_at(model: &SourceModel, j: usize, lambda_q: f64) -> Option<f64> {
    ratio(
        harmonic(model.s.lambda1(j), lambda_q),
        harmonic(model.s.lambda2(), lambda_q),
    )
}

/// `mu^(k)` evaluated literally as a ratio of Schur complements
/// `l - l (l + q)^-1 l`. Loses accuracy when `lambda_q` is small relative
/// to the eigenvalues; kept as a cross-check for [`mu_at`].
pub fn mu_schur(model: &SourceModel, k: usize, lambda_q: f64) -> Option<f64> {
    let schur = |l: f64| l - l * l / (l + lambda_q);
    ratio(schur(model.s.lambda2()), schur(model.s.lambda1(k)))
}

pub fn mu_nu(model: &SourceModel, k: usize, d_k: f64) -> Result<MuNu> {
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    Ok(mu_nu_at(model, k, lambda_q))
}

pub(crate) fn mu_nu_at(model: &SourceModel, k: usize, lambda_q: f64) -> MuNu {
    let mu = mu_at(model, k, lambda_q);
    #[cfg(debug_assertions)]
    {
        let smallest = model.s.lambda1(k).min(model.s.lambda2());
        if let (Some(a), Some(b)) = (mu, mu_schur(model, k, lambda_q)) {
            if lambda_q > 1e-4 * smallest {
                debug_assert!(
                    (a - b).abs() <= 1e-6 * a.abs().max(1e-300),
                    "mu forms disagree: {a} vs {b}"
                );
            }
        }
    }
    MuNu {
        mu,
        nu: nu_at(model, k, lambda_q),
        nu_kj: (k..=model.ell())
            .map(|j| (j, nu_at(model, j, lambda_q)))
            .collect(),
    }
}

/// Left side of the `rho_s >= 0` matching condition:
/// `(k-1) x2^2 s1^2 mu (mu - 1) + k x1^2 s2^2`.
pub fn cond1_value(model: &SourceModel, k: usize, mu: f64) -> f64 {
    let kf = k as f64;
    let x1 = model.x.lambda1(k);
    let x2 = model.x.lambda2();
    let s1 = model.s.lambda1(k);
    let s2 = model.s.lambda2();
    (kf - 1.0) * x2 * x2 * s1 * s1 * mu * (mu - 1.0) + kf * x1 * x1 * s2 * s2
}

/// Left side of the `rho_s <= 0` matching condition:
/// `x1^2 s2^2 nu (nu - 1) + k x2^2 s1^2`.
pub fn cond2_value(model: &SourceModel, k: usize, nu: f64) -> f64 {
    let kf = k as f64;
    let x1 = model.x.lambda1(k);
    let x2 = model.x.lambda2();
    let s1 = model.s.lambda1(k);
    let s2 = model.s.lambda2();
    x1 * x1 * s2 * s2 * nu * (nu - 1.0) + kf * x2 * x2 * s1 * s1
}

/// First profile condition for `rho_s <= 0`:
/// `(nu_kj + k - 1) x1^2 s2^2 nu^2 + (k-1)(nu_kj - nu) x2^2 s1^2`.
pub fn cond3_value(model: &SourceModel, k: usize, nu: f64, nu_kj: f64) -> f64 {
    let kf = k as f64;
    let a = (model.x.lambda1(k) * model.s.lambda2()).powi(2);
    let b = (model.x.lambda2() * model.s.lambda1(k)).powi(2);
    (nu_kj + kf - 1.0) * a * nu * nu + (kf - 1.0) * (nu_kj - nu) * b
}

/// Second profile condition for `rho_s <= 0`:
/// `(nu_kj - 1) x1^2 s2^2 nu^2 + ((k-1) nu_kj + nu) x2^2 s1^2`.
pub fn cond4_value(model: &SourceModel, k: usize, nu: f64, nu_kj: f64) -> f64 {
    let kf = k as f64;
    let a = (model.x.lambda1(k) * model.s.lambda2()).powi(2);
    let b = (model.x.lambda2() * model.s.lambda1(k)).powi(2);
    (nu_kj - 1.0) * a * nu * nu + ((kf - 1.0) * nu_kj + nu) * b
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Holds,
    Fails,
    /// Implied by the other conditions; reported for completeness.
    Redundant,
    /// The hypothesis on the sign of `rho_s` (or on the spectrum) does not hold.
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Condition {
    pub value: Option<f64>,
    pub verdict: Verdict,
}

impl Condition {
    /// Non-strict: a value of exactly zero holds.
    pub fn evaluate(value: f64) -> Self {
        Self {
            value: Some(value),
            verdict: if value >= 0.0 {
                Verdict::Holds
            } else {
                Verdict::Fails
            },
        }
    }

    pub fn not_applicable() -> Self {
        Self {
            value: None,
            verdict: Verdict::NotApplicable,
        }
    }

    pub fn holds(&self) -> bool {
        matches!(self.verdict, Verdict::Holds | Verdict::Redundant)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileConditions {
    pub j: usize,
    pub nu_kj: Option<f64>,
    pub cond3: Condition,
    pub cond4: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub k: usize,
    pub d_k: f64,
    pub lambda_q: f64,
    /// `rho_s >= 0`, so the `mu` condition applies.
    pub rho_s_nonnegative: bool,
    /// `rho_s <= 0`, so the `nu` conditions apply.
    pub rho_s_nonpositive: bool,
    pub mu: Option<f64>,
    pub nu: Option<f64>,
    pub cond1: Condition,
    pub cond2: Condition,
    pub profile: Vec<ProfileConditions>,
    pub regime: RegimeReport,
}

impl ConditionReport {
    /// Whether the achievable rate at this `d_k` is known to be optimal.
    pub fn rate_certified(&self) -> bool {
        self.cond1.holds() || self.cond2.holds()
    }

    /// Whether `d_j^(k)(d_k)` is known to be the least distortion with `j`
    /// encoders at the optimal rate.
    pub fn profile_certified(&self, j: usize) -> bool {
        if self.cond1.holds() {
            return true;
        }
        self.profile
            .iter()
            .find(|p| p.j == j)
            .is_some_and(|p| p.cond3.holds() && p.cond4.holds())
    }
}

/// Evaluate every matching condition at `(k, d_k)`.
pub fn check_conditions(model: &SourceModel, k: usize, d_k: f64) -> Result<ConditionReport> {
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    let sign = model.rho_s_sign();
    let nonneg = sign != Ordering::Less;
    let nonpos = sign != Ordering::Greater;
    let ratios = mu_nu_at(model, k, lambda_q);

    let cond1 = match ratios.mu {
        Some(mu) if nonneg => Condition::evaluate(cond1_value(model, k, mu)),
        _ => Condition::not_applicable(),
    };
    let cond2 = match ratios.nu {
        Some(nu) if nonpos => Condition::evaluate(cond2_value(model, k, nu)),
        _ => Condition::not_applicable(),
    };

    let profile = ratios
        .nu_kj
        .iter()
        .map(|&(j, nu_kj)| {
            let applicable = nonpos && model.s.lambda1(j) > 0.0;
            let (cond3, cond4) = match (ratios.nu, nu_kj) {
                (Some(nu), Some(nkj)) if applicable => {
                    let mut c3 = Condition::evaluate(cond3_value(model, k, nu, nkj));
                    if j == k {
                        c3.verdict = Verdict::Redundant;
                    }
                    (c3, Condition::evaluate(cond4_value(model, k, nu, nkj)))
                }
                _ => (Condition::not_applicable(), Condition::not_applicable()),
            };
            ProfileConditions {
                j,
                nu_kj,
                cond3,
                cond4,
            }
        })
        .collect();

    Ok(ConditionReport {
        k,
        d_k,
        lambda_q,
        rho_s_nonnegative: nonneg,
        rho_s_nonpositive: nonpos,
        mu: ratios.mu,
        nu: ratios.nu,
        cond1,
        cond2,
        profile,
        regime: classify_regime(model, k)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// `rho_s >= 0`: the condition is a quadratic in `mu^(k)`.
    Mu,
    /// `rho_s < 0`: the condition is a quadratic in `nu^(k)`.
    Nu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// The matching condition holds on the whole distortion interval.
    Always,
    /// Holds for all `d_k` close enough to `d_min^(k)`.
    NearDmin,
    /// Holds near both ends of the interval but fails in between.
    BothEnds,
    /// The roots are `0` and `1`; the condition never holds in the interior.
    DegenerateX,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub branch: Branch,
    pub regime: Regime,
    /// Roots of the quadratic, present only when the discriminant test fails.
    pub roots: Option<(f64, f64)>,
    /// Limit of the ratio as `d_k -> gamma_x` (`s2/s1` or `s1/s2`).
    pub limit_ratio: Option<f64>,
}

/// Classify the matching condition over the whole interval `(d_min^(k), gamma_x)`.
///
/// The condition reads `a t (t - 1) + b >= 0` with `t` the ratio `mu` (or
/// `nu`), which moves monotonically from `1` at `d_min^(k)` to
/// `limit_ratio` at `gamma_x`. When `a <= 4b` it always holds; otherwise
/// the roots `t1 <= t2` in `[0, 1]` are compared with the limit ratio.
pub fn classify_regime(model: &SourceModel, k: usize) -> Result<RegimeReport> {
    model.check_index("k", k, 1)?;
    let kf = k as f64;
    let x1 = model.x.lambda1(k);
    let x2 = model.x.lambda2();
    let s1 = model.s.lambda1(k);
    let s2 = model.s.lambda2();

    let branch = if model.rho_s_sign() == Ordering::Less {
        Branch::Nu
    } else {
        Branch::Mu
    };
    let (a, b, num, den) = match branch {
        Branch::Mu => (
            (kf - 1.0) * (x2 * s1).powi(2),
            kf * (x1 * s2).powi(2),
            s2,
            s1,
        ),
        Branch::Nu => ((x1 * s2).powi(2), kf * (x2 * s1).powi(2), s1, s2),
    };
    let limit_ratio = ratio(num, den);
    let always = RegimeReport {
        branch,
        regime: Regime::Always,
        roots: None,
        limit_ratio,
    };
    // A zero numerator eigenvalue pins the ratio at 0, where the condition
    // holds with equality.
    if num == 0.0 || a <= 4.0 * b {
        return Ok(always);
    }
    let root = (1.0 - 4.0 * b / a).sqrt();
    let (t1, t2) = (0.5 - 0.5 * root, 0.5 + 0.5 * root);
    let limit = limit_ratio.unwrap_or(0.0);
    let regime = if t2 <= limit {
        Regime::Always
    } else if t2 < 1.0 {
        if t1 <= limit {
            Regime::NearDmin
        } else {
            Regime::BothEnds
        }
    } else {
        Regime::DegenerateX
    };
    Ok(RegimeReport {
        branch,
        regime,
        roots: Some((t1, t2)),
        limit_ratio,
    })
}

/// Closed forms for `rho_s = 1` (`lambda_s2 = 0`): returns `(r_bar^(k)(d_k), d_j^(k)(d_k))`.
pub fn degenerate_rate_s2zero(
    model: &SourceModel,
    k: usize,
    j: usize,
    d_k: f64,
) -> Result<(f64, f64)> {
    if model.s.lambda2() != 0.0 {
        return Err(Error::DegenerateSpectrum(format!(
            "closed form requires lambda_s2 = 0, got {}",
            model.s.lambda2()
        )));
    }
    check_distortion(model, k, d_k)?;
    model.check_index("j", j, k)?;
    let (gx, gz, gs) = (model.x.gamma, model.z.gamma, model.s.gamma);
    let (kf, jf) = (k as f64, j as f64);

    let arg_den = gs * d_k - gx * gz;
    if arg_den <= 0.0 {
        return Err(Error::LogDomain("degenerate rate (lambda_s2 = 0)"));
    }
    let rate = (gx * gx / arg_den).ln() / (2.0 * kf);
    let num = (jf - kf) * gx * gx * gz + (kf * gs - jf * gz) * gx * d_k;
    let den = (jf * gs - kf * gz) * gx - (jf - kf) * gs * d_k;
    Ok((rate, num / den))
}

/// Closed form for `lambda_s1^(ell) = 0` at `k = ell`.
pub fn degenerate_rate_s1zero(model: &SourceModel, d_ell: f64) -> Result<f64> {
    let ell = model.ell();
    if model.s.lambda1(ell) != 0.0 {
        return Err(Error::DegenerateSpectrum(format!(
            "closed form requires lambda_s1^({ell}) = 0, got {}",
            model.s.lambda1(ell)
        )));
    }
    check_distortion(model, ell, d_ell)?;
    let lf = ell as f64;
    let (x2, z2, s2) = (model.x.lambda2(), model.z.lambda2(), model.s.lambda2());
    let den = lf * s2 * d_ell - (lf - 1.0) * x2 * z2;
    let num = (lf - 1.0) * x2 * x2;
    if den <= 0.0 || num <= 0.0 {
        return Err(Error::LogDomain("degenerate rate (lambda_s1 = 0)"));
    }
    Ok((lf - 1.0) / (2.0 * lf) * (num / den).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m0(ell: usize) -> SourceModel {
        SourceModel::new(1.0, 0.0, 1.0, 0.0, ell).unwrap()
    }

    /// Plain bisection on the defining equation, kept apart from `solve_lambda_q`.
    fn bisect_oracle(model: &SourceModel, k: usize, d: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, 1e6);
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if distortion_at(model, k, mid) < d {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn lambda_q_worked_example() {
        let m = m0(3);
        let lq = solve_lambda_q(&m, 2, 0.75).unwrap();
        assert!((lq - 2.0).abs() < 1e-12);
        assert!((bisect_oracle(&m, 2, 0.75) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_q_k1_closed_form() {
        for (gx, rx, gz, rz, d) in [
            (1.0, 0.0, 1.0, 0.0, 0.75),
            (2.0, 0.3, 0.5, -0.2, 1.1),
            (0.7, -0.1, 3.0, 0.6, 0.6),
        ] {
            let m = SourceModel::new(gx, rx, gz, rz, 4).unwrap();
            let expected = (d * m.s.gamma - gx * gz) / (gx - d);
            let lq = solve_lambda_q(&m, 1, d).unwrap();
            assert!(
                (lq - expected).abs() <= 1e-12 * expected,
                "{lq} vs {expected}"
            );
        }
    }

    #[test]
    fn endpoints_are_rejected() {
        let m = m0(3);
        match solve_lambda_q(&m, 2, 0.5) {
            Err(Error::DistortionOutOfRange {
                bound: Bound::Lower,
                limit,
                ..
            }) => assert!((limit - 0.5).abs() < 1e-15),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            solve_lambda_q(&m, 2, 1.0),
            Err(Error::DistortionOutOfRange {
                bound: Bound::Upper,
                ..
            })
        ));
        assert!(solve_lambda_q(&m, 2, 0.5 + 1e-13).is_err());
        assert!(solve_lambda_q(&m, 0, 0.7).is_err());
        assert!(solve_lambda_q(&m, 4, 0.7).is_err());
        let msg = solve_lambda_q(&m, 2, 0.5).unwrap_err().to_string();
        assert!(msg.contains("d_min^(2) = 0.5"), "{msg}");
    }

    #[test]
    fn rate_worked_examples() {
        let m = m0(3);
        let r = rate_bar(&m, 2, 0.75).unwrap();
        assert!((r - 0.25 * 4f64.ln()).abs() < 1e-12);
        let r1 = rate_bar(&m, 1, 0.75).unwrap();
        assert!((r1 - 0.5 * 2f64.ln()).abs() < 1e-12);
        // Approaching gamma_x the rate vanishes.
        assert!(rate_bar(&m, 2, 1.0 - 1e-9).unwrap() < 1e-8);
    }

    #[test]
    fn profile_examples() {
        let m = m0(3);
        let p = distortion_profile(&m, 2, 0.75).unwrap();
        assert_eq!(p.len(), 2);
        assert!((p[0] - 0.75).abs() < 1e-12);
        assert!((p[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn mu_nu_identity_spectrum() {
        let r = mu_nu(&m0(3), 2, 0.75).unwrap();
        assert_eq!(r.mu, Some(1.0));
        assert_eq!(r.nu, Some(1.0));
    }

    #[test]
    fn mu_vanishes_when_s2_is_zero() {
        let m = SourceModel::new(1.0, 1.0, 1.0, 1.0, 3).unwrap();
        let d = 0.5 * (m.d_min(3) + 1.0);
        let r = mu_nu(&m, 3, d).unwrap();
        assert_eq!(r.mu, Some(0.0));
        assert_eq!(r.nu, None);
    }

    #[test]
    fn mu_two_forms_agree() {
        let m = SourceModel::new(1.0, 0.5, 1.0, 0.0, 3).unwrap();
        let lq = solve_lambda_q(&m, 3, 0.6).unwrap();
        let a = mu_at(&m, 3, lq).unwrap();
        let b = mu_schur(&m, 3, lq).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn conditions_worked_example() {
        let rep = check_conditions(&m0(3), 2, 0.75).unwrap();
        // mu = 1 kills the quadratic term; 2 * 1 * 2^2 = 8 remains.
        assert_eq!(rep.cond1.value, Some(8.0));
        assert!(rep.cond1.holds());
        assert!(rep.cond2.holds());
        assert_eq!(rep.profile[0].cond3.verdict, Verdict::Redundant);
        assert!(rep.rate_certified());
    }

    #[test]
    fn conditions_mark_inapplicable_branches() {
        let m = SourceModel::new(1.0, 0.5, 1.0, 0.0, 3).unwrap();
        let rep = check_conditions(&m, 2, 0.6).unwrap();
        assert_eq!(rep.cond2.verdict, Verdict::NotApplicable);
        assert!(rep
            .profile
            .iter()
            .all(|p| p.cond3.verdict == Verdict::NotApplicable));
        assert_ne!(rep.cond1.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn cond1_holds_with_equality_when_s2_is_zero() {
        let m = SourceModel::new(1.0, 1.0, 0.5, 1.0, 3).unwrap();
        let d = 0.5 * (m.d_min(2) + 1.0);
        let rep = check_conditions(&m, 2, d).unwrap();
        assert_eq!(rep.cond1.value, Some(0.0));
        assert!(rep.cond1.holds());
    }

    #[test]
    fn cond4_at_j_equal_k_tracks_cond2() {
        let m = SourceModel::new(1.0, -0.3, 1.0, 0.1, 4).unwrap();
        for d in [0.5, 0.65, 0.8] {
            let rep = check_conditions(&m, 2, d).unwrap();
            let nu = rep.nu.unwrap();
            let c4 = rep.profile[0].cond4.value.unwrap();
            let c2 = rep.cond2.value.unwrap();
            assert!((c4 - nu * c2).abs() <= 1e-12 * c2.abs().max(1.0));
            assert_eq!(rep.profile[0].cond4.holds(), rep.cond2.holds());
        }
    }

    #[test]
    fn zero_counts_as_satisfied() {
        assert!(Condition::evaluate(0.0).holds());
        assert!(Condition::evaluate(-0.0).holds());
        assert!(!Condition::evaluate(-1e-300).holds());
    }

    #[test]
    fn regime_examples() {
        for k in 1..=3 {
            assert_eq!(classify_regime(&m0(3), k).unwrap().regime, Regime::Always);
        }
        // lambda_x1^(3) = 0 needs rho_x = -1/2; a strongly correlated noise
        // keeps rho_s > 0.
        let m = SourceModel::new(1.0, -0.5, 2.0, 0.9, 3).unwrap();
        assert_eq!(m.x.lambda1(3), 0.0);
        assert!(m.s.lambda1(3) > m.s.lambda2());
        let rep = classify_regime(&m, 3).unwrap();
        assert_eq!(rep.regime, Regime::DegenerateX);
        assert_eq!(rep.roots, Some((0.0, 1.0)));
    }

    #[test]
    fn degenerate_s2zero_examples() {
        let m = SourceModel::new(1.0, 1.0, 1.0, 1.0, 3).unwrap();
        let (rate, d2) = degenerate_rate_s2zero(&m, 2, 2, 0.75).unwrap();
        assert!((rate - 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((d2 - 0.75).abs() < 1e-15);
        // The general formula agrees at the exact degeneracy too.
        assert!((rate_bar(&m, 2, 0.75).unwrap() - rate).abs() < 1e-12);
        let (_, d3) = degenerate_rate_s2zero(&m, 2, 3, 0.75).unwrap();
        let p = distortion_profile(&m, 2, 0.75).unwrap();
        assert!((p[1] - d3).abs() < 1e-12);
        assert!(degenerate_rate_s2zero(&m0(3), 2, 2, 0.75).is_err());
    }

    #[test]
    fn degenerate_s1zero_examples() {
        // ell = 2, lambda_x2 = lambda_z2 = 1 forces gamma = 1/2, rho = -1.
        let m = SourceModel::new(0.5, -1.0, 0.5, -1.0, 2).unwrap();
        assert_eq!(m.s.lambda2(), 2.0);
        let r = degenerate_rate_s1zero(&m, 0.375).unwrap();
        assert!((r - 0.25 * 2f64.ln()).abs() < 1e-15);
        assert!((rate_bar(&m, 2, 0.375).unwrap() - r).abs() < 1e-12);
        // The rate tends to zero at gamma_x.
        assert!(degenerate_rate_s1zero(&m, 0.5 - 1e-9).unwrap() < 1e-8);
        assert!(degenerate_rate_s1zero(&m0(2), 0.75).is_err());
    }
}
