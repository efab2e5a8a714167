//! Achievability through Gaussian test channels `V_i = S_i + Q_i`.
//!
//! For a set `A` of `k` encoders the Berger-Tung region `R(A)` is cut out by
//! one sum-rate constraint per nonempty `B ⊆ A`,
//! `sum_{i in B} r_i >= I(S_B; V_B | V_{A \ B})`. With identical channels
//! and a symmetric source the right side depends only on `|B|`, so `k`
//! constraints remain.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{schur_complement, spd_log_det};
use crate::rdcore::{frontier_point, solve_lambda_q, RDPoint};
use crate::spectra::SourceModel;
use nalgebra::DMatrix;

/// Relative slack allowed when checking `b * r >= I_b`.
pub const CONSTRAINT_TOL: f64 = 1e-9;

/// Identical per-encoder Gaussian quantization noise `Q ~ N(0, lambda_q I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestChannel {
    pub lambda_q: f64,
}

impl TestChannel {
    pub fn new(lambda_q: f64) -> Result<Self> {
        if !(lambda_q.is_finite() && lambda_q > 0.0) {
            return Err(Error::NonFinite {
                name: "lambda_q (must be positive)",
                value: lambda_q,
            });
        }
        Ok(Self { lambda_q })
    }

    /// Covariance of `(V_1, ..., V_k)`.
    pub fn output_covariance(&self, model: &SourceModel, k: usize) -> DMatrix<f64> {
        model.s.dense(k) + DMatrix::identity(k, k) * self.lambda_q
    }
}

/// `I(S_B; V_B | V_{A \ B})` for `|B| = b`, `|A| = k`, in nats.
///
/// Given `S_B` and `V_{A\B}`, the residual `V_B - S_B = Q_B` is independent
/// noise, so the quantity is `h(V_B | V_{A\B}) - h(Q_B)`. The conditional
/// covariance is a Schur complement of `Gamma_S + lambda_q I`, which stays
/// above `lambda_q I` and so remains well conditioned for small `lambda_q`.
pub fn subset_mutual_info(
    model: &SourceModel,
    channel: &TestChannel,
    b: usize,
    k: usize,
) -> Result<f64> {
    model.check_index("k", k, 1)?;
    if b < 1 || b > k {
        return Err(Error::IndexOutOfRange {
            name: "b",
            value: b,
            lo: 1,
            hi: k,
        });
    }
    let cov = channel.output_covariance(model, k);
    let keep: Vec<usize> = (0..b).collect();
    let given: Vec<usize> = (b..k).collect();
    let cond = schur_complement(&cov, &keep, &given)?;
    let log_det = spd_log_det(&cond, "conditional covariance of V_B")?;
    Ok(0.5 * (log_det - b as f64 * channel.lambda_q.ln()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsetConstraint {
    /// `|B|`.
    pub size: usize,
    /// `I(S_B; V_B | V_{A\B})`.
    pub required: f64,
    /// `|B| * r`.
    pub provided: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionCheck {
    pub k: usize,
    pub lambda_q: f64,
    /// Symmetric per-encoder rate in nats.
    pub rate: f64,
    pub constraints: Vec<SubsetConstraint>,
}

impl RegionCheck {
    pub fn all_satisfied(&self) -> bool {
        self.constraints.iter().all(|c| c.satisfied)
    }

    /// `|k r - I(S_A; V_A)|`.
    pub fn full_set_gap(&self) -> f64 {
        self.constraints
            .last()
            .map(|c| (c.provided - c.required).abs())
            .unwrap_or(f64::NAN)
    }

    pub fn violations(&self) -> impl Iterator<Item = &SubsetConstraint> {
        self.constraints.iter().filter(|c| !c.satisfied)
    }
}

/// Check that `r_bar^(k)(d_k) 1_k` lies in `R(A)` for every `|A| = k`.
pub fn check_symmetric_rate(model: &SourceModel, k: usize, d_k: f64) -> Result<RegionCheck> {
    let lambda_q = solve_lambda_q(model, k, d_k)?;
    let channel = TestChannel::new(lambda_q)?;
    region_check_at(model, k, &channel)
}

pub fn region_check_at(
    model: &SourceModel,
    k: usize,
    channel: &TestChannel,
) -> Result<RegionCheck> {
    let full = subset_mutual_info(model, channel, k, k)?;
    let rate = full / k as f64;
    let constraints = (1..=k)
        .map(|b| {
            let required = subset_mutual_info(model, channel, b, k)?;
            let provided = b as f64 * rate;
            Ok(SubsetConstraint {
                size: b,
                required,
                provided,
                satisfied: required - provided <= CONSTRAINT_TOL * required.max(1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RegionCheck {
        k,
        lambda_q: channel.lambda_q,
        rate,
        constraints,
    })
}

/// The achievable frontier point at `(k, d_k)`, after confirming that its
/// symmetric rate is admissible for the Berger-Tung region.
pub fn achievable_point(model: &SourceModel, k: usize, d_k: f64) -> Result<RDPoint> {
    let point = frontier_point(model, k, d_k)?;
    let region = region_check_at(model, k, &TestChannel::new(point.lambda_q)?)?;
    if let Some(bad) = region.violations().next() {
        return Err(Error::Inconsistent(format!(
            "symmetric rate violates the |B| = {} constraint: {} < {}",
            bad.size, bad.provided, bad.required
        )));
    }
    if (region.rate - point.rate).abs() > 1e-10 * point.rate.max(1.0) {
        return Err(Error::Inconsistent(format!(
            "log-det rate {} disagrees with closed form {}",
            region.rate, point.rate
        )));
    }
    Ok(point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m0(ell: usize) -> SourceModel {
        SourceModel::new(1.0, 0.0, 1.0, 0.0, ell).unwrap()
    }

    #[test]
    fn full_set_matches_rate() {
        let ch = TestChannel::new(2.0).unwrap();
        let full = subset_mutual_info(&m0(3), &ch, 2, 2).unwrap();
        assert!((full - 2.0 * 0.25 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_element_by_hand() {
        // M0 has independent components: I(S_1; V_1 | V_2) = I(S_1; V_1)
        // = 0.5 ln((2 + 2) / 2).
        let ch = TestChannel::new(2.0).unwrap();
        let one = subset_mutual_info(&m0(3), &ch, 1, 2).unwrap();
        assert!((one - 0.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn vanishes_for_huge_noise() {
        let m = SourceModel::new(1.0, 0.4, 0.5, 0.2, 4).unwrap();
        let ch = TestChannel::new(1e12).unwrap();
        for b in 1..=4 {
            assert!(subset_mutual_info(&m, &ch, b, 4).unwrap() < 1e-10);
        }
    }

    #[test]
    fn worked_region() {
        let rc = check_symmetric_rate(&m0(3), 2, 0.75).unwrap();
        assert!(rc.all_satisfied());
        assert!(rc.full_set_gap() < 1e-12);
        assert_eq!(rc.constraints.len(), 2);

        let rc = check_symmetric_rate(&m0(3), 1, 0.75).unwrap();
        assert_eq!(rc.constraints.len(), 1);
        assert!(rc.full_set_gap() < 1e-12);
    }

    #[test]
    fn achievable_point_worked() {
        let p = achievable_point(&m0(3), 2, 0.75).unwrap();
        assert!((p.rate - 0.25 * 4f64.ln()).abs() < 1e-12);
        assert_eq!(p.profile.len(), 2);
        for d in &p.profile {
            assert!((d - 0.75).abs() < 1e-12);
        }
        let q = achievable_point(&m0(3), 2, 0.8).unwrap();
        assert!(q.rate < p.rate);
    }

    #[test]
    fn rejects_bad_channel_and_indices() {
        assert!(TestChannel::new(0.0).is_err());
        assert!(TestChannel::new(f64::INFINITY).is_err());
        let ch = TestChannel::new(1.0).unwrap();
        assert!(subset_mutual_info(&m0(3), &ch, 0, 2).is_err());
        assert!(subset_mutual_info(&m0(3), &ch, 3, 2).is_err());
    }
}
