//! Symmetric covariance families and their two-eigenvalue structure.
//!
//! Every covariance in this crate has constant diagonal `gamma` and constant
//! off-diagonal `rho * gamma`. Its leading `j x j` block is diagonalized by
//! any orthogonal matrix whose first column is `1_j / sqrt(j)`, leaving the
//! eigenvalue `(1 + (j-1) rho) gamma` once and `(1 - rho) gamma` with
//! multiplicity `j - 1`. All closed forms downstream are written in terms of
//! these two numbers.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute slack on eigenvalue nonnegativity. Eigenvalues within this
/// distance of zero are reported as exactly zero, so boundary correlations
/// such as `rho = 1` and `rho = -1/(ell-1)` land on the degenerate branches.
pub const PSD_TOL: f64 = 1e-12;

fn snap(value: f64) -> f64 {
    if value.abs() <= PSD_TOL {
        0.0
    } else {
        value
    }
}

/// Covariance with constant diagonal `gamma` and off-diagonal `rho * gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetricSpec {
    pub gamma: f64,
    pub rho: f64,
    pub ell: usize,
}

/// The two distinct eigenvalues of the leading `j x j` block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralView {
    pub j: usize,
    /// Eigenvalue along `1_j`, multiplicity one.
    pub lambda1: f64,
    /// Eigenvalue on the orthogonal complement, multiplicity `j - 1`.
    pub lambda2: f64,
}

impl SymmetricSpec {
    pub fn new(gamma: f64, rho: f64, ell: usize) -> Self {
        Self { gamma, rho, ell }
    }

    /// `(1 + (j-1) rho) gamma`. Defined for every `j >= 0`; at `j = 0` it
    /// coincides with [`lambda2`](Self::lambda2).
    pub fn lambda1(&self, j: usize) -> f64 {
        snap((1.0 + (j as f64 - 1.0) * self.rho) * self.gamma)
    }

    /// `(1 - rho) gamma`.
    pub fn lambda2(&self) -> f64 {
        snap((1.0 - self.rho) * self.gamma)
    }

    pub fn eigenvalues(&self, j: usize) -> Result<SpectralView> {
        if j < 1 || j > self.ell {
            return Err(Error::IndexOutOfRange {
                name: "j",
                value: j,
                lo: 1,
                hi: self.ell,
            });
        }
        Ok(SpectralView {
            j,
            lambda1: self.lambda1(j),
            lambda2: self.lambda2(),
        })
    }

    /// The leading `j x j` block as a dense matrix. `j` may exceed `ell`;
    /// the pattern simply continues.
    pub fn dense(&self, j: usize) -> DMatrix<f64> {
        let off = self.rho * self.gamma;
        DMatrix::from_fn(j, j, |r, c| if r == c { self.gamma } else { off })
    }

    fn check_psd(&self, source_name: &'static str) -> Result<()> {
        for (name, value) in [("gamma", self.gamma), ("rho", self.rho)] {
            if !value.is_finite() {
                return Err(Error::NonFinite { name, value });
            }
        }
        let l1 = (1.0 + (self.ell as f64 - 1.0) * self.rho) * self.gamma;
        if l1 < -PSD_TOL {
            return Err(Error::NotPsd {
                source_name,
                eigenvalue: format!("lambda1({})", self.ell),
                value: l1,
            });
        }
        let l2 = (1.0 - self.rho) * self.gamma;
        if l2 < -PSD_TOL {
            return Err(Error::NotPsd {
                source_name,
                eigenvalue: "lambda2".to_string(),
                value: l2,
            });
        }
        Ok(())
    }
}

impl SpectralView {
    /// `Theta diag(lambda1, lambda2, ..., lambda2) Theta^T` with the basis
    /// from [`basis`].
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let theta = basis(self.j);
        let mut diag = DVector::from_element(self.j, self.lambda2);
        diag[0] = self.lambda1;
        &theta * DMatrix::from_diagonal(&diag) * theta.transpose()
    }
}

/// Deterministic orthogonal basis for the symmetric family of size `j`.
///
/// This is the Householder reflection `I - 2 v v^T / (v^T v)` with
/// `v = e_1 - 1_j / sqrt(j)`, which maps `e_1` to `1_j / sqrt(j)`. It is
/// symmetric, so its first column and first row are both `1_j / sqrt(j)`.
/// For `j = 1` it is `[1]`.
pub fn basis(j: usize) -> DMatrix<f64> {
    let mut theta = DMatrix::identity(j, j);
    if j <= 1 {
        return theta;
    }
    let u = 1.0 / (j as f64).sqrt();
    let mut v = DVector::from_element(j, -u);
    v[0] += 1.0;
    let vv = v.dot(&v);
    theta -= (&v * v.transpose()) * (2.0 / vv);
    theta
}

/// Signal, noise, and the derived observation covariance `Gamma_S = Gamma_X + Gamma_Z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SourceModel {
    pub x: SymmetricSpec,
    pub z: SymmetricSpec,
    pub s: SymmetricSpec,
}

/// Build a [`SourceModel`] after checking positive semidefiniteness of every
/// block and `gamma_x > 0`.
pub fn validate(x: SymmetricSpec, z: SymmetricSpec) -> Result<SourceModel> {
    if x.ell != z.ell {
        return Err(Error::DimensionMismatch {
            signal: x.ell,
            noise: z.ell,
        });
    }
    if x.ell < 2 {
        return Err(Error::DimensionTooSmall(x.ell));
    }
    x.check_psd("signal")?;
    if x.gamma <= 0.0 {
        return Err(Error::NonPositiveSignalVariance(x.gamma));
    }
    z.check_psd("noise")?;
    let gamma = x.gamma + z.gamma;
    let s = SymmetricSpec {
        gamma,
        rho: (x.rho * x.gamma + z.rho * z.gamma) / gamma,
        ell: x.ell,
    };
    s.check_psd("observation")?;
    Ok(SourceModel { x, z, s })
}

impl SourceModel {
    /// Convenience constructor: `validate` on two specs sharing `ell`.
    pub fn new(gamma_x: f64, rho_x: f64, gamma_z: f64, rho_z: f64, ell: usize) -> Result<Self> {
        validate(
            SymmetricSpec::new(gamma_x, rho_x, ell),
            SymmetricSpec::new(gamma_z, rho_z, ell),
        )
    }

    pub fn ell(&self) -> usize {
        self.x.ell
    }

    /// Sign of `rho_s`, with `|rho_s| <= 1e-12` treated as zero.
    pub fn rho_s_sign(&self) -> Ordering {
        let off = self.x.rho * self.x.gamma + self.z.rho * self.z.gamma;
        if off.abs() <= PSD_TOL * self.s.gamma {
            Ordering::Equal
        } else if off > 0.0 {
            Ordering::Greater
        } else {
            Ordering::Less
        }
    }

    pub fn check_index(&self, name: &'static str, value: usize, lo: usize) -> Result<()> {
        if value < lo || value > self.ell() {
            return Err(Error::IndexOutOfRange {
                name,
                value,
                lo,
                hi: self.ell(),
            });
        }
        Ok(())
    }

    /// Minimum achievable distortion with all `j` observations available
    /// uncoded, averaged over the `j` components.
    pub fn d_min(&self, j: usize) -> f64 {
        let s1 = self.s.lambda1(j);
        let s2 = self.s.lambda2();
        let first = if s1 == 0.0 {
            0.0
        } else {
            self.x.lambda1(j) * self.z.lambda1(j) / s1
        };
        let second = if s2 == 0.0 {
            0.0
        } else {
            self.x.lambda2() * self.z.lambda2() / s2
        };
        let j = j as f64;
        first / j + (j - 1.0) / j * second
    }
}
