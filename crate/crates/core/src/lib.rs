//! Rate-distortion analysis for the symmetric quadratic Gaussian CEO problem
//! with a distortion constraint on only `k` of `ell` reconstructed sources.
//!
//! The crate is organized bottom-up:
//!
//! - [`spectra`]: the compound-symmetric covariance family and its two
//!   distinct eigenvalues.
//! - [`rdcore`]: the achievable frontier `r_bar^(k)(d_k)`, the induced
//!   distortion profile, and the sufficient conditions that certify tightness.
//! - [`bergertung`]: Gaussian test channels and the subset mutual-information
//!   constraints of the achievable region.
//! - [`converse`]: the convex programs behind the lower bound and their KKT
//!   certificates.
//! - [`mcsim`]: Monte Carlo estimates of the Gaussian scheme's distortions
//!   and of the decomposition used in the converse.
//!
//! All rates are in nats per encoder.
//!
//! ```
//! use ceo_rd::{rdcore, SourceModel};
//!
//! let model = SourceModel::new(1.0, 0.0, 1.0, 0.0, 3)?;
//! let rate = rdcore::rate_bar(&model, 2, 0.75)?;
//! assert!((rate - 0.25 * 4f64.ln()).abs() < 1e-12);
//! # Ok::<(), ceo_rd::Error>(())
//! ```

// `!(x > 0.0)` style checks are used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bergertung;
pub mod converse;
mod error;
pub mod linalg;
pub mod mcsim;
pub mod rdcore;
pub mod spectra;

pub use error::{Bound, Error, Result};
pub use spectra::{SourceModel, SymmetricSpec};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/frontier.md")]
    mod frontier {}
    #[doc = include_str!("../../../book/src/conditions.md")]
    mod conditions {}
    #[doc = include_str!("../../../book/src/achievability.md")]
    mod achievability {}
    #[doc = include_str!("../../../book/src/converse.md")]
    mod converse {}
    #[doc = include_str!("../../../book/src/monte-carlo.md")]
    mod monte_carlo {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
