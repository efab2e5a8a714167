//! Small dense helpers over `nalgebra` used by the matrix identities and the
//! Monte Carlo layer.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or(Error::NotPositiveDefinite(what))
}

/// `log det` of a symmetric positive definite matrix.
pub fn spd_log_det(m: &DMatrix<f64>, what: &'static str) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite(what))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

/// Submatrix on the given row/column index sets.
pub fn select(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| m[(rows[r], cols[c])])
}

/// Schur complement `A_bb - A_bc A_cc^-1 A_cb` of the `keep` block.
pub fn schur_complement(m: &DMatrix<f64>, keep: &[usize], given: &[usize]) -> Result<DMatrix<f64>> {
    let a_bb = select(m, keep, keep);
    if given.is_empty() {
        return Ok(a_bb);
    }
    let a_bc = select(m, keep, given);
    let a_cc = select(m, given, given);
    let chol = a_cc
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("conditioning block"))?;
    let solved = chol.solve(&a_bc.transpose());
    Ok(a_bb - a_bc * solved)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schur_of_diagonal_is_block() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]));
        let s = schur_complement(&m, &[0, 2], &[1]).unwrap();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]));
    }

    #[test]
    fn log_det_and_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((spd_log_det(&m, "m").unwrap() - 3f64.ln()).abs() < 1e-14);
        let inv = spd_inverse(&m, "m").unwrap();
        assert!((&m * inv - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_inverse(&bad, "bad").is_err());
        assert!((min_eigenvalue(&bad) + 1.0).abs() < 1e-14);
    }
}
