//! Small dense symmetric helpers on top of nalgebra.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Absolute symmetry tolerance, scaled by the largest entry when that exceeds one.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub(crate) fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: m.ncols(),
        });
    }
    let scale = m.amax().max(1.0);
    let a = asymmetry(m);
    if a > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: a });
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(m)?;
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    Ok(min_eigenvalue_unchecked(m))
}

/// `true` iff the smallest eigenvalue is at least `-tol`.
pub fn is_psd(m: &DMatrix<f64>, tol: f64) -> Result<bool> {
    Ok(min_eigenvalue(m)? >= -tol)
}

pub(crate) fn min_eigenvalue_unchecked(m: &DMatrix<f64>) -> f64 {
    let sym = symmetrized(m);
    sym.symmetric_eigenvalues().min()
}

/// All eigenvalues in ascending order.
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(m)?;
    let mut ev: Vec<f64> = symmetrized(m)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    Ok(ev)
}

pub(crate) fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Frobenius inner product `<A, B> = trace(A^T B)`.
pub(crate) fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_swap() {
        assert!((min_eigenvalue(&DMatrix::identity(4, 4)).unwrap() - 1.0).abs() < 1e-14);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((min_eigenvalue(&swap).unwrap() + 1.0).abs() < 1e-14);
        assert!(!is_psd(&swap, 1e-9).unwrap());
        assert!(is_psd(&DMatrix::identity(3, 3), 0.0).unwrap());
    }

    #[test]
    fn rejects_asymmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            min_eigenvalue(&m),
            Err(Error::NotSymmetric { .. })
        ));
        let rect = DMatrix::<f64>::zeros(2, 3);
        assert!(min_eigenvalue(&rect).is_err());
    }
}
