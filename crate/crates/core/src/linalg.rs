//! Hermitian eigendecompositions of `nalgebra` matrices, computed by `faer`.

use faer::{Mat, Side};
use nalgebra::DMatrix;

use crate::spin::C64;

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a real
/// symmetric matrix. A failed decomposition yields NaN eigenvalues.
pub(crate) fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let a = Mat::<f64>::from_fn(n, n, |i, j| m[(i, j)]);
    let Ok(e) = a.self_adjoint_eigen(Side::Lower) else {
        return (vec![f64::NAN; n], DMatrix::zeros(n, n));
    };
    let s = e.S();
    let u = e.U();
    ((0..n).map(|i| s[i]).collect(), DMatrix::from_fn(n, n, |i, j| u[(i, j)]))
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian
/// matrix. A failed decomposition yields NaN eigenvalues.
pub(crate) fn herm_eigen(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let a = Mat::<faer::c64>::from_fn(n, n, |i, j| m[(i, j)]);
    let Ok(e) = a.self_adjoint_eigen(Side::Lower) else {
        return (vec![f64::NAN; n], DMatrix::zeros(n, n));
    };
    let s = e.S();
    let u = e.U();
    ((0..n).map(|i| s[i].re).collect(), DMatrix::from_fn(n, n, |i, j| u[(i, j)]))
}

/// Eigenvalues (ascending) of a Hermitian matrix.
pub(crate) fn herm_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let a = Mat::<faer::c64>::from_fn(n, n, |i, j| m[(i, j)]);
    a.self_adjoint_eigenvalues(Side::Lower)
        .unwrap_or_else(|_| vec![f64::NAN; n])
}
