#![allow(dead_code)]

use consensus_forge::Matrix;
use nalgebra::DMatrix;

pub fn to_na(m: &Matrix<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_na(m: &DMatrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Largest eigenvalue of a symmetric matrix, by nalgebra.
pub fn na_lambda_max(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().max()
}

/// Largest real part of the eigenvalues of a square matrix, by nalgebra.
pub fn na_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn na_sqrt_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = m.clone().symmetric_eigen();
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    &e.eigenvectors * d * e.eigenvectors.transpose()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

pub fn grounded(n: usize, edges: &[(usize, usize)], pinned: &[usize]) -> DMatrix<f64> {
    let mut lg = DMatrix::zeros(n, n);
    for &(i, j) in edges {
        lg[(i, i)] += 1.0;
        lg[(j, j)] += 1.0;
        lg[(i, j)] -= 1.0;
        lg[(j, i)] -= 1.0;
    }
    for &p in pinned {
        lg[(p, p)] += 1.0;
    }
    lg
}
