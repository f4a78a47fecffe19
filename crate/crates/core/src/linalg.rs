//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector};

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.singular_values().max()
}

/// Minimum eigenvalue of a symmetric matrix (the symmetric part is used).
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).min()
}

/// Maximum eigenvalue of a symmetric matrix (the symmetric part is used).
pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).max()
}

fn sym_eigenvalues(m: &DMatrix<f64>) -> DVector<f64> {
    if m.nrows() == 0 {
        return DVector::zeros(1);
    }
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues()
}

/// Column-major flattening, used for the CSV dumps and composite ODE state.
pub fn vectorize(m: &DMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}
