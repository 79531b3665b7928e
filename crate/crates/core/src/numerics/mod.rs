//! Small dense linear algebra used by every other module.

mod eig;
mod lyap;
mod matrix;

pub use eig::{is_positive_definite, lambda_max, lambda_min, sym_eig, sym_eig_with, SymEigen};
pub use lyap::{
    hurwitz_report, is_hurwitz, solve_lyapunov, solve_lyapunov_with, HurwitzDiagnostic,
    HurwitzReport,
};
pub use matrix::{DenseMatrix, SymMatrix};

/// Spectral norm of a symmetric matrix.
pub fn spectral_norm(s: &SymMatrix) -> crate::Result<f64> {
    let e = sym_eig(s)?;
    Ok(e.max().abs().max(e.min().abs()))
}
