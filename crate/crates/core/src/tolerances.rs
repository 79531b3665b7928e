/// Numerical thresholds shared by the whole crate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Eigenvalue threshold for semidefinite comparisons.
    pub psd: f64,
    /// Relative residual bound accepted from the Lyapunov solver.
    pub residual: f64,
    /// Jacobi stops once the off-diagonal Frobenius norm drops below
    /// `jacobi_off * ‖S‖_F`.
    pub jacobi_off: f64,
    pub jacobi_max_sweeps: usize,
    /// Relative pivot size below which the lifted Lyapunov system is
    /// declared singular.
    pub pivot: f64,
    /// Largest matrix size the Kronecker-lift solver accepts.
    pub lyapunov_max_dim: usize,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        psd: 1e-9,
        residual: 1e-9,
        jacobi_off: 1e-12,
        jacobi_max_sweeps: 100,
        pivot: 1e-12,
        lyapunov_max_dim: 30,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
