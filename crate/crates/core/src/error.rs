use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NotConverged { sweeps: usize, off_norm: f64 },

    #[error("Lyapunov equation has no unique solution: {0}")]
    NoUniqueSolution(String),

    #[error("invalid witness: {0}")]
    InvalidWitness(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("capacity exceeded: {what} = {got} (max {max})")]
    Capacity {
        what: &'static str,
        got: usize,
        max: usize,
    },

    #[error("construction failed: {0}")]
    ConstructionFailed(String),

    #[error("integration diverged at t = {last_valid_time}")]
    Divergence { last_valid_time: f64 },

    #[error("degenerate decay fit: {0}")]
    DegenerateFit(String),

    #[error("not certifiable: {0}")]
    NotCertifiable(String),

    #[error("configuration error: {0}")]
    Configuration(String),
}
