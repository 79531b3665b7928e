//! File formats, artifact writers and the commands behind the `pdcert`
//! binary.
//!
//! Exit codes are a stable contract:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | a reproduction check failed, or an internal numerical failure |
//! | 2 | input error (unreadable or malformed file, invalid data, unwritable output) |
//! | 3 | the integrator diverged |
//! | 4 | not certifiable (rate LMIs infeasible at `α = 0`, or certificate failed validation) |
//! | 5 | CLM construction failed |

mod commands;
mod files;
mod output;

use std::path::Path;

pub use commands::{
    cmd_certify, cmd_clm, cmd_repro, cmd_simulate, draw_lambda0, CertifyArgs, CertifyReport,
    Check, ClmArgs, ClmMode, ClmReport, ReproArgs, ReproReport, SimulateArgs, SimulateReport,
    BUNDLED_PROBLEM,
};
pub use files::{
    load_certificate, load_problem, parse_problem, problem_to_json, BlockMargin, CertificateFile,
    CertificateTolerances, Constraints, HingeTerm, HistoryEntry, ProblemFile, QuadraticTerm,
    RegionEntry, CERTIFICATE_VERSION, PROBLEM_VERSION,
};
pub use output::{line_chart_svg, write_error_csv, write_plots, write_trajectory_csv, Series};

use crate::error::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {message}")]
    Output { path: String, message: String },

    #[error(transparent)]
    Core(#[from] Error),

    #[error("certificate failed validation: {0}")]
    Validation(String),

    #[error("check failed: {0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } | CliError::Parse { .. } | CliError::Output { .. } => 2,
            CliError::Validation(_) => 4,
            CliError::CheckFailed(_) => 1,
            CliError::Core(e) => match e {
                Error::InvalidInput(_)
                | Error::Dimension(_)
                | Error::InvalidParameter(_)
                | Error::Capacity { .. }
                | Error::Configuration(_) => 2,
                Error::Divergence { .. } => 3,
                Error::NotCertifiable(_) => 4,
                Error::ConstructionFailed(_) => 5,
                Error::NotConverged { .. }
                | Error::NoUniqueSolution(_)
                | Error::InvalidWitness(_)
                | Error::DegenerateFit(_) => 1,
            },
        }
    }
}
