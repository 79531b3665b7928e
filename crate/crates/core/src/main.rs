use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use pdcert::cli::{
    cmd_certify, cmd_clm, cmd_repro, cmd_simulate, CertifyArgs, CliError, ClmArgs, ClmMode,
    ReproArgs, SimulateArgs,
};

/// Simulate the augmented primal-dual flow and certify its exponential rate.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Constructive,
    Sdp,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow and write the trajectory as CSV.
    Simulate {
        #[arg(long)]
        problem: PathBuf,
        /// Initial primal point, comma separated (default: 10 in every coordinate).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x0: Option<Vec<f64>>,
        /// Initial multipliers, comma separated (default: seeded uniform draw in [0, 1]).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        lam0: Option<Vec<f64>>,
        #[arg(long, env = "PDCERT_SEED", default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 60.0)]
        horizon: f64,
        /// Record every k-th integration step.
        #[arg(long, default_value_t = 10)]
        sample_every: usize,
        /// Also write SVG plots next to the CSV.
        #[arg(long)]
        plot: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bisect on the decay rate and write a validated certificate.
    Certify {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha_hi: f64,
        #[arg(long, env = "PDCERT_SEED", default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a common Lyapunov matrix for the error-dynamics family.
    Clm {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Constructive)]
        mode: Mode,
        #[arg(long, env = "PDCERT_SEED", default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the bundled benchmark end to end into a directory.
    #[command(alias = "repro-paper")]
    Reproduce {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "PDCERT_SEED", default_value_t = 42)]
        seed: u64,
        /// Skip the SVG plots.
        #[arg(long)]
        no_plots: bool,
    },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate {
            problem,
            x0,
            lam0,
            seed,
            dt,
            horizon,
            sample_every,
            plot,
            out,
        } => {
            let r = cmd_simulate(&SimulateArgs {
                problem,
                x0,
                lam0,
                seed,
                dt,
                horizon,
                sample_every,
                out,
                plot,
            })?;
            print!("{r}");
            Ok(true)
        }
        Command::Certify {
            problem,
            tol,
            alpha_hi,
            seed,
            out,
        } => {
            let r = cmd_certify(&CertifyArgs {
                problem,
                tol,
                alpha_hi_init: alpha_hi,
                seed,
                out,
            })?;
            print!("{r}");
            Ok(true)
        }
        Command::Clm {
            problem,
            mode,
            seed,
            out,
        } => {
            let mode = match mode {
                Mode::Constructive => ClmMode::Constructive,
                Mode::Sdp => ClmMode::Sdp,
            };
            let r = cmd_clm(&ClmArgs {
                problem,
                mode,
                seed,
                out,
            })?;
            print!("{r}");
            Ok(true)
        }
        Command::Reproduce {
            out,
            seed,
            no_plots,
        } => {
            let r = cmd_repro(&ReproArgs {
                out_dir: out,
                seed,
                plots: !no_plots,
            })?;
            print!("{r}");
            Ok(r.all_passed())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
