use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::certify::{
    bisect_rate_with, block_margins, build_region_lmis, lyapunov_decay_check, reference_printed_p,
    validate_certificate, RateCertificate, RateOptions, ValidationReport,
};
use crate::cli::files::{load_problem, parse_problem, CertificateFile};
use crate::cli::output::{write_error_csv, write_plots, write_trajectory_csv};
use crate::cli::{load_certificate, CliError};
use crate::error::Error;
use crate::flow::{fit_decay_rate, integrate, ProblemSpec, REFERENCE_LAMBDA_STAR};
use crate::lpv::{constructive_family_clm, grid_margin, sdp_family_clm};
use crate::numerics::{lambda_min, DenseMatrix};

/// The two-variable hinge benchmark shipped with the binary.
pub const BUNDLED_PROBLEM: &str = include_str!("../../problems/hinge_example.json");

/// Certificates are re-validated with this margin tolerance before a command
/// reports success.
pub const VALIDATION_TOL: f64 = 1e-6;

/// `λ(0)` drawn uniformly from `[0, 1]^m`.
pub fn draw_lambda0(m: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..m).map(|_| rng.gen_range(0.0..1.0)).collect()
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        log::warn!("{w}");
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub problem: PathBuf,
    /// Defaults to `10` in every coordinate.
    pub x0: Option<Vec<f64>>,
    /// Defaults to a seeded uniform draw from `[0, 1]^m`.
    pub lam0: Option<Vec<f64>>,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub sample_every: usize,
    pub out: PathBuf,
    pub plot: bool,
}

#[derive(Debug, Clone)]
pub struct SimulateReport {
    pub rows: usize,
    pub lambda0: Vec<f64>,
    pub final_x: Vec<f64>,
    pub final_lambda: Vec<f64>,
    pub final_err: Option<f64>,
    pub warnings: Vec<String>,
}

impl fmt::Display for SimulateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples: {}", self.rows)?;
        writeln!(f, "lambda(0): {:?}", self.lambda0)?;
        writeln!(f, "final x: {:?}", self.final_x)?;
        writeln!(f, "final lambda: {:?}", self.final_lambda)?;
        if let Some(e) = self.final_err {
            writeln!(f, "final |x - x*|: {e:.4e}")?;
        }
        Ok(())
    }
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<SimulateReport, CliError> {
    let (p, mut warnings) = load_problem(&args.problem)?;
    warn_all(&warnings);
    let x0 = args.x0.clone().unwrap_or_else(|| vec![10.0; p.n]);
    let lam0 = args.lam0.clone().unwrap_or_else(|| draw_lambda0(p.m(), args.seed));
    let traj = integrate(&p, &x0, &lam0, args.dt, args.horizon, args.sample_every)?;
    ensure_parent(&args.out)?;
    write_trajectory_csv(&args.out, &traj)?;
    if args.plot {
        let dir = args.out.parent().unwrap_or(Path::new("."));
        let stem = args
            .out
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "trajectory".into());
        write_plots(dir, &stem, &traj);
    }
    warnings.extend(traj.warnings.iter().cloned());
    let last = traj.last().expect("at least the initial sample");
    Ok(SimulateReport {
        rows: traj.len(),
        lambda0: lam0,
        final_x: last.x.clone(),
        final_lambda: last.lambda.clone(),
        final_err: traj.err_norms.as_ref().and_then(|e| e.last().copied()),
        warnings,
    })
}

#[derive(Debug, Clone)]
pub struct CertifyArgs {
    pub problem: PathBuf,
    pub tol: f64,
    pub alpha_hi_init: f64,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CertifyReport {
    pub certificate: RateCertificate,
    pub validation: ValidationReport,
}

impl fmt::Display for CertifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.certificate;
        writeln!(f, "alpha = {:.4}", c.alpha)?;
        for (label, m) in c.labels.iter().zip(&c.margins) {
            writeln!(f, "  {label}: lambda_max = {m:.4e}")?;
        }
        writeln!(
            f,
            "validation: {} (vertex max {:.4e}, interior max {:.4e}, lambda_min(P) {:.4})",
            if self.validation.passed() { "pass" } else { "FAIL" },
            self.validation.max_vertex_margin(),
            self.validation.max_interior_margin(),
            self.validation.p_min_eig
        )?;
        for w in &c.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Bisection, write, reload, validate. Succeeds only when the reloaded
/// certificate passes validation.
fn certify_problem(
    p: &ProblemSpec,
    tol: f64,
    alpha_hi_init: f64,
    seed: u64,
    out: &Path,
) -> Result<CertifyReport, CliError> {
    let lmis = build_region_lmis(p)?;
    let opts = RateOptions {
        seed,
        ..RateOptions::default()
    };
    let cert = bisect_rate_with(&lmis, alpha_hi_init, tol, &opts)?;
    ensure_parent(out)?;
    let file = CertificateFile::from_certificate(&cert, VALIDATION_TOL);
    fs::write(out, file.to_json()).map_err(|e| CliError::io(out, e))?;

    let reloaded = load_certificate(out)?.to_certificate()?;
    let validation = validate_certificate(&lmis, &reloaded, VALIDATION_TOL)?;
    if !validation.passed() {
        return Err(CliError::Validation(format!(
            "alpha = {}, vertex max {:e}, interior max {:e}",
            reloaded.alpha,
            validation.max_vertex_margin(),
            validation.max_interior_margin()
        )));
    }
    Ok(CertifyReport {
        certificate: reloaded,
        validation,
    })
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<CertifyReport, CliError> {
    let (p, warnings) = load_problem(&args.problem)?;
    warn_all(&warnings);
    certify_problem(&p, args.tol, args.alpha_hi_init, args.seed, &args.out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClmMode {
    Constructive,
    Sdp,
}

#[derive(Debug, Clone)]
pub struct ClmArgs {
    pub problem: PathBuf,
    pub mode: ClmMode,
    pub seed: u64,
    pub out: PathBuf,
}

#[derive(Debug, Clone)]
pub struct ClmReport {
    pub p: crate::numerics::SymMatrix,
    pub epsilon: f64,
    pub grid_min_margin: f64,
    pub grid_points: usize,
}

impl fmt::Display for ClmReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "P = {:?}", self.p.as_dense().to_rows())?;
        writeln!(
            f,
            "grid margin {:.4e} over {} points (epsilon {:.4e})",
            self.grid_min_margin, self.grid_points, self.epsilon
        )
    }
}

pub fn cmd_clm(args: &ClmArgs) -> Result<ClmReport, CliError> {
    let (p, warnings) = load_problem(&args.problem)?;
    warn_all(&warnings);
    let family = p.lpv_family()?;
    let (witness, eta) = match args.mode {
        ClmMode::Constructive => {
            let c = constructive_family_clm(&family)?;
            (c.witness, Some(c.eta))
        }
        ClmMode::Sdp => (sdp_family_clm(&family, 100_000, args.seed)?, None),
    };
    let per_axis = if family.m == 1 { 101 } else { 11 };
    let g = grid_margin(&family, &witness.p, per_axis, &family.default_f_samples())?;
    if !(g.min_margin > 0.0) {
        return Err(Error::ConstructionFailed(format!(
            "grid minimum {:e} at theta {:?} (F sample {})",
            g.min_margin, g.argmin_theta, g.argmin_f
        ))
        .into());
    }
    let doc = json!({
        "version": "v1",
        "mode": match args.mode { ClmMode::Constructive => "constructive", ClmMode::Sdp => "sdp" },
        "dim": witness.p.dim(),
        "P": witness.p.as_dense().as_slice(),
        "epsilon": witness.epsilon,
        "eta": eta,
        "grid": {
            "per_axis": per_axis,
            "points": g.points,
            "min_margin": g.min_margin,
            "argmin_theta": g.argmin_theta,
        },
        "sector": { "mu": family.mu, "ell": family.ell },
    });
    ensure_parent(&args.out)?;
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    fs::write(&args.out, text).map_err(|e| CliError::io(&args.out, e))?;
    Ok(ClmReport {
        p: witness.p,
        epsilon: witness.epsilon,
        grid_min_margin: g.min_margin,
        grid_points: g.points,
    })
}

#[derive(Debug, Clone)]
pub struct ReproArgs {
    pub out_dir: PathBuf,
    pub seed: u64,
    pub plots: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ReproReport {
    pub checks: Vec<Check>,
    pub alpha: f64,
    pub alpha_empirical: f64,
    pub lambda0: Vec<f64>,
}

impl ReproReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("lambda(0) = {:?} (seeded)\n", round_vec(&self.lambda0)));
        s.push_str(&format!("certified alpha = {:.4}\n", self.alpha));
        s.push_str(&format!("empirical decay rate = {:.4}\n", self.alpha_empirical));
        for c in &self.checks {
            s.push_str(&format!(
                "{} {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        s
    }
}

impl fmt::Display for ReproReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary())
    }
}

fn round_vec(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1e4).round() / 1e4).collect()
}

/// The gradient-block listing printed for the benchmark, three decimals.
pub fn reference_h_listing() -> [(DenseMatrix, f64); 3] {
    [
        (
            DenseMatrix::from_rows(&[[-1.0, -1.0, -1.0], [-1.0, -2.0, -1.0], [1.0, 1.0, 0.0]]),
            1.0,
        ),
        (
            DenseMatrix::from_rows(&[[-1.438, -1.0, -1.0], [-1.0, -1.438, -1.0], [1.0, 1.0, 0.0]]),
            2.0,
        ),
        (DenseMatrix::diag(&[-0.438, -0.438, -1.0]), 2.0),
    ]
}

pub const REPRO_X0: [f64; 2] = [10.0, 10.0];
pub const REPRO_DT: f64 = 1e-3;
pub const REPRO_HORIZON: f64 = 60.0;
pub const REPRO_SAMPLE_EVERY: usize = 10;
pub const REPRO_FIT_WINDOW: (f64, f64) = (5.0, 40.0);
pub const RATE_BAND: (f64, f64) = (0.113, 0.133);
pub const PRINTED_ALPHA: f64 = 0.12;
pub const PRINTED_TOL: f64 = 2e-2;
pub const V_DECAY_RATE: f64 = 0.18;
pub const V_DECAY_LAG: f64 = 0.1;
pub const V_DECAY_ABS: f64 = 1e-8;

/// End-to-end run on the bundled benchmark: simulation, certification,
/// printed-matrix validation and the consistency checks between them. The
/// summary is written even when a check fails.
pub fn cmd_repro(args: &ReproArgs) -> Result<ReproReport, CliError> {
    let dir = &args.out_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(|e| CliError::io(dir, e))?;
    let _ = fs::remove_file(&probe);

    let (p, _) = parse_problem(BUNDLED_PROBLEM, "bundled problem")?;
    let x_star = p.x_star.clone().expect("bundled problem declares x*");
    let mut checks = Vec::new();

    let lmis = build_region_lmis(&p)?;
    let listing = reference_h_listing();
    let worst_h = lmis
        .blocks
        .iter()
        .zip(&listing)
        .map(|(b, (h, _))| b.h.sub(h).max_abs())
        .fold(0.0, f64::max);
    let ells_match = lmis.blocks.iter().zip(&listing).all(|(b, (_, l))| b.ell == *l);
    checks.push(Check {
        name: "H blocks match the printed listing".into(),
        passed: lmis.blocks.len() == 3 && worst_h <= 1e-3 && ells_match,
        detail: format!("{} blocks, max entry deviation {worst_h:.4e}", lmis.blocks.len()),
    });

    let lambda0 = draw_lambda0(p.m(), args.seed);
    let traj = integrate(&p, &REPRO_X0, &lambda0, REPRO_DT, REPRO_HORIZON, REPRO_SAMPLE_EVERY)?;
    write_trajectory_csv(&dir.join("trajectory.csv"), &traj)?;
    let errs = traj.err_norms.clone().expect("x* known");
    write_error_csv(&dir.join("error.csv"), &traj.times, &errs)?;
    if args.plots {
        write_plots(dir, "trajectory", &traj);
    }

    let final_err = *errs.last().expect("non-empty");
    checks.push(Check {
        name: "trajectory endpoint".into(),
        passed: final_err <= 1e-4,
        detail: format!("|x(60) - x*| = {final_err:.4e} (limit 1e-4)"),
    });
    let fit = fit_decay_rate(&traj, &x_star, REPRO_FIT_WINDOW)?;
    checks.push(Check {
        name: "empirical decay rate".into(),
        passed: fit.rate >= 0.1,
        detail: format!("fit on [5, 40]: {:.4} (limit >= 0.1)", fit.rate),
    });

    let cert_path = dir.join("certificate.json");
    let certified = certify_problem(&p, 1e-3, 1.0, args.seed, &cert_path);
    let (alpha, cert_p) = match &certified {
        Ok(r) => {
            checks.push(Check {
                name: "certificate validation".into(),
                passed: r.validation.passed() && r.validation.max_vertex_margin() <= 1e-6,
                detail: format!(
                    "vertex max {:.4e}, interior max {:.4e}",
                    r.validation.max_vertex_margin(),
                    r.validation.max_interior_margin()
                ),
            });
            (r.certificate.alpha, Some(r.certificate.p.clone()))
        }
        Err(e) => {
            checks.push(Check {
                name: "certificate validation".into(),
                passed: false,
                detail: e.to_string(),
            });
            (f64::NAN, None)
        }
    };
    checks.push(Check {
        name: "certified rate in published band".into(),
        passed: alpha >= RATE_BAND.0 && alpha <= RATE_BAND.1,
        detail: format!("alpha = {alpha:.4}, band [{}, {}]", RATE_BAND.0, RATE_BAND.1),
    });
    checks.push(Check {
        name: "certified rate not above observed decay".into(),
        passed: alpha <= fit.rate + 0.05,
        detail: format!("alpha = {alpha:.4}, empirical + 0.05 = {:.4}", fit.rate + 0.05),
    });

    let printed = reference_printed_p();
    let printed_margins = block_margins(&lmis, &printed, PRINTED_ALPHA)?;
    let printed_pd = lambda_min(&printed)?;
    let printed_worst = printed_margins.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check {
        name: "printed P at alpha = 0.12".into(),
        passed: printed_pd > 0.0 && printed_worst <= PRINTED_TOL,
        detail: format!(
            "lambda_min(P) = {printed_pd:.4}, block lambda_max = {:?}",
            round_vec(&printed_margins)
        ),
    });

    if let Some(cert_p) = &cert_p {
        let mut z_star = x_star.clone();
        z_star.push(REFERENCE_LAMBDA_STAR);
        let v = lyapunov_decay_check(&traj, &z_star, cert_p, V_DECAY_RATE, V_DECAY_LAG, V_DECAY_ABS)?;
        checks.push(Check {
            name: "Lyapunov decay along the trajectory".into(),
            passed: v.passed(),
            detail: format!(
                "{} pairs, worst excess {:.4e}, slowest observed rate {:.4}",
                v.pairs, v.worst_excess, v.slowest_rate
            ),
        });
    }

    let report = ReproReport {
        checks,
        alpha,
        alpha_empirical: fit.rate,
        lambda0,
    };
    let summary_path = dir.join("summary.txt");
    fs::write(&summary_path, report.summary()).map_err(|e| CliError::io(&summary_path, e))?;
    Ok(report)
}
