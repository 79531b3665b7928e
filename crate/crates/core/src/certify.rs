//! Exponential rate certificates for the primal-dual flow.
//!
//! For every region and every binary `θ` vertex the error dynamics are
//! `ż = H z + B w`, `y = C z`, with `w` the gradient nonlinearity acting on
//! `y` through a sector of slope `ℓ`. A decay rate `α` is certified by
//! `P ≻ 0` with
//!
//! ```text
//! [ PH + HᵀP + 2αP   PB + ℓCᵀ ]
//! [ BᵀP + ℓC         −2I      ]  ⪯ 0
//! ```
//!
//! for all blocks, where `B = [−I_n; 0]` and `C = [I_n 0]`. The maximal
//! `α` is found by bisection on the feasibility boundary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::flow::{ProblemSpec, ThetaFlag, Trajectory};
use crate::lpv::{saddle_matrix, ThetaVertex, MAX_VERTEX_BITS};
use crate::numerics::{lambda_max, lambda_min, DenseMatrix, SymMatrix};
use crate::sdp::{
    AffineBlock, AlternatingProjections, FeasibilityStatus, LmiBackend, LmiProblem,
};

#[derive(Debug, Clone, PartialEq)]
pub struct RateBlock {
    pub h: DenseMatrix,
    pub ell: f64,
    pub region: usize,
    pub vertex: ThetaVertex,
}

impl RateBlock {
    pub fn label(&self) -> String {
        if self.vertex.bits.is_empty() {
            format!("region {}", self.region)
        } else {
            format!("region {} theta {}", self.region, self.vertex.label())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct RegionShape {
    f: SymMatrix,
    ell: f64,
    flags: Vec<ThetaFlag>,
}

/// All rate LMIs of a problem, one per (region, θ-vertex) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLmiSet {
    pub n: usize,
    pub m: usize,
    pub blocks: Vec<RateBlock>,
    /// `[−I_n; 0]`, `(n+m) × n`.
    pub b: DenseMatrix,
    /// `[I_n 0]`, `n × (n+m)`.
    pub c: DenseMatrix,
    t: DenseMatrix,
    rho: f64,
    regions: Vec<RegionShape>,
}

impl RegionLmiSet {
    pub fn state_dim(&self) -> usize {
        self.n + self.m
    }

    /// `H` of region `r` at an arbitrary `θ` (not only vertices).
    pub fn h_at(&self, region: usize, theta: &[f64]) -> DenseMatrix {
        saddle_matrix(&self.t, self.rho, self.regions[region].f.as_dense(), theta)
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }
}

fn resolve_vertices(flags: &[ThetaFlag]) -> Vec<ThetaVertex> {
    let mut out = vec![Vec::new()];
    for flag in flags {
        let choices: &[bool] = match flag {
            ThetaFlag::Active => &[true],
            ThetaFlag::Inactive => &[false],
            ThetaFlag::Free => &[false, true],
        };
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<bool>| {
                choices.iter().map(move |&c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out.into_iter().map(ThetaVertex::new).collect()
}

/// One block per region and θ-vertex: flags `active → 1`, `inactive → 0`,
/// `free → {0, 1}`. `H` uses the region's `F` override when present and
/// `μI` otherwise.
pub fn build_region_lmis(p: &ProblemSpec) -> Result<RegionLmiSet> {
    p.validate()?;
    if p.regions.is_empty() {
        return Err(Error::Configuration("problem declares no regions".into()));
    }
    let (n, m) = (p.n, p.m());
    if m > MAX_VERTEX_BITS {
        return Err(Error::Capacity {
            what: "constraint count for vertex enumeration",
            got: m,
            max: MAX_VERTEX_BITS,
        });
    }
    let mut regions = Vec::new();
    let mut blocks = Vec::new();
    for (r, reg) in p.regions.iter().enumerate() {
        if reg.theta.len() != m {
            return Err(Error::Configuration(format!("region {r}: theta flags do not match m")));
        }
        let f = reg
            .f
            .clone()
            .unwrap_or_else(|| SymMatrix::identity(n).scale(reg.mu));
        for v in resolve_vertices(&reg.theta) {
            blocks.push(RateBlock {
                h: saddle_matrix(&p.t, p.rho, f.as_dense(), &v.theta()),
                ell: reg.ell,
                region: r,
                vertex: v,
            });
        }
        regions.push(RegionShape {
            f,
            ell: reg.ell,
            flags: reg.theta.clone(),
        });
    }
    let b = DenseMatrix::from_fn(n + m, n, |i, j| if i == j { -1.0 } else { 0.0 });
    let c = DenseMatrix::from_fn(n, n + m, |i, j| if i == j { 1.0 } else { 0.0 });
    Ok(RegionLmiSet {
        n,
        m,
        blocks,
        b,
        c,
        t: p.t.clone(),
        rho: p.rho,
        regions,
    })
}

/// The full `(2n+m)`-dimensional rate LMI matrix.
pub fn composite_block(
    p: &SymMatrix,
    h: &DenseMatrix,
    b: &DenseMatrix,
    c: &DenseMatrix,
    ell: f64,
    alpha: f64,
) -> DenseMatrix {
    let n = b.cols();
    let top_left = h.lyapunov_form(p).as_dense().add(&p.as_dense().scale(2.0 * alpha));
    let top_right = p.as_dense().matmul(b).add(&c.transpose().scale(ell));
    let bottom_right = DenseMatrix::identity(n).scale(-2.0);
    let bottom_left = top_right.transpose();
    DenseMatrix::from_blocks(&[vec![&top_left, &top_right], vec![&bottom_left, &bottom_right]])
        .expect("consistent block shapes")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateOptions {
    /// Backend sweeps per feasibility probe.
    pub iter_cap: usize,
    pub seed: u64,
    pub slack: f64,
    /// `P ⪰ δI`; `None` means `1e-6 · (n + m)`.
    pub delta: Option<f64>,
    /// Maximum doublings of the upper bracket.
    pub max_doublings: usize,
    /// Start each probe from the last feasible `P`.
    pub warm_start: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            iter_cap: 100_000,
            seed: 42,
            slack: 1e-9,
            delta: None,
            max_doublings: 30,
            warm_start: true,
        }
    }
}

impl RateOptions {
    pub fn delta_for(&self, dim: usize) -> f64 {
        self.delta.unwrap_or(1e-6 * dim as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RateProbe {
    Feasible(SymMatrix),
    Infeasible,
    Inconclusive,
}

impl RateProbe {
    pub fn is_feasible(&self) -> bool {
        matches!(self, RateProbe::Feasible(_))
    }
}

pub fn rate_problem(lmis: &RegionLmiSet, alpha: f64, opts: &RateOptions) -> Result<LmiProblem> {
    let dim = lmis.state_dim();
    let blocks = lmis
        .blocks
        .iter()
        .map(|blk| {
            AffineBlock::from_map(dim, |p| composite_block(p, &blk.h, &lmis.b, &lmis.c, blk.ell, alpha))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut prob = LmiProblem::new(dim, blocks);
    prob.slack = opts.slack;
    prob.delta = opts.delta_for(dim);
    Ok(prob)
}

/// `λ_max` of every composite block, computed directly.
pub fn block_margins(lmis: &RegionLmiSet, p: &SymMatrix, alpha: f64) -> Result<Vec<f64>> {
    lmis.blocks
        .iter()
        .map(|blk| {
            lambda_max(&SymMatrix::from_dense(&composite_block(
                p, &blk.h, &lmis.b, &lmis.c, blk.ell, alpha,
            )))
        })
        .collect()
}

pub fn rate_feasible(lmis: &RegionLmiSet, alpha: f64) -> Result<RateProbe> {
    rate_feasible_with(lmis, alpha, &RateOptions::default(), None)
}

/// One feasibility probe. A returned `P` has been re-checked by direct
/// eigenvalue computation.
pub fn rate_feasible_with(
    lmis: &RegionLmiSet,
    alpha: f64,
    opts: &RateOptions,
    warm: Option<&SymMatrix>,
) -> Result<RateProbe> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} must be >= 0")));
    }
    let prob = rate_problem(lmis, alpha, opts)?;
    let out = AlternatingProjections::default().solve(&prob, opts.iter_cap, opts.seed, warm)?;
    Ok(match out.status {
        FeasibilityStatus::Feasible(p) => {
            let margins = block_margins(lmis, &p, alpha)?;
            let pd = lambda_min(&p)?;
            if margins.iter().all(|m| *m <= -prob.slack + 1e-9) && pd >= prob.delta - 1e-9 {
                RateProbe::Feasible(p)
            } else {
                log::warn!("backend answer failed re-validation at alpha = {alpha}");
                RateProbe::Inconclusive
            }
        }
        FeasibilityStatus::InfeasibleEvidence => RateProbe::Infeasible,
        FeasibilityStatus::Inconclusive => RateProbe::Inconclusive,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeResult {
    Feasible,
    Infeasible,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCertificate {
    pub alpha: f64,
    pub p: SymMatrix,
    /// `λ_max` of each composite block at `(α, P)`, in block order.
    pub margins: Vec<f64>,
    pub labels: Vec<String>,
    pub history: Vec<(f64, ProbeResult)>,
    pub alpha_hi_init: f64,
    pub tol: f64,
    pub options: RateOptions,
    pub warnings: Vec<String>,
}

impl RateCertificate {
    /// Every feasible probe lies strictly below every infeasible or
    /// inconclusive one.
    pub fn history_is_monotone(&self) -> bool {
        let best_feasible = self
            .history
            .iter()
            .filter(|(_, r)| *r == ProbeResult::Feasible)
            .map(|(a, _)| *a)
            .fold(f64::NEG_INFINITY, f64::max);
        self.history
            .iter()
            .filter(|(_, r)| *r != ProbeResult::Feasible)
            .all(|(a, _)| *a > best_feasible)
    }
}

pub fn bisect_rate(lmis: &RegionLmiSet, alpha_hi_init: f64, tol: f64) -> Result<RateCertificate> {
    bisect_rate_with(lmis, alpha_hi_init, tol, &RateOptions::default())
}

/// Doubles the upper bracket from `alpha_hi_init` until a probe fails, then
/// bisects to width `≤ tol`. Inconclusive probes count as failures and add a
/// warning.
pub fn bisect_rate_with(
    lmis: &RegionLmiSet,
    alpha_hi_init: f64,
    tol: f64,
    opts: &RateOptions,
) -> Result<RateCertificate> {
    if !(tol > 0.0) || !(alpha_hi_init > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need tol > 0 and alpha_hi_init > 0 (got {tol}, {alpha_hi_init})"
        )));
    }
    let mut history = Vec::new();
    let mut warnings = Vec::new();
    let probe = |alpha: f64, warm: Option<&SymMatrix>, history: &mut Vec<(f64, ProbeResult)>| {
        let r = rate_feasible_with(lmis, alpha, opts, if opts.warm_start { warm } else { None })?;
        let tag = match &r {
            RateProbe::Feasible(_) => ProbeResult::Feasible,
            RateProbe::Infeasible => ProbeResult::Infeasible,
            RateProbe::Inconclusive => ProbeResult::Inconclusive,
        };
        log::info!("alpha = {alpha:.6}: {tag:?}");
        history.push((alpha, tag));
        Ok::<_, Error>(r)
    };

    let mut p_lo = match probe(0.0, None, &mut history)? {
        RateProbe::Feasible(p) => p,
        other => {
            return Err(Error::NotCertifiable(format!(
                "rate LMIs at alpha = 0 are {}",
                if other == RateProbe::Infeasible {
                    "infeasible"
                } else {
                    "inconclusive"
                }
            )))
        }
    };
    let mut lo = 0.0;
    let mut hi = alpha_hi_init;
    let mut inconclusive = false;
    let mut doublings = 0;
    loop {
        match probe(hi, Some(&p_lo), &mut history)? {
            RateProbe::Feasible(p) => {
                lo = hi;
                p_lo = p;
                hi *= 2.0;
                doublings += 1;
                if doublings > opts.max_doublings {
                    warnings.push(format!("upper bracket never failed; stopped at alpha = {lo}"));
                    hi = lo;
                    break;
                }
            }
            RateProbe::Infeasible => break,
            RateProbe::Inconclusive => {
                inconclusive = true;
                break;
            }
        }
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        match probe(mid, Some(&p_lo), &mut history)? {
            RateProbe::Feasible(p) => {
                lo = mid;
                p_lo = p;
            }
            RateProbe::Infeasible => hi = mid,
            RateProbe::Inconclusive => {
                inconclusive = true;
                hi = mid;
            }
        }
    }
    if inconclusive {
        warnings.push(
            "backend was inconclusive near the boundary; alpha is the last provably feasible rate"
                .into(),
        );
    }
    let margins = block_margins(lmis, &p_lo, lo)?;
    let cert = RateCertificate {
        alpha: lo,
        p: p_lo,
        margins,
        labels: lmis.blocks.iter().map(RateBlock::label).collect(),
        history,
        alpha_hi_init,
        tol,
        options: *opts,
        warnings,
    };
    if !cert.history_is_monotone() {
        log::warn!("feasibility was not monotone along the bisection history");
    }
    Ok(cert)
}

pub const INTERIOR_SAMPLES: usize = 50;
const INTERIOR_SEED: u64 = 7;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub tol: f64,
    pub p_min_eig: f64,
    /// `(label, λ_max)` per vertex block.
    pub vertex_margins: Vec<(String, f64)>,
    /// `λ_max` at seeded interior θ points, grouped by region.
    pub interior_margins: Vec<Vec<f64>>,
    /// Vertices passed but an interior point failed. Cannot happen for an
    /// affine family; indicates a numerical defect.
    pub closure_violation: bool,
}

impl ValidationReport {
    pub fn vertices_pass(&self) -> bool {
        self.vertex_margins.iter().all(|(_, m)| *m <= self.tol)
    }

    pub fn interior_pass(&self) -> bool {
        self.interior_margins.iter().flatten().all(|m| *m <= self.tol)
    }

    pub fn max_vertex_margin(&self) -> f64 {
        self.vertex_margins
            .iter()
            .map(|(_, m)| *m)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_interior_margin(&self) -> f64 {
        self.interior_margins
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.p_min_eig > 0.0 && self.vertices_pass() && self.interior_pass()
    }
}

pub fn validate_certificate(
    lmis: &RegionLmiSet,
    cert: &RateCertificate,
    tol: f64,
) -> Result<ValidationReport> {
    validate_pair(Execution::auto(), lmis, &cert.p, cert.alpha, tol)
}

/// Direct eigenvalue check of `(α, P)` on every vertex block and on
/// [`INTERIOR_SAMPLES`] seeded interior θ points of every region.
pub fn validate_pair(
    exec: Execution,
    lmis: &RegionLmiSet,
    p: &SymMatrix,
    alpha: f64,
    tol: f64,
) -> Result<ValidationReport> {
    let dim = lmis.state_dim();
    if p.dim() != dim {
        return Err(Error::Dimension(format!("P is {0}x{0}, expected {dim}x{dim}", p.dim())));
    }
    let p_min_eig = lambda_min(p)?;
    let vertex: Vec<Result<f64>> = map_range(exec, lmis.blocks.len(), |k| {
        let blk = &lmis.blocks[k];
        lambda_max(&SymMatrix::from_dense(&composite_block(
            p, &blk.h, &lmis.b, &lmis.c, blk.ell, alpha,
        )))
    });
    let vertex_margins = lmis
        .blocks
        .iter()
        .zip(vertex)
        .map(|(b, m)| Ok((b.label(), m?)))
        .collect::<Result<Vec<_>>>()?;

    let mut interior_margins = Vec::with_capacity(lmis.regions.len());
    for (r, reg) in lmis.regions.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(INTERIOR_SEED + r as u64);
        let thetas: Vec<Vec<f64>> = (0..INTERIOR_SAMPLES)
            .map(|_| {
                reg.flags
                    .iter()
                    .map(|f| match f {
                        ThetaFlag::Active => 1.0,
                        ThetaFlag::Inactive => 0.0,
                        ThetaFlag::Free => rng.gen_range(0.0..1.0),
                    })
                    .collect()
            })
            .collect();
        let margins: Vec<Result<f64>> = map_range(exec, thetas.len(), |k| {
            let h = lmis.h_at(r, &thetas[k]);
            lambda_max(&SymMatrix::from_dense(&composite_block(
                p, &h, &lmis.b, &lmis.c, reg.ell, alpha,
            )))
        });
        interior_margins.push(margins.into_iter().collect::<Result<Vec<_>>>()?);
    }

    let mut report = ValidationReport {
        tol,
        p_min_eig,
        vertex_margins,
        interior_margins,
        closure_violation: false,
    };
    report.closure_violation = report.vertices_pass() && !report.interior_pass();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayCheck {
    /// `max (V(t+Δ) − V(t)·e^{−rate·Δ} − abs_tol)` over sample pairs; the
    /// check passes when this is `≤ 0`.
    pub worst_excess: f64,
    pub pairs: usize,
    /// Slowest observed `−ln(V(t+Δ)/V(t))/Δ` over pairs with `V(t) > abs_tol`.
    pub slowest_rate: f64,
}

impl DecayCheck {
    pub fn passed(&self) -> bool {
        self.worst_excess <= 0.0
    }
}

/// Samples `V = (z − z*)ᵀ P (z − z*)` along a trajectory and compares every
/// pair of samples `lag` seconds apart with the decay bound `e^{−rate·lag}`.
pub fn lyapunov_decay_check(
    traj: &Trajectory,
    z_star: &[f64],
    p: &SymMatrix,
    rate: f64,
    lag: f64,
    abs_tol: f64,
) -> Result<DecayCheck> {
    if p.dim() != z_star.len() {
        return Err(Error::Dimension("z* does not match P".into()));
    }
    if !(lag > 0.0) {
        return Err(Error::InvalidParameter(format!("lag = {lag} must be > 0")));
    }
    let v: Vec<f64> = traj
        .states
        .iter()
        .map(|s| {
            let z: Vec<f64> = s
                .x
                .iter()
                .chain(&s.lambda)
                .zip(z_star)
                .map(|(a, b)| a - b)
                .collect();
            p.quad_form(&z)
        })
        .collect();
    let factor = (-rate * lag).exp();
    let mut out = DecayCheck {
        worst_excess: f64::NEG_INFINITY,
        pairs: 0,
        slowest_rate: f64::INFINITY,
    };
    for (i, t) in traj.times.iter().enumerate() {
        let target = t + lag;
        let j = traj.times.partition_point(|s| *s < target - 1e-9 * (1.0 + target.abs()));
        if j >= traj.times.len() || (traj.times[j] - target).abs() > 1e-9 * (1.0 + target.abs()) {
            continue;
        }
        out.pairs += 1;
        out.worst_excess = out.worst_excess.max(v[j] - v[i] * factor - abs_tol);
        if v[i] > abs_tol && v[j] > 0.0 {
            out.slowest_rate = out.slowest_rate.min(-(v[j] / v[i]).ln() / lag);
        }
    }
    if out.pairs == 0 {
        return Err(Error::InvalidParameter(format!(
            "no sample pairs {lag} s apart in the trajectory"
        )));
    }
    Ok(out)
}

/// The matrix printed alongside the two-variable benchmark, certifying
/// `α = 0.12` up to its three-decimal rounding.
pub fn reference_printed_p() -> SymMatrix {
    SymMatrix::from_rows(&[
        [2.317, -0.457, 0.138],
        [-0.457, 2.216, 0.406],
        [0.138, 0.406, 2.310],
    ])
}
