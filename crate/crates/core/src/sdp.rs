//! Desk-scale LMI feasibility.
//!
//! Unknown: a symmetric `P` of size `N`, parametrized by its upper triangle
//! `p ∈ R^{N(N+1)/2}` via the basis `E_ij = e_i e_jᵀ + e_j e_iᵀ` (`E_ii =
//! e_i e_iᵀ`). Every constraint is an affine map `M_k(p) = C_k + Σ_i p_i
//! L_{k,i}` and the target set is `M_k(p) ⪯ −slack·I` for all `k` together
//! with `P ⪰ δI`.
//!
//! The default backend alternates between projecting every block onto its
//! cone (eigenvalue clamping) and mapping the projections back to `p` by an
//! exact least-squares solve against the stacked affine maps.

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{sym_eig, DenseMatrix, SymMatrix};

pub const MAX_UNKNOWN_DIM: usize = 40;

pub fn svec_len(n: usize) -> usize {
    n * (n + 1) / 2
}

/// The `k`-th basis matrix of the upper-triangle parametrization.
pub fn svec_basis(n: usize, k: usize) -> SymMatrix {
    let mut upper = vec![0.0; svec_len(n)];
    upper[k] = 1.0;
    SymMatrix::from_upper(n, &upper).expect("consistent length")
}

/// `P ↦ C + Σ p_i L_i`, stored as a constant plus one coefficient matrix
/// per unknown.
#[derive(Debug, Clone)]
pub struct AffineBlock {
    size: usize,
    constant: SymMatrix,
    coeffs: Vec<SymMatrix>,
}

impl AffineBlock {
    pub fn new(constant: SymMatrix, coeffs: Vec<SymMatrix>) -> Result<Self> {
        let size = constant.dim();
        if coeffs.iter().any(|c| c.dim() != size) {
            return Err(Error::Configuration("coefficient sizes differ".into()));
        }
        Ok(AffineBlock {
            size,
            constant,
            coeffs,
        })
    }

    /// Samples an affine map given as a closure at `0` and at every basis
    /// matrix, then checks symmetry and affinity on a seeded random probe.
    pub fn from_map<F>(unknown_dim: usize, map: F) -> Result<Self>
    where
        F: Fn(&SymMatrix) -> DenseMatrix,
    {
        let c0 = map(&SymMatrix::zeros(unknown_dim));
        if !c0.is_square() {
            return Err(Error::Configuration("affine map must return a square matrix".into()));
        }
        let constant = SymMatrix::from_dense(&c0);
        let d = svec_len(unknown_dim);
        let coeffs: Vec<SymMatrix> = (0..d)
            .map(|k| SymMatrix::from_dense(&map(&svec_basis(unknown_dim, k)).sub(&c0)))
            .collect();
        let block = AffineBlock::new(constant, coeffs)?;

        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let probe: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let raw = map(&SymMatrix::from_upper(unknown_dim, &probe)?);
        let scale = 1.0 + raw.max_abs();
        if raw.sub(&raw.transpose()).max_abs() > 1e-12 * scale {
            return Err(Error::Configuration("affine map is not symmetric-valued".into()));
        }
        if raw.sub(block.eval(&probe).as_dense()).max_abs() > 1e-10 * scale {
            return Err(Error::Configuration("map is not affine in P".into()));
        }
        Ok(block)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn unknowns(&self) -> usize {
        self.coeffs.len()
    }

    pub fn eval(&self, p: &[f64]) -> SymMatrix {
        let mut acc = self.constant.as_dense().clone();
        for (pi, li) in p.iter().zip(&self.coeffs) {
            if *pi != 0.0 {
                acc = acc.add(&li.as_dense().scale(*pi));
            }
        }
        SymMatrix::from_dense(&acc)
    }

    pub fn eval_sym(&self, p: &SymMatrix) -> SymMatrix {
        self.eval(&p.upper())
    }
}

fn frob_inner(a: &SymMatrix, b: &SymMatrix) -> f64 {
    a.as_dense()
        .as_slice()
        .iter()
        .zip(b.as_dense().as_slice())
        .map(|(x, y)| x * y)
        .sum()
}

/// Find `P` with `M_k(P) ⪯ −slack·I` for every block and `P ⪰ δI`.
#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub unknown_dim: usize,
    pub blocks: Vec<AffineBlock>,
    pub slack: f64,
    pub delta: f64,
}

impl LmiProblem {
    pub fn new(unknown_dim: usize, blocks: Vec<AffineBlock>) -> Self {
        LmiProblem {
            unknown_dim,
            blocks,
            slack: 1e-9,
            delta: 1e-6 * unknown_dim as f64,
        }
    }

    fn check(&self) -> Result<()> {
        if self.unknown_dim == 0 {
            return Err(Error::Configuration("unknown dimension is zero".into()));
        }
        if self.unknown_dim > MAX_UNKNOWN_DIM {
            return Err(Error::Capacity {
                what: "LMI unknown dimension",
                got: self.unknown_dim,
                max: MAX_UNKNOWN_DIM,
            });
        }
        let d = svec_len(self.unknown_dim);
        if let Some(k) = self.blocks.iter().position(|b| b.unknowns() != d) {
            return Err(Error::Configuration(format!(
                "block {k} has {} coefficients, expected {d}",
                self.blocks[k].unknowns()
            )));
        }
        if !(self.slack >= 0.0) || !(self.delta >= 0.0) {
            return Err(Error::Configuration("slack and delta must be >= 0".into()));
        }
        Ok(())
    }

    /// The user blocks followed by `δI − P ⪯ 0`.
    fn all_blocks(&self) -> Vec<AffineBlock> {
        let n = self.unknown_dim;
        let d = svec_len(n);
        let mut out = self.blocks.clone();
        out.push(AffineBlock {
            size: n,
            constant: SymMatrix::identity(n).scale(self.delta),
            coeffs: (0..d).map(|k| svec_basis(n, k).scale(-1.0)).collect(),
        });
        out
    }

    /// `max_k λ_max(M_k(P)) + slack` and `δ − λ_min(P)`, combined: the
    /// constraint set holds exactly when the result is `≤ 0`.
    pub fn violation(&self, p: &SymMatrix) -> Result<f64> {
        let mut worst = self.delta - sym_eig(p)?.min();
        for b in &self.blocks {
            worst = worst.max(sym_eig(&b.eval_sym(p))?.max() + self.slack);
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeasibilityStatus {
    Feasible(SymMatrix),
    InfeasibleEvidence,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityOutcome {
    pub status: FeasibilityStatus,
    pub iterations: usize,
    pub final_violation: f64,
}

impl FeasibilityOutcome {
    pub fn feasible(&self) -> Option<&SymMatrix> {
        match &self.status {
            FeasibilityStatus::Feasible(p) => Some(p),
            _ => None,
        }
    }
}

/// A feasibility backend. Implementations must only report `Feasible` for
/// points that pass [`LmiProblem::violation`] `≤ 0`.
pub trait LmiBackend {
    fn solve(
        &self,
        prob: &LmiProblem,
        iter_cap: usize,
        seed: u64,
        warm_start: Option<&SymMatrix>,
    ) -> Result<FeasibilityOutcome>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternatingProjections {
    /// Projection target is `−(slack + boost)·I`, pushing iterates strictly
    /// inside so that finite convergence is possible.
    pub boost: f64,
    /// Plateaus at or below this violation are reported as inconclusive.
    pub violation_tol: f64,
    /// Minimum violation for a plateau to count as infeasibility evidence.
    pub plateau_threshold: f64,
    pub plateau_window: usize,
    /// Relative decrease of the violation per window under which progress
    /// counts as stalled.
    pub stall_ratio: f64,
}

impl Default for AlternatingProjections {
    fn default() -> Self {
        AlternatingProjections {
            boost: 1e-5,
            violation_tol: 1e-8,
            plateau_threshold: 1e-6,
            plateau_window: 200,
            stall_ratio: 1e-3,
        }
    }
}

/// Cholesky factor of a symmetric positive definite matrix, row-major lower
/// triangle.
fn cholesky(g: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = g[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], d: usize, rhs: &mut [f64]) {
    for i in 0..d {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * d + k] * rhs[k];
        }
        rhs[i] = s / l[i * d + i];
    }
    for i in (0..d).rev() {
        let mut s = rhs[i];
        for k in (i + 1)..d {
            s -= l[k * d + i] * rhs[k];
        }
        rhs[i] = s / l[i * d + i];
    }
}

impl LmiBackend for AlternatingProjections {
    fn solve(
        &self,
        prob: &LmiProblem,
        iter_cap: usize,
        seed: u64,
        warm_start: Option<&SymMatrix>,
    ) -> Result<FeasibilityOutcome> {
        prob.check()?;
        if iter_cap == 0 {
            return Err(Error::Configuration("iteration cap must be >= 1".into()));
        }
        let n = prob.unknown_dim;
        let d = svec_len(n);
        let blocks = prob.all_blocks();

        let mut gram = vec![0.0; d * d];
        for b in &blocks {
            for i in 0..d {
                for j in 0..=i {
                    let v = frob_inner(&b.coeffs[i], &b.coeffs[j]);
                    gram[i * d + j] += v;
                    if i != j {
                        gram[j * d + i] += v;
                    }
                }
            }
        }
        // The δI − P block alone makes the stacked map injective.
        let chol = cholesky(&gram, d)
            .ok_or_else(|| Error::Configuration("affine maps are not injective".into()))?;

        let mut p = match warm_start {
            Some(w) if w.dim() == n => w.upper(),
            Some(_) => return Err(Error::Configuration("warm start has wrong size".into())),
            None => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                SymMatrix::identity(n)
                    .upper()
                    .into_iter()
                    .map(|v| v + 1e-8 * rng.gen_range(-1.0..1.0))
                    .collect()
            }
        };

        let target = -(prob.slack + self.boost);
        let mut history: Vec<f64> = Vec::new();
        let mut violation = f64::INFINITY;
        for it in 0..iter_cap {
            let mut rhs = vec![0.0; d];
            violation = f64::NEG_INFINITY;
            for b in &blocks {
                let m = b.eval(&p);
                let e = sym_eig(&m)?;
                violation = violation.max(e.max() + prob.slack);
                let y = if e.max() <= target {
                    m
                } else {
                    e.reconstruct_with(|l| l.min(target))
                };
                let r = y.sub(&b.constant);
                for (k, li) in b.coeffs.iter().enumerate() {
                    rhs[k] += frob_inner(li, &r);
                }
            }
            if !violation.is_finite() {
                return Err(Error::Configuration("non-finite iterate".into()));
            }
            if violation <= 0.0 {
                let cand = SymMatrix::from_upper(n, &p)?;
                let checked = prob.violation(&cand)?;
                if checked <= 0.0 {
                    debug!("feasible after {it} sweeps, violation {checked:e}");
                    return Ok(FeasibilityOutcome {
                        status: FeasibilityStatus::Feasible(cand),
                        iterations: it,
                        final_violation: checked,
                    });
                }
            }
            history.push(violation);
            let w = self.plateau_window;
            if history.len() > w {
                let then = history[history.len() - 1 - w];
                let stalled = then - violation <= self.stall_ratio * violation.abs();
                if stalled && violation > self.plateau_threshold {
                    debug!("plateau at violation {violation:e} after {it} sweeps");
                    return Ok(FeasibilityOutcome {
                        status: FeasibilityStatus::InfeasibleEvidence,
                        iterations: it + 1,
                        final_violation: violation,
                    });
                }
                if stalled && violation <= self.violation_tol {
                    return Ok(FeasibilityOutcome {
                        status: FeasibilityStatus::Inconclusive,
                        iterations: it + 1,
                        final_violation: violation,
                    });
                }
            }
            cholesky_solve(&chol, d, &mut rhs);
            p = rhs;
        }
        Ok(FeasibilityOutcome {
            status: FeasibilityStatus::Inconclusive,
            iterations: iter_cap,
            final_violation: violation,
        })
    }
}

/// Runs the default backend from the seeded initial point.
pub fn solve_lmi_feasibility(prob: &LmiProblem, iter_cap: usize, seed: u64) -> Result<FeasibilityOutcome> {
    AlternatingProjections::default().solve(prob, iter_cap, seed, None)
}

/// `P ↦ ±(PA + AᵀP)`, the Lyapunov block of `A`.
pub fn lyapunov_block(a: &DenseMatrix) -> Result<AffineBlock> {
    AffineBlock::from_map(a.rows(), |p| a.lyapunov_form(p).into_dense())
}
