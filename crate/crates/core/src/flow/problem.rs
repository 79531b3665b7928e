use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpv::LpvFamily;
use crate::numerics::{lambda_max, sym_eig, DenseMatrix, SymMatrix};
use crate::tolerances::Tolerances;

/// `c · max{0, aᵀx + d}²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Hinge {
    pub c: f64,
    pub a: Vec<f64>,
    pub d: f64,
}

impl Hinge {
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + self.d
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaFlag {
    Active,
    Inactive,
    Free,
}

/// A region of the state space with its own sector data.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub mu: f64,
    pub ell: f64,
    pub theta: Vec<ThetaFlag>,
    /// Explicit gradient mean-value matrix for the region; replaces `μI` in
    /// the rate LMIs when present.
    pub f: Option<SymMatrix>,
}

/// `min ½xᵀQx + qᵀx + Σ c_k max{0, a_kᵀx + d_k}²  s.t.  Tᵀx ≤ b`, solved by
/// the augmented primal-dual flow with penalty `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub n: usize,
    pub quad: SymMatrix,
    pub lin: Vec<f64>,
    pub hinges: Vec<Hinge>,
    /// `n × m`, one column per constraint.
    pub t: DenseMatrix,
    pub b: Vec<f64>,
    pub rho: f64,
    pub regions: Vec<Region>,
    pub x_star: Option<Vec<f64>>,
}

const HESSIAN_SAMPLES: usize = 100;
const HESSIAN_SEED: u64 = 100;

impl ProblemSpec {
    pub fn m(&self) -> usize {
        self.t.cols()
    }

    /// Checks every structural invariant and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let n = self.n;
        let m = self.m();
        let tol = Tolerances::DEFAULT.psd;
        let mut warnings = Vec::new();
        if n == 0 {
            return Err(Error::InvalidInput("n must be >= 1".into()));
        }
        if self.quad.dim() != n || self.lin.len() != n {
            return Err(Error::Dimension("quadratic term does not match n".into()));
        }
        if self.t.rows() != n || self.b.len() != m {
            return Err(Error::Dimension(format!(
                "constraints: T is {}x{}, b has {} entries (n = {n})",
                self.t.rows(),
                m,
                self.b.len()
            )));
        }
        let all_finite = self.quad.as_dense().is_finite()
            && self.t.is_finite()
            && self.lin.iter().chain(&self.b).all(|v| v.is_finite())
            && self.hinges.iter().all(|h| {
                h.c.is_finite() && h.d.is_finite() && h.a.iter().all(|v| v.is_finite())
            });
        if !all_finite {
            return Err(Error::InvalidInput("non-finite problem data".into()));
        }
        if sym_eig(&self.quad)?.min() < -tol {
            return Err(Error::InvalidInput("Q is not positive semidefinite".into()));
        }
        for (k, h) in self.hinges.iter().enumerate() {
            if h.a.len() != n {
                return Err(Error::Dimension(format!("hinge {k}: a has wrong length")));
            }
            if !(h.c > 0.0) {
                return Err(Error::InvalidInput(format!("hinge {k}: c = {} must be > 0", h.c)));
            }
        }
        if !(self.rho > 0.0) {
            return Err(Error::InvalidInput(format!("rho = {} must be > 0", self.rho)));
        }
        if m > 0 {
            if m > n {
                return Err(Error::InvalidInput(format!("{m} constraints exceed n = {n}")));
            }
            let k1 = sym_eig(&SymMatrix::from_dense(&self.t.transpose().matmul(&self.t)))?.min();
            if k1 <= tol {
                return Err(Error::InvalidInput(format!(
                    "Tᵀ is not of full row rank (λ_min(TᵀT) = {k1:e})"
                )));
            }
        }
        if let Some(xs) = &self.x_star {
            if xs.len() != n {
                return Err(Error::Dimension("x_star has wrong length".into()));
            }
        }
        for (r, reg) in self.regions.iter().enumerate() {
            if reg.theta.len() != m {
                return Err(Error::Dimension(format!(
                    "region {r}: {} theta flags for {m} constraints",
                    reg.theta.len()
                )));
            }
            if !(reg.mu >= 0.0) || !(reg.ell >= reg.mu) || !reg.ell.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "region {r}: need 0 <= mu <= ell (mu = {}, ell = {})",
                    reg.mu, reg.ell
                )));
            }
            if let Some(f) = &reg.f {
                if f.dim() != n {
                    return Err(Error::Dimension(format!("region {r}: F is not {n}x{n}")));
                }
            } else if reg.mu == 0.0 {
                warnings.push(format!(
                    "region {r}: mu = 0 gives no strong-convexity floor; certification at alpha = 0 will fail"
                ));
            } else {
                warnings.extend(self.check_declared_mu(r, reg));
            }
        }
        Ok(warnings)
    }

    /// `λ_max(Q) + 2 Σ c_k ‖a_k‖²`, a Lipschitz constant of `∇f`.
    pub fn lipschitz(&self) -> f64 {
        let lq = lambda_max(&self.quad).unwrap_or(0.0).max(0.0);
        lq + self
            .hinges
            .iter()
            .map(|h| 2.0 * h.c * h.a.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
    }

    /// Stiffness estimate of the full flow used for the step-size warning.
    pub fn flow_lipschitz(&self) -> f64 {
        let tt = if self.m() > 0 {
            lambda_max(&SymMatrix::from_dense(&self.t.matmul(&self.t.transpose()))).unwrap_or(0.0)
        } else {
            0.0
        };
        self.lipschitz() + self.rho * tt + if self.m() > 0 { 1.0 / self.rho } else { 0.0 }
    }

    pub fn hessian(&self, x: &[f64]) -> SymMatrix {
        let mut h = self.quad.as_dense().clone();
        for hinge in &self.hinges {
            if hinge.slack(x) > 0.0 {
                for i in 0..self.n {
                    for j in 0..self.n {
                        h[(i, j)] += 2.0 * hinge.c * hinge.a[i] * hinge.a[j];
                    }
                }
            }
        }
        SymMatrix::from_dense(&h)
    }

    /// Samples points matching the region's active pattern and compares the
    /// declared `μ` with the Hessian restricted to `ker(T_activeᵀ)`.
    fn check_declared_mu(&self, r: usize, reg: &Region) -> Vec<String> {
        let n = self.n;
        let center = self.x_star.clone().unwrap_or_else(|| vec![0.0; n]);
        let active: Vec<usize> = reg
            .theta
            .iter()
            .enumerate()
            .filter(|(_, f)| **f == ThetaFlag::Active)
            .map(|(j, _)| j)
            .collect();
        let basis = match kernel_basis(&self.t, &active) {
            Some(z) => z,
            None => return Vec::new(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(HESSIAN_SEED + r as u64);
        let mut worst = f64::INFINITY;
        let mut found = 0;
        for _ in 0..HESSIAN_SAMPLES * 100 {
            if found == HESSIAN_SAMPLES {
                break;
            }
            let x: Vec<f64> = center.iter().map(|c| c + rng.gen_range(-10.0..10.0)).collect();
            let tx = self.t.tr_matvec(&x);
            let matches = reg.theta.iter().enumerate().all(|(j, flag)| match flag {
                ThetaFlag::Active => tx[j] >= self.b[j],
                ThetaFlag::Inactive => tx[j] < self.b[j],
                ThetaFlag::Free => true,
            });
            if !matches {
                continue;
            }
            found += 1;
            let h = self.hessian(&x);
            let restricted = basis.transpose().matmul(h.as_dense()).matmul(&basis);
            if let Ok(e) = sym_eig(&SymMatrix::from_dense(&restricted)) {
                worst = worst.min(e.min());
            }
        }
        if found > 0 && worst < reg.mu - Tolerances::DEFAULT.psd {
            vec![format!(
                "region {r}: declared mu = {} exceeds sampled restricted Hessian bound {worst:.6}",
                reg.mu
            )]
        } else {
            Vec::new()
        }
    }

    /// Sector family used by the constructive CLM: the smallest `μ` and the
    /// largest `ℓ` over regions without an explicit `F`.
    pub fn lpv_family(&self) -> Result<LpvFamily> {
        let plain: Vec<&Region> = self.regions.iter().filter(|r| r.f.is_none()).collect();
        let (mu, ell) = if plain.is_empty() {
            let l = self.lipschitz();
            (0.0, l)
        } else {
            (
                plain.iter().map(|r| r.mu).fold(f64::INFINITY, f64::min),
                plain.iter().map(|r| r.ell).fold(0.0, f64::max),
            )
        };
        LpvFamily::new(self.t.clone(), self.rho, mu, ell)
    }
}

/// Orthonormal basis of `{v : T_jᵀ v = 0 for j in cols}` as columns, or
/// `None` when that kernel is trivial.
fn kernel_basis(t: &DenseMatrix, cols: &[usize]) -> Option<DenseMatrix> {
    let n = t.rows();
    if cols.is_empty() {
        return Some(DenseMatrix::identity(n));
    }
    let sub = DenseMatrix::from_fn(n, cols.len(), |i, k| t[(i, cols[k])]);
    let e = sym_eig(&SymMatrix::from_dense(&sub.matmul(&sub.transpose()))).ok()?;
    let scale = e.max().abs().max(1.0);
    let keep: Vec<usize> = (0..n)
        .filter(|&k| e.values[k].abs() <= 1e-10 * scale)
        .collect();
    if keep.is_empty() {
        return None;
    }
    Some(DenseMatrix::from_fn(n, keep.len(), |i, k| e.vectors[(i, keep[k])]))
}
