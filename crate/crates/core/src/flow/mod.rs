//! Problem model and the augmented primal-dual gradient flow
//!
//! ```text
//! ẋ  = −∇f(x) − Σ_j max{ρ(T_jᵀx − b_j) + λ_j, 0} T_j
//! λ̇_j = (max{ρ(T_jᵀx − b_j) + λ_j, 0} − λ_j) / ρ
//! ```
//!
//! obtained by descending / ascending the augmented Lagrangian
//! `L(x, λ) = f(x) + Σ_j H_ρ(T_jᵀx − b_j, λ_j)`.

mod integrate;
mod problem;

pub use integrate::{fit_decay_rate, integrate, DecayFit, Sample, Trajectory};
pub use problem::{Hinge, ProblemSpec, Region, ThetaFlag};

use crate::numerics::{DenseMatrix, SymMatrix};

pub fn objective(p: &ProblemSpec, x: &[f64]) -> f64 {
    let quad = 0.5 * p.quad.quad_form(x);
    let lin: f64 = p.lin.iter().zip(x).map(|(a, b)| a * b).sum();
    let hinge: f64 = p
        .hinges
        .iter()
        .map(|h| h.c * h.slack(x).max(0.0).powi(2))
        .sum();
    quad + lin + hinge
}

pub fn grad_f(p: &ProblemSpec, x: &[f64]) -> Vec<f64> {
    let mut g = p.quad.as_dense().matvec(x);
    for (gi, qi) in g.iter_mut().zip(&p.lin) {
        *gi += qi;
    }
    for h in &p.hinges {
        let s = h.slack(x);
        if s > 0.0 {
            for (gi, ai) in g.iter_mut().zip(&h.a) {
                *gi += 2.0 * h.c * s * ai;
            }
        }
    }
    g
}

/// Slack-eliminated augmented penalty of one inequality constraint.
pub fn hrho(u: f64, lam: f64, rho: f64) -> f64 {
    if rho * u + lam >= 0.0 {
        u * lam + 0.5 * rho * u * u
    } else {
        -lam * lam / (2.0 * rho)
    }
}

pub fn lagrangian(p: &ProblemSpec, x: &[f64], lam: &[f64]) -> f64 {
    let tx = p.t.tr_matvec(x);
    objective(p, x)
        + tx
            .iter()
            .zip(&p.b)
            .zip(lam)
            .map(|((tx, b), l)| hrho(tx - b, *l, p.rho))
            .sum::<f64>()
}

/// `max{ρ(T_jᵀx − b_j) + λ_j, 0}` for every constraint.
pub fn augmented_multipliers(p: &ProblemSpec, x: &[f64], lam: &[f64]) -> Vec<f64> {
    p.t.tr_matvec(x)
        .iter()
        .zip(&p.b)
        .zip(lam)
        .map(|((tx, b), l)| (p.rho * (tx - b) + l).max(0.0))
        .collect()
}

/// A constraint is active when `ρ(T_jᵀx − b_j) + λ_j ≥ 0`.
pub fn active_flags(p: &ProblemSpec, x: &[f64], lam: &[f64]) -> Vec<bool> {
    p.t.tr_matvec(x)
        .iter()
        .zip(&p.b)
        .zip(lam)
        .map(|((tx, b), l)| p.rho * (tx - b) + l >= 0.0)
        .collect()
}

pub fn flow_rhs(p: &ProblemSpec, x: &[f64], lam: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mult = augmented_multipliers(p, x, lam);
    let mut dx: Vec<f64> = grad_f(p, x).iter().map(|g| -g).collect();
    for (j, mj) in mult.iter().enumerate() {
        if *mj != 0.0 {
            for (i, d) in dx.iter_mut().enumerate() {
                *d -= mj * p.t[(i, j)];
            }
        }
    }
    let dlam = mult
        .iter()
        .zip(lam)
        .map(|(mj, l)| (mj - l) / p.rho)
        .collect();
    (dx, dlam)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal_infeas: f64,
    pub dual_infeas: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal_infeas)
            .max(self.dual_infeas)
            .max(self.complementarity)
    }
}

pub fn kkt_residual(p: &ProblemSpec, x: &[f64], lam: &[f64]) -> KktReport {
    let mult = augmented_multipliers(p, x, lam);
    let mut g = grad_f(p, x);
    for (j, mj) in mult.iter().enumerate() {
        for (i, gi) in g.iter_mut().enumerate() {
            *gi += mj * p.t[(i, j)];
        }
    }
    let stationarity = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let viol: Vec<f64> = p.t.tr_matvec(x).iter().zip(&p.b).map(|(a, b)| a - b).collect();
    KktReport {
        stationarity,
        primal_infeas: viol.iter().fold(0.0, |m, v| m.max(*v)),
        dual_infeas: lam.iter().fold(0.0, |m, l| m.max(-l)),
        complementarity: viol.iter().zip(lam).fold(0.0, |m, (v, l)| m.max((v * l).abs())),
    }
}

/// The two-variable benchmark used throughout the docs and tests:
/// `f(x) = max{0, 3 − x₁ − x₂}² + ½x₂²` subject to `x₁ + x₂ ≤ 2`, `ρ = 1`,
/// with optimum `x* = (2, 0)`, `λ* = 2`.
///
/// Three regions: `x₁ + x₂ > 3` (hinge off, `F = diag(0, 1)`, `ℓ = 1`),
/// `2 ≤ x₁ + x₂ ≤ 3` (active, `μ = 0.438`, `ℓ = 2`) and `x₁ + x₂ < 2`
/// (inactive, `μ = 0.438`, `ℓ = 2`).
pub fn reference_problem() -> ProblemSpec {
    ProblemSpec {
        n: 2,
        quad: SymMatrix::diag(&[0.0, 1.0]),
        lin: vec![0.0, 0.0],
        hinges: vec![Hinge {
            c: 1.0,
            a: vec![-1.0, -1.0],
            d: 3.0,
        }],
        t: DenseMatrix::column(&[1.0, 1.0]),
        b: vec![2.0],
        rho: 1.0,
        regions: vec![
            Region {
                mu: 0.0,
                ell: 1.0,
                theta: vec![ThetaFlag::Active],
                f: Some(SymMatrix::diag(&[0.0, 1.0])),
            },
            Region {
                mu: 0.438,
                ell: 2.0,
                theta: vec![ThetaFlag::Active],
                f: None,
            },
            Region {
                mu: 0.438,
                ell: 2.0,
                theta: vec![ThetaFlag::Inactive],
                f: None,
            },
        ],
        x_star: Some(vec![2.0, 0.0]),
    }
}

pub const REFERENCE_X_STAR: [f64; 2] = [2.0, 0.0];
pub const REFERENCE_LAMBDA_STAR: f64 = 2.0;

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reference_problem_validates_without_warnings() {
        let p = reference_problem();
        let w = p.validate().unwrap();
        assert!(w.is_empty(), "{w:?}");
        assert_eq!(p.lipschitz(), 5.0);
    }

    #[test]
    fn gradient_hand_values() {
        let p = reference_problem();
        assert_eq!(grad_f(&p, &[2.0, 0.0]), vec![-2.0, -2.0]);
        let mut q = p.clone();
        q.quad = SymMatrix::zeros(2);
        assert_eq!(grad_f(&q, &[5.0, 5.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = reference_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        let mut checked = 0;
        while checked < 200 {
            let x = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            if p.hinges[0].slack(&x).abs() < 1e-3 {
                continue;
            }
            let g = grad_f(&p, &x);
            for i in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                let fd = (objective(&p, &xp) - objective(&p, &xm)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
            }
            checked += 1;
        }
    }

    #[test]
    fn hrho_branches() {
        assert_eq!(hrho(0.0, 0.0, 1.0), 0.0);
        assert_eq!(hrho(-2.0, 1.0, 1.0), -0.5);
        // Switching surface ρu + λ = 0.
        let inside = -1.0 * 1.0 + 0.5 * 1.0 * 1.0;
        let outside = -1.0 / 2.0;
        assert_eq!(inside, outside);
        assert_eq!(hrho(-1.0, 1.0, 1.0), -0.5);
    }

    #[test]
    fn equilibrium_of_reference_problem() {
        let p = reference_problem();
        let (dx, dl) = flow_rhs(&p, &REFERENCE_X_STAR, &[REFERENCE_LAMBDA_STAR]);
        assert_eq!(dx, vec![0.0, 0.0]);
        assert_eq!(dl, vec![0.0]);
        let k = kkt_residual(&p, &REFERENCE_X_STAR, &[REFERENCE_LAMBDA_STAR]);
        assert!(k.max() <= 1e-12, "{k:?}");
    }

    #[test]
    fn inactive_constraint_reduces_to_gradient_flow() {
        let p = reference_problem();
        let x = [0.0, 0.5];
        let (dx, dl) = flow_rhs(&p, &x, &[0.0]);
        let g = grad_f(&p, &x);
        assert_eq!(dx, vec![-g[0], -g[1]]);
        assert_eq!(dl, vec![0.0]);
    }

    #[test]
    fn dual_rhs_matches_coordinatewise_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = ProblemSpec {
            n: 3,
            quad: SymMatrix::identity(3),
            lin: vec![0.1, -0.2, 0.3],
            hinges: vec![],
            t: DenseMatrix::from_rows(&[[1.0, 0.0], [0.5, 1.0], [0.0, -1.0]]),
            b: vec![0.3, -0.4],
            rho: 0.7,
            regions: vec![],
            x_star: None,
        };
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let lam: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..2.0)).collect();
            let (_, dl) = flow_rhs(&p, &x, &lam);
            for j in 0..2 {
                let u: f64 = (0..3).map(|i| p.t[(i, j)] * x[i]).sum::<f64>() - p.b[j];
                let s = p.rho * u + lam[j];
                let want = if s >= 0.0 { u } else { -lam[j] / p.rho };
                assert!((dl[j] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kkt_components() {
        let p = reference_problem();
        let mut q = p.clone();
        q.hinges.clear();
        q.quad = SymMatrix::identity(2);
        let k = kkt_residual(&q, &[0.0, 0.0], &[0.0]);
        assert_eq!(k.max(), 0.0);
        // Tᵀx − b = 0.7.
        let k = kkt_residual(&p, &[1.35, 1.35], &[0.0]);
        assert!((k.primal_infeas - 0.7).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_rank_deficient_constraints() {
        let mut p = reference_problem();
        p.t = DenseMatrix::from_rows(&[[1.0, 2.0], [1.0, 2.0]]);
        p.b = vec![1.0, 2.0];
        for r in &mut p.regions {
            r.theta = vec![ThetaFlag::Free, ThetaFlag::Free];
        }
        assert!(p.validate().is_err());
        let mut p = reference_problem();
        p.hinges[0].c = -1.0;
        assert!(p.validate().is_err());
        let mut p = reference_problem();
        p.regions[1].mu = 5.0;
        p.regions[1].ell = 5.0;
        let w = p.validate().unwrap();
        assert_eq!(w.len(), 1, "{w:?}");
    }

    #[test]
    fn family_from_reference_problem() {
        let fam = reference_problem().lpv_family().unwrap();
        assert_eq!(fam.mu, 0.438);
        assert_eq!(fam.ell, 2.0);
        assert_eq!(fam.kappa1, 2.0);
    }
}
