//! The error-dynamics family of the augmented primal-dual flow.
//!
//! Around the saddle point the flow is the polytopic LPV system
//! `ż = H(F, θ) z` with
//!
//! ```text
//! H(F, θ) = [ −F − ρ T diag(θ) Tᵀ      −T diag(θ)         ]
//!           [  diag(θ) Tᵀ              (diag(θ) − I) / ρ   ]
//! ```
//!
//! where `μI ⪯ F ⪯ ℓI` is the mean-value matrix of the gradient and
//! `θ ∈ [0,1]^m` selects active constraints. `H` is affine in `θ`, so its
//! `2^m` binary vertices span the whole family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::exec::{map_range, map_slice, Execution};
use crate::lyapunov::{lyapunov_margin, ClmWitness};
use crate::numerics::{is_positive_definite, sym_eig, DenseMatrix, SymMatrix};
use crate::sdp::{solve_lmi_feasibility, AffineBlock, FeasibilityStatus, LmiProblem};
use crate::tolerances::Tolerances;

pub const MAX_VERTEX_BITS: usize = 16;

const GRID_SEED: u64 = 0x1f2e_3d4c;
/// Slack of the SDP-mode CLM, relative to `μ` (absolute `1e-6` when `μ = 0`).
const SDP_CLM_SLACK_REL: f64 = 1e-2;

#[derive(Debug, Clone)]
pub struct LpvFamily {
    pub n: usize,
    pub m: usize,
    /// `n × m`, one column per constraint.
    pub t: DenseMatrix,
    pub rho: f64,
    pub mu: f64,
    pub ell: f64,
    /// `λ_min(TᵀT)`.
    pub kappa1: f64,
    /// `λ_max(TᵀT)`.
    pub kappa2: f64,
    /// `λ_min(μI + ρTTᵀ)`, the definiteness of the active-side block.
    pub gamma: f64,
}

impl LpvFamily {
    pub fn new(t: DenseMatrix, rho: f64, mu: f64, ell: f64) -> Result<Self> {
        let (n, m) = (t.rows(), t.cols());
        if n == 0 {
            return Err(Error::InvalidParameter("primal dimension must be >= 1".into()));
        }
        if !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!("rho = {rho} must be > 0")));
        }
        if !(mu >= 0.0) || !(ell >= mu) {
            return Err(Error::InvalidParameter(format!(
                "sector bounds need 0 <= mu <= ell (mu = {mu}, ell = {ell})"
            )));
        }
        if m > n {
            return Err(Error::InvalidParameter(format!(
                "{m} constraints exceed primal dimension {n}"
            )));
        }
        let (kappa1, kappa2) = if m == 0 {
            (0.0, 0.0)
        } else {
            let e = sym_eig(&SymMatrix::from_dense(&t.transpose().matmul(&t)))?;
            (e.min(), e.max())
        };
        if m > 0 && kappa1 <= Tolerances::DEFAULT.psd {
            return Err(Error::InvalidParameter(format!(
                "Tᵀ is not of full row rank (λ_min(TᵀT) = {kappa1:e})"
            )));
        }
        let ttt = SymMatrix::from_dense(&t.matmul(&t.transpose()));
        let gamma = sym_eig(&ttt.scale(rho).shift(mu))?.min();
        Ok(Self {
            n,
            m,
            t,
            rho,
            mu,
            ell,
            kappa1,
            kappa2,
            gamma,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.n + self.m
    }

    /// `{μI, ℓI, (μ+ℓ)/2·I}`.
    pub fn default_f_samples(&self) -> Vec<SymMatrix> {
        let id = SymMatrix::identity(self.n);
        vec![
            id.scale(self.mu),
            id.scale(self.ell),
            id.scale(0.5 * (self.mu + self.ell)),
        ]
    }
}

/// Active (`true`) / inactive flags, one per constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ThetaVertex {
    pub bits: Vec<bool>,
}

impl ThetaVertex {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    /// Vertex number `k` of `2^m`, first constraint most significant.
    pub fn from_index(k: usize, m: usize) -> Self {
        Self {
            bits: (0..m).map(|j| (k >> (m - 1 - j)) & 1 == 1).collect(),
        }
    }

    pub fn theta(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    pub fn label(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }
}

/// `H(F, θ)` with no validation of `F` or `θ`.
pub fn saddle_matrix(t: &DenseMatrix, rho: f64, f: &DenseMatrix, theta: &[f64]) -> DenseMatrix {
    let (n, m) = (t.rows(), t.cols());
    let mut h = DenseMatrix::zeros(n + m, n + m);
    for i in 0..n {
        for k in 0..n {
            let mut v = -f[(i, k)];
            for j in 0..m {
                v -= rho * t[(i, j)] * theta[j] * t[(k, j)];
            }
            h[(i, k)] = v;
        }
        for j in 0..m {
            h[(i, n + j)] = -t[(i, j)] * theta[j];
            h[(n + j, i)] = theta[j] * t[(i, j)];
        }
    }
    for j in 0..m {
        h[(n + j, n + j)] = (theta[j] - 1.0) / rho;
    }
    h
}

fn check_sector(family: &LpvFamily, f: &SymMatrix) -> Result<()> {
    if f.dim() != family.n {
        return Err(Error::Dimension(format!(
            "F is {0}x{0}, expected {1}x{1}",
            f.dim(),
            family.n
        )));
    }
    let e = sym_eig(f)?;
    let tol = Tolerances::DEFAULT.psd * (1.0 + family.ell.abs());
    if e.min() < family.mu - tol || e.max() > family.ell + tol {
        return Err(Error::InvalidParameter(format!(
            "F spectrum [{}, {}] outside the sector [{}, {}]",
            e.min(),
            e.max(),
            family.mu,
            family.ell
        )));
    }
    Ok(())
}

fn check_theta(family: &LpvFamily, theta: &[f64]) -> Result<()> {
    if theta.len() != family.m {
        return Err(Error::Dimension(format!(
            "theta has {} entries, expected {}",
            theta.len(),
            family.m
        )));
    }
    if let Some(bad) = theta.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidParameter(format!(
            "theta entry {bad} outside [0, 1]"
        )));
    }
    Ok(())
}

pub fn build_h(family: &LpvFamily, f: &SymMatrix, theta: &[f64]) -> Result<DenseMatrix> {
    check_sector(family, f)?;
    check_theta(family, theta)?;
    Ok(saddle_matrix(&family.t, family.rho, f.as_dense(), theta))
}

pub fn enumerate_vertices(
    family: &LpvFamily,
    f: &SymMatrix,
) -> Result<Vec<(ThetaVertex, DenseMatrix)>> {
    enumerate_vertices_with(Execution::auto(), family, f)
}

pub fn enumerate_vertices_with(
    exec: Execution,
    family: &LpvFamily,
    f: &SymMatrix,
) -> Result<Vec<(ThetaVertex, DenseMatrix)>> {
    if family.m > MAX_VERTEX_BITS {
        return Err(Error::Capacity {
            what: "constraint count for vertex enumeration",
            got: family.m,
            max: MAX_VERTEX_BITS,
        });
    }
    check_sector(family, f)?;
    Ok(map_range(exec, 1usize << family.m, |k| {
        let v = ThetaVertex::from_index(k, family.m);
        let h = saddle_matrix(&family.t, family.rho, f.as_dense(), &v.theta());
        (v, h)
    }))
}

/// Sample points of `[0,1]^m`: the full `per_axis^m` grid for `m ≤ 3`,
/// otherwise `per_axis^3` seeded uniform draws plus every vertex.
fn theta_samples(m: usize, per_axis: usize, seed: u64) -> Vec<Vec<f64>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let per_axis = per_axis.max(2);
    if m <= 3 {
        let total = per_axis.pow(m as u32);
        let step = 1.0 / (per_axis - 1) as f64;
        (0..total)
            .map(|mut k| {
                let mut th = vec![0.0; m];
                for j in (0..m).rev() {
                    th[j] = (k % per_axis) as f64 * step;
                    k /= per_axis;
                }
                th
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out: Vec<Vec<f64>> = Vec::new();
        if m <= MAX_VERTEX_BITS {
            out.extend((0..1usize << m).map(|k| ThetaVertex::from_index(k, m).theta()));
        }
        for _ in 0..per_axis.pow(3) {
            out.push((0..m).map(|_| rng.gen_range(0.0..=1.0)).collect());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMargin {
    pub min_margin: f64,
    pub argmin_theta: Vec<f64>,
    pub argmin_f: usize,
    pub points: usize,
}

pub fn grid_margin(
    family: &LpvFamily,
    p: &SymMatrix,
    theta_grid_per_axis: usize,
    f_samples: &[SymMatrix],
) -> Result<GridMargin> {
    grid_margin_with(
        Execution::auto(),
        family,
        p,
        theta_grid_per_axis,
        f_samples,
        GRID_SEED,
    )
}

/// Minimum Lyapunov margin of `P` over `θ` samples × `F` samples. Ties keep
/// the first point in (θ lexicographic, F index) order.
pub fn grid_margin_with(
    exec: Execution,
    family: &LpvFamily,
    p: &SymMatrix,
    theta_grid_per_axis: usize,
    f_samples: &[SymMatrix],
    seed: u64,
) -> Result<GridMargin> {
    if p.dim() != family.state_dim() {
        return Err(Error::Dimension(format!(
            "P is {0}x{0}, family state is {1}",
            p.dim(),
            family.state_dim()
        )));
    }
    if f_samples.is_empty() {
        return Err(Error::InvalidParameter("no F samples".into()));
    }
    for f in f_samples {
        check_sector(family, f)?;
    }
    let thetas = theta_samples(family.m, theta_grid_per_axis, seed);
    let per_theta = map_slice(exec, &thetas, |th| -> Result<(f64, usize)> {
        let mut best = (f64::INFINITY, 0);
        for (fi, f) in f_samples.iter().enumerate() {
            let h = saddle_matrix(&family.t, family.rho, f.as_dense(), th);
            let m = lyapunov_margin(p, &h)?;
            if m < best.0 {
                best = (m, fi);
            }
        }
        Ok(best)
    });
    let mut out = GridMargin {
        min_margin: f64::INFINITY,
        argmin_theta: Vec::new(),
        argmin_f: 0,
        points: thetas.len() * f_samples.len(),
    };
    for (th, res) in thetas.iter().zip(per_theta) {
        let (m, fi) = res?;
        if m < out.min_margin {
            out.min_margin = m;
            out.argmin_theta = th.clone();
            out.argmin_f = fi;
        }
    }
    Ok(out)
}

/// Result of [`constructive_family_clm`].
#[derive(Debug, Clone)]
pub struct FamilyClm {
    pub witness: ClmWitness,
    /// Cross-coupling weight in `[[I, ηT], [ηTᵀ, I]]`.
    pub eta: f64,
    pub halvings: usize,
    pub vertex_margin: f64,
}

/// `[[I_n, ηT], [ηTᵀ, I_m]]`.
pub fn coupled_lyapunov_matrix(t: &DenseMatrix, eta: f64) -> SymMatrix {
    let (n, m) = (t.rows(), t.cols());
    let mut p = DenseMatrix::identity(n + m);
    for i in 0..n {
        for j in 0..m {
            p[(i, n + j)] = eta * t[(i, j)];
            p[(n + j, i)] = eta * t[(i, j)];
        }
    }
    SymMatrix::from_dense(&p)
}

pub fn constructive_family_clm(family: &LpvFamily) -> Result<FamilyClm> {
    constructive_family_clm_with(Execution::auto(), family)
}

/// Structured common Lyapunov matrix for the whole family: `η` is halved
/// from `min(0.5, μ / (2κ₂ρ + 2κ₂))` until `P` is positive definite and
/// every vertex and every `θ` grid point (11 per axis) has a positive margin
/// for `F ∈ {μI, ℓI, (μ+ℓ)/2·I}`.
pub fn constructive_family_clm_with(exec: Execution, family: &LpvFamily) -> Result<FamilyClm> {
    if !(family.mu > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "constructive CLM needs mu > 0 (got {})",
            family.mu
        )));
    }
    if !(family.gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "constructive CLM needs gamma > 0 (got {})",
            family.gamma
        )));
    }
    if family.m > MAX_VERTEX_BITS {
        return Err(Error::Capacity {
            what: "constraint count for vertex enumeration",
            got: family.m,
            max: MAX_VERTEX_BITS,
        });
    }
    let f_samples = family.default_f_samples();

    if family.m == 0 {
        let p = SymMatrix::identity(family.n);
        let g = grid_margin_with(exec, family, &p, 2, &f_samples, GRID_SEED)?;
        return Ok(FamilyClm {
            witness: ClmWitness {
                p,
                epsilon: g.min_margin,
                alpha_blend: None,
            },
            eta: 0.0,
            halvings: 0,
            vertex_margin: g.min_margin,
        });
    }

    let denom = 2.0 * family.kappa2 * family.rho + 2.0 * family.kappa2;
    let mut eta = 0.5_f64.min(family.mu / denom);
    let mut last = None;
    for halvings in 0..=40 {
        let p = coupled_lyapunov_matrix(&family.t, eta);
        if is_positive_definite(&p, 0.0)? {
            let mut vertex_margin = f64::INFINITY;
            for f in &f_samples {
                for (_, h) in enumerate_vertices_with(exec, family, f)? {
                    vertex_margin = vertex_margin.min(lyapunov_margin(&p, &h)?);
                }
            }
            if vertex_margin > 0.0 {
                let g = grid_margin_with(exec, family, &p, 11, &f_samples, GRID_SEED)?;
                if g.min_margin > 0.0 {
                    return Ok(FamilyClm {
                        witness: ClmWitness {
                            p,
                            epsilon: g.min_margin.min(vertex_margin),
                            alpha_blend: None,
                        },
                        eta,
                        halvings,
                        vertex_margin,
                    });
                }
                last = Some(g);
            }
        }
        eta *= 0.5;
    }
    Err(Error::ConstructionFailed(match last {
        Some(g) => format!(
            "no eta passed after 40 halvings; last grid minimum {:e} at theta {:?}",
            g.min_margin, g.argmin_theta
        ),
        None => "no eta passed the vertex checks after 40 halvings".into(),
    }))
}

/// Common Lyapunov matrix from the LMI backend: `PH + HᵀP ⪯ −slack·I` for
/// every vertex `H` and every `F ∈ {μI, ℓI, (μ+ℓ)/2·I}`, solved jointly, then
/// checked on the 11-per-axis grid.
pub fn sdp_family_clm(family: &LpvFamily, iter_cap: usize, seed: u64) -> Result<ClmWitness> {
    let exec = Execution::auto();
    let f_samples = family.default_f_samples();
    let dim = family.state_dim();
    let mut blocks = Vec::new();
    for f in &f_samples {
        for (_, h) in enumerate_vertices_with(exec, family, f)? {
            blocks.push(AffineBlock::from_map(dim, |p| h.lyapunov_form(p).into_dense())?);
        }
    }
    let mut prob = LmiProblem::new(dim, blocks);
    prob.slack = if family.mu > 0.0 {
        SDP_CLM_SLACK_REL * family.mu
    } else {
        1e-6
    };
    let out = solve_lmi_feasibility(&prob, iter_cap, seed)?;
    let p = match out.status {
        FeasibilityStatus::Feasible(p) => p,
        other => {
            return Err(Error::ConstructionFailed(format!(
                "vertex LMIs {other:?} after {} sweeps (violation {:e})",
                out.iterations, out.final_violation
            )))
        }
    };
    let g = grid_margin_with(exec, family, &p, 11, &f_samples, GRID_SEED)?;
    if !(g.min_margin > 0.0) {
        return Err(Error::ConstructionFailed(format!(
            "grid minimum {:e} at theta {:?}",
            g.min_margin, g.argmin_theta
        )));
    }
    Ok(ClmWitness {
        p,
        epsilon: g.min_margin,
        alpha_blend: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::is_hurwitz;

    fn benchmark_family() -> LpvFamily {
        LpvFamily::new(DenseMatrix::column(&[1.0, 1.0]), 1.0, 0.438, 2.0).unwrap()
    }

    #[test]
    fn h_matches_block_listing() {
        let fam = LpvFamily::new(DenseMatrix::column(&[1.0, 1.0]), 1.0, 0.0, 1.0).unwrap();
        let h1 = build_h(&fam, &SymMatrix::diag(&[0.0, 1.0]), &[1.0]).unwrap();
        assert_eq!(
            h1,
            DenseMatrix::from_rows(&[[-1.0, -1.0, -1.0], [-1.0, -2.0, -1.0], [1.0, 1.0, 0.0]])
        );
        let fam = benchmark_family();
        let h3 = build_h(&fam, &SymMatrix::identity(2).scale(0.438), &[0.0]).unwrap();
        assert_eq!(h3, DenseMatrix::diag(&[-0.438, -0.438, -1.0]));
    }

    #[test]
    fn zero_theta_decouples() {
        let t = DenseMatrix::from_rows(&[[1.0, 0.5], [0.0, 1.0], [2.0, -1.0]]);
        let fam = LpvFamily::new(t, 2.0, 0.5, 3.0).unwrap();
        let f = SymMatrix::from_rows(&[[1.0, 0.2, 0.0], [0.2, 1.5, 0.1], [0.0, 0.1, 2.0]]);
        let h = build_h(&fam, &f, &[0.0, 0.0]).unwrap();
        let want = DenseMatrix::from_blocks(&[
            vec![&f.as_dense().scale(-1.0), &DenseMatrix::zeros(3, 2)],
            vec![&DenseMatrix::zeros(2, 3), &DenseMatrix::identity(2).scale(-0.5)],
        ])
        .unwrap();
        assert_eq!(h, want);
    }

    #[test]
    fn rejects_out_of_box_and_out_of_sector() {
        let fam = benchmark_family();
        let f = SymMatrix::identity(2);
        assert!(matches!(
            build_h(&fam, &f, &[1.5]),
            Err(Error::InvalidParameter(_))
        ));
        assert!(build_h(&fam, &SymMatrix::identity(2).scale(3.0), &[0.5]).is_err());
        assert!(LpvFamily::new(DenseMatrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]), 1.0, 1.0, 2.0)
            .is_err());
    }

    #[test]
    fn vertex_enumeration() {
        let fam = benchmark_family();
        let f = SymMatrix::identity(2);
        let vs = enumerate_vertices(&fam, &f).unwrap();
        assert_eq!(vs.len(), 2);
        assert_eq!(vs[0].0.label(), "0");
        assert_eq!(vs[1].1, saddle_matrix(&fam.t, 1.0, f.as_dense(), &[1.0]));

        let fam2 = LpvFamily::new(DenseMatrix::identity(2), 1.0, 1.0, 1.0).unwrap();
        let vs = enumerate_vertices(&fam2, &SymMatrix::identity(2)).unwrap();
        assert_eq!(vs.len(), 4);
        let (label, h11) = &vs[3];
        assert_eq!(label.label(), "11");
        // [[−F − TTᵀ, −T], [Tᵀ, 0]] with F = T = I.
        let want = DenseMatrix::from_rows(&[
            [-2.0, 0.0, -1.0, 0.0],
            [0.0, -2.0, 0.0, -1.0],
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
        ]);
        assert_eq!(h11, &want);
    }

    #[test]
    fn vertex_capacity_guard() {
        let t = DenseMatrix::identity(17);
        let fam = LpvFamily::new(t, 1.0, 1.0, 1.0).unwrap();
        assert!(matches!(
            enumerate_vertices(&fam, &SymMatrix::identity(17)),
            Err(Error::Capacity { .. })
        ));
    }

    #[test]
    fn vertices_are_hurwitz() {
        let t = DenseMatrix::from_rows(&[[1.0, 0.2], [0.3, -1.0], [0.5, 0.5]]);
        let fam = LpvFamily::new(t, 1.5, 0.3, 4.0).unwrap();
        for f in fam.default_f_samples() {
            for (_, h) in enumerate_vertices(&fam, &f).unwrap() {
                assert!(is_hurwitz(&h));
            }
        }
    }

    #[test]
    fn constructive_on_benchmark_family() {
        let fam = benchmark_family();
        let c = constructive_family_clm(&fam).unwrap();
        assert!(c.witness.epsilon > 0.0);
        let g = grid_margin(&fam, &c.witness.p, 101, &fam.default_f_samples()).unwrap();
        assert!(g.min_margin > 0.0);
        assert_eq!(g.points, 303);
    }

    #[test]
    fn sdp_witness_on_benchmark_family() {
        let fam = benchmark_family();
        let w = sdp_family_clm(&fam, 50_000, 1).unwrap();
        let g = grid_margin(&fam, &w.p, 101, &fam.default_f_samples()).unwrap();
        assert!(g.min_margin > 0.0, "{g:?}");
    }

    #[test]
    fn constructive_unconstrained() {
        let fam = LpvFamily::new(DenseMatrix::zeros(3, 0), 1.0, 0.7, 2.0).unwrap();
        let c = constructive_family_clm(&fam).unwrap();
        assert_eq!(c.witness.p, SymMatrix::identity(3));
        assert!((c.witness.epsilon - 1.4).abs() < 1e-12);
    }

    #[test]
    fn constructive_needs_positive_mu() {
        let fam = LpvFamily::new(DenseMatrix::column(&[1.0, 1.0]), 1.0, 0.0, 2.0).unwrap();
        assert!(matches!(
            constructive_family_clm(&fam),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn identity_is_boundary_for_zero_mu() {
        let fam = LpvFamily::new(DenseMatrix::column(&[1.0, 1.0]), 1.0, 0.0, 2.0).unwrap();
        let g = grid_margin(&fam, &SymMatrix::identity(3), 11, &fam.default_f_samples()).unwrap();
        assert!(g.min_margin.abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn margin_shrinks_with_mu() {
        let t = DenseMatrix::from_rows(&[[1.0, 0.3], [0.2, 1.0], [0.5, -0.4]]);
        let base = LpvFamily::new(t.clone(), 1.0, 1.0, 4.0).unwrap();
        let p = constructive_family_clm(&base).unwrap().witness.p;
        let mut prev = f64::INFINITY;
        for mu in [1.0, 0.5, 0.25, 0.1, 0.05, 0.0] {
            let fam = LpvFamily::new(t.clone(), 1.0, mu, 4.0).unwrap();
            let g = grid_margin(&fam, &p, 11, &fam.default_f_samples()).unwrap();
            assert!(g.min_margin <= prev + 1e-12, "mu {mu}: {} > {prev}", g.min_margin);
            prev = g.min_margin;
        }
    }

    #[test]
    fn monte_carlo_branch_for_many_constraints() {
        let t = DenseMatrix::identity(4);
        let fam = LpvFamily::new(t, 1.0, 1.0, 2.0).unwrap();
        let c = constructive_family_clm(&fam).unwrap();
        let g = grid_margin(&fam, &c.witness.p, 5, &fam.default_f_samples()).unwrap();
        assert_eq!(g.points, (16 + 125) * 3);
        assert!(g.min_margin > 0.0);
    }
}
