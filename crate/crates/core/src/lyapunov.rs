//! Lyapunov sets of a matrix and common Lyapunov matrices (CLMs) for
//! segments and polytopes of matrices.
//!
//! For `A` and `P ≻ 0` the margin is `−λ_max(PA + AᵀP)`. `P` is a strict
//! Lyapunov matrix when the margin is positive, a margin-`ε` matrix when it
//! is at least `ε` and non-strict when it is non-negative.
//!
//! [`clm_two`] turns a matrix that is strict for `A1` and non-strict for
//! `A2` into one with a uniform margin over the whole segment
//! `θA1 + (1−θ)A2`, `θ ∈ [0,1]`; [`extend_polytope`] repeats the step to add
//! one vertex to an already covered polytope.

use crate::error::{Error, Result};
use crate::exec::{map_range, map_slice, Execution};
use crate::numerics::{
    is_positive_definite, lambda_max, solve_lyapunov, spectral_norm, DenseMatrix, SymMatrix,
};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    StrictWithMargin,
    Strict,
    NonStrict,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovMembership {
    pub margin: f64,
    pub classification: Classification,
}

impl LyapunovMembership {
    fn classify(margin: f64, epsilon: f64, tol: f64) -> Self {
        let classification = if epsilon > 0.0 && margin >= epsilon {
            Classification::StrictWithMargin
        } else if margin > tol {
            Classification::Strict
        } else if margin >= -tol {
            Classification::NonStrict
        } else {
            Classification::Outside
        };
        Self {
            margin,
            classification,
        }
    }

    pub fn is_strict(&self) -> bool {
        matches!(
            self.classification,
            Classification::StrictWithMargin | Classification::Strict
        )
    }

    pub fn is_non_strict(&self) -> bool {
        self.classification != Classification::Outside
    }
}

/// A common Lyapunov matrix with its uniform margin.
#[derive(Debug, Clone)]
pub struct ClmWitness {
    pub p: SymMatrix,
    pub epsilon: f64,
    /// Weight on the input matrix in `α·P1 + P2`; `None` when no blend was
    /// performed.
    pub alpha_blend: Option<f64>,
}

/// `−λ_max(PA + AᵀP)` without checking `P`.
pub fn lyapunov_margin(p: &SymMatrix, a: &DenseMatrix) -> Result<f64> {
    if a.rows() != p.dim() || !a.is_square() {
        return Err(Error::Dimension(format!(
            "P is {0}x{0}, A is {1}x{2}",
            p.dim(),
            a.rows(),
            a.cols()
        )));
    }
    Ok(-lambda_max(&a.lyapunov_form(p))?)
}

pub fn membership(p: &SymMatrix, a: &DenseMatrix, epsilon: f64) -> Result<LyapunovMembership> {
    if epsilon < 0.0 {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} < 0")));
    }
    if !is_positive_definite(p, 0.0)? {
        return Err(Error::InvalidWitness("P is not positive definite".into()));
    }
    let margin = lyapunov_margin(p, a)?;
    Ok(LyapunovMembership::classify(
        margin,
        epsilon,
        Tolerances::DEFAULT.psd,
    ))
}

fn blend(a1: &DenseMatrix, a2: &DenseMatrix, theta: f64) -> DenseMatrix {
    a1.scale(theta).add(&a2.scale(1.0 - theta))
}

/// Picks the smallest `α` (starting from the Weyl bound, then doubling) with
/// `λ_max(α·S1_i + S2_i) ≤ −δ` for every pair.
fn blend_weight(pairs: &[(SymMatrix, SymMatrix)], delta: f64) -> Result<f64> {
    let mut alpha = 0.0_f64;
    for (s1, s2) in pairs {
        let l1 = lambda_max(s1)?;
        let l2 = lambda_max(s2)?;
        alpha = alpha.max((l2 + delta) / -l1);
    }
    if alpha <= 0.0 {
        alpha = 1.0;
    }
    for _ in 0..64 {
        let mut ok = true;
        for (s1, s2) in pairs {
            if lambda_max(&s1.scale(alpha).add(s2))? > -delta {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(alpha);
        }
        alpha *= 2.0;
    }
    Err(Error::ConstructionFailed(
        "no blend weight found after 64 doublings".into(),
    ))
}

/// `solve_lyapunov(A, I)` scaled to unit spectral norm, together with its
/// margin for `A`.
fn normalized_lyapunov(a: &DenseMatrix) -> Result<(SymMatrix, f64)> {
    let raw = solve_lyapunov(a, &SymMatrix::identity(a.rows()))?;
    if !is_positive_definite(&raw, 0.0)? {
        return Err(Error::InvalidWitness(
            "Lyapunov solution for the new vertex is not positive definite (vertex not Hurwitz)"
                .into(),
        ));
    }
    let s = spectral_norm(&raw)?;
    // PA + AᵀP = −I/s after scaling.
    Ok((raw.scale(1.0 / s), 1.0 / s))
}

/// Two-matrix construction: from `P1` strict for `A1` and non-strict for
/// `A2`, returns `P = α·P1 + P2` valid with a uniform margin on the segment.
pub fn clm_two(a1: &DenseMatrix, a2: &DenseMatrix, p1: &SymMatrix) -> Result<ClmWitness> {
    let m1 = membership(p1, a1, 0.0)?;
    if !m1.is_strict() {
        return Err(Error::InvalidWitness(format!(
            "P1 is not strict for A1 (margin {:e})",
            m1.margin
        )));
    }
    let m2 = membership(p1, a2, 0.0)?;
    if !m2.is_non_strict() {
        return Err(Error::InvalidWitness(format!(
            "P1 is not non-strict for A2 (margin {:e})",
            m2.margin
        )));
    }
    let (p2, p2_margin) = normalized_lyapunov(a2)?;
    let s1 = a1.lyapunov_form(p1);
    let s2 = a1.lyapunov_form(&p2);
    let delta = 0.5 * m1.margin;
    let alpha = blend_weight(&[(s1, s2)], delta)?;
    Ok(ClmWitness {
        p: p1.scale(alpha).add(&p2),
        epsilon: delta.min(p2_margin),
        alpha_blend: Some(alpha),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentReport {
    pub min_margin: f64,
    pub argmin_theta: f64,
    /// First grid `θ` (ascending) whose margin falls below `epsilon`.
    pub failing_theta: Option<f64>,
}

impl SegmentReport {
    pub fn passed(&self) -> bool {
        self.failing_theta.is_none()
    }
}

pub fn verify_clm_segment(
    p: &SymMatrix,
    a1: &DenseMatrix,
    a2: &DenseMatrix,
    grid_points: usize,
    epsilon: f64,
) -> Result<SegmentReport> {
    verify_clm_segment_with(Execution::auto(), p, a1, a2, grid_points, epsilon)
}

/// Evaluates the margin of `P` on `θA1 + (1−θ)A2` at `grid_points`
/// equispaced `θ` including both endpoints.
pub fn verify_clm_segment_with(
    exec: Execution,
    p: &SymMatrix,
    a1: &DenseMatrix,
    a2: &DenseMatrix,
    grid_points: usize,
    epsilon: f64,
) -> Result<SegmentReport> {
    if grid_points < 2 {
        return Err(Error::InvalidParameter("grid_points must be >= 2".into()));
    }
    if a1.rows() != a2.rows() || a1.cols() != a2.cols() {
        return Err(Error::Dimension("A1 and A2 differ in shape".into()));
    }
    let denom = (grid_points - 1) as f64;
    let margins = map_range(exec, grid_points, |k| {
        let theta = k as f64 / denom;
        lyapunov_margin(p, &blend(a1, a2, theta)).map(|m| (theta, m))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let (argmin_theta, min_margin) = margins
        .iter()
        .copied()
        .fold((f64::NAN, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 {
                cur
            } else {
                best
            }
        });
    let failing_theta = margins.iter().find(|(_, m)| *m < epsilon).map(|(t, _)| *t);
    Ok(SegmentReport {
        min_margin,
        argmin_theta,
        failing_theta,
    })
}

/// Uniformly spaced barycentric weights over `k` vertices: every convex
/// combination whose weights are multiples of `1/resolution`.
fn simplex_grid(k: usize, resolution: usize) -> Vec<Vec<f64>> {
    fn rec(k: usize, left: usize, res: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if cur.len() == k - 1 {
            cur.push(left);
            out.push(cur.iter().map(|&c| c as f64 / res as f64).collect());
            cur.pop();
            return;
        }
        for c in 0..=left {
            cur.push(c);
            rec(k, left - c, res, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k > 0 {
        rec(k, resolution, resolution, &mut Vec::new(), &mut out);
    }
    out
}

/// Smallest margin of `P` over vertices and a barycentric sample grid of
/// their convex hull.
pub fn polytope_margin(exec: Execution, p: &SymMatrix, vertices: &[DenseMatrix]) -> Result<f64> {
    let resolution = match vertices.len() {
        0 => return Err(Error::InvalidParameter("empty vertex list".into())),
        1 => 1,
        2 => 20,
        3 => 8,
        _ => 2,
    };
    let weights = simplex_grid(vertices.len(), resolution);
    let margins = map_slice(exec, &weights, |w| {
        let mut a = DenseMatrix::zeros(vertices[0].rows(), vertices[0].cols());
        for (wi, v) in w.iter().zip(vertices) {
            if *wi != 0.0 {
                a = a.add(&v.scale(*wi));
            }
        }
        lyapunov_margin(p, &a)
    });
    margins
        .into_iter()
        .try_fold(f64::INFINITY, |acc, m| m.map(|m| acc.min(m)))
}

/// One induction step: `P_k` covers `conv(vertices)` with a positive margin
/// and is non-strict for `a_next`; the result covers the enlarged hull.
pub fn extend_polytope(
    p_k: &SymMatrix,
    vertices: &[DenseMatrix],
    a_next: &DenseMatrix,
) -> Result<ClmWitness> {
    if vertices.is_empty() {
        return Err(Error::InvalidParameter("empty vertex list".into()));
    }
    if !is_positive_definite(p_k, 0.0)? {
        return Err(Error::InvalidWitness("P_k is not positive definite".into()));
    }
    let mut vertex_margins = Vec::with_capacity(vertices.len());
    for (i, v) in vertices.iter().enumerate() {
        let m = lyapunov_margin(p_k, v)?;
        if m <= Tolerances::DEFAULT.psd {
            return Err(Error::InvalidWitness(format!(
                "P_k is not strict for vertex {i} (margin {m:e})"
            )));
        }
        vertex_margins.push(m);
    }
    let hull = polytope_margin(Execution::auto(), p_k, vertices)?;
    if hull <= Tolerances::DEFAULT.psd {
        return Err(Error::InvalidWitness(format!(
            "P_k is not strict on the sampled hull (margin {hull:e})"
        )));
    }
    let min_vertex = vertex_margins.iter().copied().fold(f64::INFINITY, f64::min);

    if vertices.iter().any(|v| v == a_next) {
        return Ok(ClmWitness {
            p: p_k.clone(),
            epsilon: min_vertex.min(hull),
            alpha_blend: None,
        });
    }

    let next = membership(p_k, a_next, 0.0)?;
    if !next.is_non_strict() {
        return Err(Error::InvalidWitness(format!(
            "P_k is not non-strict for the new vertex (margin {:e})",
            next.margin
        )));
    }

    let (p2, p2_margin) = normalized_lyapunov(a_next)?;
    let pairs: Vec<(SymMatrix, SymMatrix)> = vertices
        .iter()
        .map(|v| (v.lyapunov_form(p_k), v.lyapunov_form(&p2)))
        .collect();
    let delta = 0.5 * min_vertex;
    let alpha = blend_weight(&pairs, delta)?;
    let p = p_k.scale(alpha).add(&p2);

    let mut all = vertices.to_vec();
    all.push(a_next.clone());
    let sampled = polytope_margin(Execution::auto(), &p, &all)?;
    Ok(ClmWitness {
        p,
        epsilon: delta.min(p2_margin).min(sampled),
        alpha_blend: Some(alpha),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg_eye(n: usize) -> DenseMatrix {
        DenseMatrix::identity(n).scale(-1.0)
    }

    fn rotation() -> DenseMatrix {
        DenseMatrix::from_rows(&[[0.0, -1.0], [1.0, 0.0]])
    }

    /// `[[−F, −T], [Tᵀ, 0]]`.
    fn saddle(f: &DenseMatrix, t: &DenseMatrix) -> DenseMatrix {
        let m = t.cols();
        DenseMatrix::from_blocks(&[
            vec![&f.scale(-1.0), &t.scale(-1.0)],
            vec![&t.transpose(), &DenseMatrix::zeros(m, m)],
        ])
        .unwrap()
    }

    #[test]
    fn membership_classes() {
        let m = membership(&SymMatrix::identity(2), &neg_eye(2), 1.0).unwrap();
        assert_eq!(m.margin, 2.0);
        assert_eq!(m.classification, Classification::StrictWithMargin);

        let m = membership(&SymMatrix::identity(2), &rotation(), 0.0).unwrap();
        assert_eq!(m.margin, 0.0);
        assert_eq!(m.classification, Classification::NonStrict);

        let m = membership(&SymMatrix::identity(1), &DenseMatrix::identity(1), 0.0).unwrap();
        assert_eq!(m.classification, Classification::Outside);

        let bad = SymMatrix::diag(&[1.0, -1.0]);
        assert!(matches!(
            membership(&bad, &neg_eye(2), 0.0),
            Err(Error::InvalidWitness(_))
        ));
    }

    #[test]
    fn margin_is_homogeneous_in_p() {
        let a = DenseMatrix::from_rows(&[[-1.0, 2.0], [0.5, -3.0]]);
        let p = SymMatrix::from_rows(&[[2.0, 0.3], [0.3, 1.0]]);
        let base = lyapunov_margin(&p, &a).unwrap();
        for c in [0.1, 2.0, 37.5] {
            let scaled = lyapunov_margin(&p.scale(c), &a).unwrap();
            assert!((scaled - c * base).abs() <= 1e-12 * (c * base).abs());
        }
    }

    #[test]
    fn clm_two_degenerate_single_matrix() {
        let w = clm_two(&neg_eye(2), &neg_eye(2), &SymMatrix::identity(2)).unwrap();
        assert!(w.epsilon > 0.0);
        let r = verify_clm_segment(&w.p, &neg_eye(2), &neg_eye(2), 11, w.epsilon).unwrap();
        assert!(r.passed());
    }

    #[test]
    fn clm_two_shifted_saddle() {
        let f = DenseMatrix::identity(2);
        let t = DenseMatrix::column(&[1.0, 1.0]);
        let a2 = saddle(&f, &t);
        let a1 = neg_eye(3);
        let w = clm_two(&a1, &a2, &SymMatrix::identity(3)).unwrap();
        let r = verify_clm_segment(&w.p, &a1, &a2, 101, w.epsilon).unwrap();
        assert!(r.min_margin >= w.epsilon - 1e-8, "{r:?} eps {}", w.epsilon);
        // The trivial direction.
        assert!(membership(&w.p, &a1, 0.0).unwrap().is_strict());
        assert!(membership(&w.p, &a2, 0.0).unwrap().is_non_strict());
    }

    #[test]
    fn clm_two_rejects_bad_preconditions() {
        let err = clm_two(&rotation(), &neg_eye(2), &SymMatrix::identity(2)).unwrap_err();
        assert!(err.to_string().contains("not strict for A1"), "{err}");
        let unstable = DenseMatrix::from_rows(&[[0.5, 0.0], [0.0, -1.0]]);
        let err = clm_two(&neg_eye(2), &unstable, &SymMatrix::identity(2)).unwrap_err();
        assert!(err.to_string().contains("not non-strict for A2"), "{err}");
    }

    #[test]
    fn segment_reports_failure_at_unstable_end() {
        let p = SymMatrix::identity(1);
        let r = verify_clm_segment(&p, &neg_eye(1), &DenseMatrix::identity(1), 11, 0.0).unwrap();
        assert_eq!(r.failing_theta, Some(0.0));
        assert_eq!(r.argmin_theta, 0.0);

        let r = verify_clm_segment(&SymMatrix::identity(2), &neg_eye(2), &neg_eye(2), 11, 0.0)
            .unwrap();
        assert_eq!(r.min_margin, 2.0);
        assert!(verify_clm_segment(&p, &neg_eye(1), &neg_eye(1), 1, 0.0).is_err());
    }

    #[test]
    fn extend_with_damped_rotation() {
        let eps_hat = 0.1;
        let a_next = rotation().sub(&DenseMatrix::diag(&[eps_hat, 0.0]));
        let vertices = vec![neg_eye(2)];
        let w = extend_polytope(&SymMatrix::identity(2), &vertices, &a_next).unwrap();
        let r = verify_clm_segment(&w.p, &vertices[0], &a_next, 101, w.epsilon).unwrap();
        assert!(r.passed(), "{r:?}");
        // Previously covered vertex keeps a positive margin.
        assert!(lyapunov_margin(&w.p, &vertices[0]).unwrap() >= w.epsilon);
    }

    #[test]
    fn extend_is_idempotent_on_known_vertex() {
        let vertices = vec![neg_eye(2)];
        let p = SymMatrix::identity(2);
        let w = extend_polytope(&p, &vertices, &neg_eye(2)).unwrap();
        assert_eq!(w.p, p);
        assert!(w.alpha_blend.is_none());
        assert_eq!(w.epsilon, 2.0);
    }

    #[test]
    fn extend_rejects_outside_vertex() {
        let err = extend_polytope(
            &SymMatrix::identity(2),
            &[neg_eye(2)],
            &DenseMatrix::diag(&[0.5, -1.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidWitness(_)));
    }

    #[test]
    fn simplex_grid_counts() {
        assert_eq!(simplex_grid(2, 4).len(), 5);
        assert_eq!(simplex_grid(3, 2).len(), 6);
        for w in simplex_grid(3, 5) {
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
