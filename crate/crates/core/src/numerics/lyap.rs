use crate::error::{Error, Result};
use crate::numerics::{is_positive_definite, DenseMatrix, SymMatrix};
use crate::tolerances::Tolerances;

pub fn solve_lyapunov(a: &DenseMatrix, q: &SymMatrix) -> Result<SymMatrix> {
    solve_lyapunov_with(a, q, &Tolerances::DEFAULT)
}

/// Solves `AᵀP + PA = −Q` through the n²×n² Kronecker lift
/// `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) = −vec(Q)` and partially pivoted elimination.
pub fn solve_lyapunov_with(a: &DenseMatrix, q: &SymMatrix, tol: &Tolerances) -> Result<SymMatrix> {
    let n = a.rows();
    if !a.is_square() || q.dim() != n {
        return Err(Error::Dimension(format!(
            "A is {}x{}, Q is {}x{}",
            a.rows(),
            a.cols(),
            q.dim(),
            q.dim()
        )));
    }
    if n > tol.lyapunov_max_dim {
        return Err(Error::Capacity {
            what: "Lyapunov dimension",
            got: n,
            max: tol.lyapunov_max_dim,
        });
    }
    if !a.is_finite() || !q.as_dense().is_finite() {
        return Err(Error::InvalidInput("non-finite entry".into()));
    }

    let size = n * n;
    let mut k = vec![0.0; size * size];
    let mut rhs = vec![0.0; size];
    for i in 0..n {
        for j in 0..n {
            let r = i * n + j;
            rhs[r] = -q[(i, j)];
            for l in 0..n {
                // (AᵀP)_ij = Σ_l A_li P_lj
                k[r * size + l * n + j] += a[(l, i)];
                // (PA)_ij = Σ_l P_il A_lj
                k[r * size + i * n + l] += a[(l, j)];
            }
        }
    }

    let x = gaussian_solve(&mut k, &mut rhs, size, tol.pivot).ok_or_else(|| {
        Error::NoUniqueSolution("lifted system is singular (eigenvalue pair summing to zero)".into())
    })?;
    let p = SymMatrix::from_dense(&DenseMatrix::new(n, n, x)?);

    let residual = a.lyapunov_form(&p).add(q).as_dense().frobenius();
    let bound = tol.residual * (1.0 + q.as_dense().frobenius());
    if !residual.is_finite() || residual > bound {
        return Err(Error::NoUniqueSolution(format!(
            "residual {residual:e} exceeds {bound:e}"
        )));
    }
    Ok(p)
}

/// In-place elimination with partial pivoting; `None` when a pivot falls
/// below `rel_pivot` times the largest matrix entry.
fn gaussian_solve(k: &mut [f64], rhs: &mut [f64], n: usize, rel_pivot: f64) -> Option<Vec<f64>> {
    let scale = k.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return None;
    }
    let threshold = rel_pivot * scale;
    for col in 0..n {
        let (piv, piv_abs) = (col..n)
            .map(|r| (r, k[r * n + col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if piv_abs <= threshold {
            return None;
        }
        if piv != col {
            for c in 0..n {
                k.swap(col * n + c, piv * n + c);
            }
            rhs.swap(col, piv);
        }
        let d = k[col * n + col];
        for r in (col + 1)..n {
            let f = k[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            k[r * n + col] = 0.0;
            for c in (col + 1)..n {
                k[r * n + c] -= f * k[col * n + c];
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut acc = rhs[r];
        for c in (r + 1)..n {
            acc -= k[r * n + c] * x[c];
        }
        x[r] = acc / k[r * n + r];
    }
    Some(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HurwitzDiagnostic {
    /// `AᵀP + PA = −I` solved with `P ≻ 0`.
    Stable,
    /// Solved, but `P` is not positive definite.
    IndefiniteSolution,
    /// The lifted system is singular or ill-conditioned.
    NoUniqueSolution,
    /// Shape, capacity or finiteness problem.
    InvalidInput,
}

#[derive(Debug, Clone)]
pub struct HurwitzReport {
    pub hurwitz: bool,
    pub diagnostic: HurwitzDiagnostic,
    pub lyapunov: Option<SymMatrix>,
}

/// Lyapunov criterion: `A` is Hurwitz iff `AᵀP + PA = −I` has a positive
/// definite solution.
pub fn hurwitz_report(a: &DenseMatrix) -> HurwitzReport {
    let n = a.rows();
    match solve_lyapunov(a, &SymMatrix::identity(n)) {
        Ok(p) => {
            let pd = is_positive_definite(&p, 0.0).unwrap_or(false);
            HurwitzReport {
                hurwitz: pd,
                diagnostic: if pd {
                    HurwitzDiagnostic::Stable
                } else {
                    HurwitzDiagnostic::IndefiniteSolution
                },
                lyapunov: Some(p),
            }
        }
        Err(Error::NoUniqueSolution(_)) => HurwitzReport {
            hurwitz: false,
            diagnostic: HurwitzDiagnostic::NoUniqueSolution,
            lyapunov: None,
        },
        Err(_) => HurwitzReport {
            hurwitz: false,
            diagnostic: HurwitzDiagnostic::InvalidInput,
            lyapunov: None,
        },
    }
}

pub fn is_hurwitz(a: &DenseMatrix) -> bool {
    hurwitz_report(a).hurwitz
}
