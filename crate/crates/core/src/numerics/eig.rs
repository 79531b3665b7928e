use crate::error::{Error, Result};
use crate::numerics::{DenseMatrix, SymMatrix};
use crate::tolerances::Tolerances;

/// Eigen-decomposition of a symmetric matrix: `values` ascending, `vectors`
/// holds the matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymEigen {
    pub fn max(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let n = self.values.len();
        let mapped: Vec<f64> = self.values.iter().map(|&l| f(l)).collect();
        let v = &self.vectors;
        let m = DenseMatrix::from_fn(n, n, |i, j| {
            (0..n).map(|k| v[(i, k)] * mapped[k] * v[(j, k)]).sum()
        });
        SymMatrix::from_dense(&m)
    }
}

pub fn sym_eig(s: &SymMatrix) -> Result<SymEigen> {
    sym_eig_with(s, &Tolerances::DEFAULT)
}

/// Cyclic Jacobi rotations.
pub fn sym_eig_with(s: &SymMatrix, tol: &Tolerances) -> Result<SymEigen> {
    let n = s.dim();
    if n == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if !s.as_dense().is_finite() {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    let mut a = s.as_dense().clone();
    let mut v = DenseMatrix::identity(n);
    let scale = a.frobenius();
    let threshold = tol.jacobi_off * scale;

    let off_norm = |a: &DenseMatrix| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += a[(i, j)] * a[(i, j)];
                }
            }
        }
        acc.sqrt()
    };

    let mut converged = scale == 0.0 || off_norm(&a) <= threshold;
    let mut sweeps = 0;
    while !converged {
        if sweeps == tol.jacobi_max_sweeps {
            return Err(Error::NotConverged {
                sweeps,
                off_norm: off_norm(&a),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let sn = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - sn * akq;
                    a[(k, q)] = sn * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - sn * aqk;
                    a[(q, k)] = sn * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
        converged = off_norm(&a) <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymEigen { values, vectors })
}

pub fn lambda_max(s: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(s)?.max())
}

pub fn lambda_min(s: &SymMatrix) -> Result<f64> {
    Ok(sym_eig(s)?.min())
}

/// True iff the smallest eigenvalue exceeds `tol`.
pub fn is_positive_definite(s: &SymMatrix, tol: f64) -> Result<bool> {
    Ok(lambda_min(s)? > tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(n: usize, seed: u64) -> SymMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SymMatrix::from_dense(&DenseMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0)))
    }

    /// Characteristic polynomial coefficients by Faddeev–LeVerrier:
    /// `det(λI − A) = λⁿ + c[1] λⁿ⁻¹ + … + c[n]`.
    fn char_poly(a: &DenseMatrix) -> Vec<f64> {
        let n = a.rows();
        let mut c = vec![1.0; n + 1];
        let mut m = DenseMatrix::zeros(n, n);
        for k in 1..=n {
            let mut next = a.matmul(&m);
            for i in 0..n {
                next[(i, i)] += c[k - 1];
            }
            m = next;
            let am = a.matmul(&m);
            let trace: f64 = (0..n).map(|i| am[(i, i)]).sum();
            c[k] = -trace / k as f64;
        }
        c
    }

    fn poly_eval(c: &[f64], x: f64) -> f64 {
        c.iter().fold(0.0, |acc, &ck| acc * x + ck)
    }

    /// Real roots by scanning for sign changes inside the Gershgorin bound
    /// and bisecting each bracket.
    fn real_roots(a: &DenseMatrix) -> Vec<f64> {
        let c = char_poly(a);
        let bound = (0..a.rows())
            .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            + 1e-3;
        let steps = 200_000;
        let h = 2.0 * bound / steps as f64;
        let mut roots = Vec::new();
        let mut x0 = -bound;
        let mut f0 = poly_eval(&c, x0);
        for k in 1..=steps {
            let x1 = -bound + k as f64 * h;
            let f1 = poly_eval(&c, x1);
            if f0 == 0.0 {
                roots.push(x0);
            } else if f0 * f1 < 0.0 {
                let (mut lo, mut hi, mut flo) = (x0, x1, f0);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    let fm = poly_eval(&c, mid);
                    if fm * flo <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                        flo = fm;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x0 = x1;
            f0 = f1;
        }
        roots
    }

    #[test]
    fn diagonal_and_antidiagonal() {
        let e = sym_eig(&SymMatrix::diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![1.0, 2.0, 3.0]);
        let e = sym_eig(&SymMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]])).unwrap();
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn matches_characteristic_polynomial_roots() {
        let s = random_sym(6, 7);
        let oracle = real_roots(s.as_dense());
        assert_eq!(oracle.len(), 6, "oracle roots: {oracle:?}");
        let e = sym_eig(&s).unwrap();
        for (got, want) in e.values.iter().zip(&oracle) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn eigenpairs_and_orthonormality() {
        for seed in 0..20 {
            let n = 1 + (seed as usize % 8);
            let s = random_sym(n, seed);
            let e = sym_eig(&s).unwrap();
            let scale = s.as_dense().frobenius().max(1.0);
            for k in 0..n {
                let vk = e.vectors.col(k);
                let sv = s.as_dense().matvec(&vk);
                let res: f64 = sv
                    .iter()
                    .zip(&vk)
                    .map(|(a, b)| (a - e.values[k] * b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-10 * scale, "residual {res}");
            }
            let gram = e.vectors.transpose().matmul(&e.vectors);
            let err = gram.sub(&DenseMatrix::identity(n)).max_abs();
            assert!(err < 1e-10);
            assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn scalar_helpers() {
        assert_eq!(lambda_max(&SymMatrix::identity(3).scale(-2.0)).unwrap(), -2.0);
        assert_eq!(lambda_max(&SymMatrix::diag(&[-1.0, 5.0])).unwrap(), 5.0);
        assert!(is_positive_definite(&SymMatrix::identity(4), 0.0).unwrap());
        assert!(!is_positive_definite(&SymMatrix::diag(&[1.0, -1e-6]), 0.0).unwrap());
    }

    #[test]
    fn rejects_non_finite() {
        let s = SymMatrix::diag(&[1.0, f64::NAN]);
        assert!(matches!(sym_eig(&s), Err(Error::InvalidInput(_))));
    }
}
