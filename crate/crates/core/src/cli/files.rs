use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::certify::{ProbeResult, RateCertificate, RateOptions};
use crate::cli::CliError;
use crate::error::Error;
use crate::flow::{Hinge, ProblemSpec, Region, ThetaFlag};
use crate::numerics::{DenseMatrix, SymMatrix};

pub const PROBLEM_VERSION: &str = "v1";
pub const CERTIFICATE_VERSION: &str = "v1";

fn problem_version() -> String {
    PROBLEM_VERSION.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticTerm {
    #[serde(rename = "Q")]
    pub q_matrix: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HingeTerm {
    pub c: f64,
    pub a: Vec<f64>,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    /// `n` rows, one column per constraint.
    #[serde(rename = "T")]
    pub t: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionEntry {
    pub mu: f64,
    pub ell: f64,
    pub theta: Vec<ThetaFlag>,
    #[serde(rename = "F", default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Vec<Vec<f64>>>,
}

/// On-disk problem description, schema `v1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(default = "problem_version")]
    pub version: String,
    pub n: usize,
    pub quadratic: QuadraticTerm,
    #[serde(default)]
    pub hinges: Vec<HingeTerm>,
    #[serde(default)]
    pub constraints: Constraints,
    pub rho: f64,
    pub regions: Vec<RegionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_star: Option<Vec<f64>>,
}

fn square(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DenseMatrix, Error> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{what} must be {n}x{n}")));
    }
    Ok(DenseMatrix::from_rows(rows))
}

impl ProblemFile {
    /// Converts to a [`ProblemSpec`], re-checking every invariant. Returns
    /// the validation warnings alongside.
    pub fn to_spec(&self) -> Result<(ProblemSpec, Vec<String>), Error> {
        if self.version != PROBLEM_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported problem file version {:?}",
                self.version
            )));
        }
        let n = self.n;
        let quad = SymMatrix::from_dense(&square(&self.quadratic.q_matrix, n, "Q")?);
        let m = self.constraints.b.len();
        let t = if m == 0 && self.constraints.t.iter().all(|r| r.is_empty()) {
            DenseMatrix::zeros(n, 0)
        } else {
            if self.constraints.t.len() != n || self.constraints.t.iter().any(|r| r.len() != m) {
                return Err(Error::Dimension(format!("T must be {n}x{m}")));
            }
            DenseMatrix::from_rows(&self.constraints.t)
        };
        let regions = self
            .regions
            .iter()
            .map(|r| {
                Ok(Region {
                    mu: r.mu,
                    ell: r.ell,
                    theta: r.theta.clone(),
                    f: match &r.f {
                        Some(rows) => Some(SymMatrix::from_dense(&square(rows, n, "F")?)),
                        None => None,
                    },
                })
            })
            .collect::<Result<Vec<_>, Error>>()?;
        let spec = ProblemSpec {
            n,
            quad,
            lin: self.quadratic.q.clone(),
            hinges: self
                .hinges
                .iter()
                .map(|h| Hinge {
                    c: h.c,
                    a: h.a.clone(),
                    d: h.d,
                })
                .collect(),
            t,
            b: self.constraints.b.clone(),
            rho: self.rho,
            regions,
            x_star: self.x_star.clone(),
        };
        let warnings = spec.validate()?;
        Ok((spec, warnings))
    }

    pub fn from_spec(p: &ProblemSpec) -> Self {
        ProblemFile {
            version: problem_version(),
            n: p.n,
            quadratic: QuadraticTerm {
                q_matrix: p.quad.as_dense().to_rows(),
                q: p.lin.clone(),
            },
            hinges: p
                .hinges
                .iter()
                .map(|h| HingeTerm {
                    c: h.c,
                    a: h.a.clone(),
                    d: h.d,
                })
                .collect(),
            constraints: Constraints {
                t: p.t.to_rows(),
                b: p.b.clone(),
            },
            rho: p.rho,
            regions: p
                .regions
                .iter()
                .map(|r| RegionEntry {
                    mu: r.mu,
                    ell: r.ell,
                    theta: r.theta.clone(),
                    f: r.f.as_ref().map(|f| f.as_dense().to_rows()),
                })
                .collect(),
            x_star: p.x_star.clone(),
        }
    }
}

fn parse_error(e: serde_json::Error, source: &str) -> CliError {
    CliError::Parse {
        file: source.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

pub fn parse_problem(text: &str, source: &str) -> Result<(ProblemSpec, Vec<String>), CliError> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| parse_error(e, source))?;
    Ok(file.to_spec()?)
}

pub fn load_problem(path: &Path) -> Result<(ProblemSpec, Vec<String>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_problem(&text, &path.display().to_string())
}

pub fn problem_to_json(p: &ProblemSpec) -> String {
    let mut s = serde_json::to_string_pretty(&ProblemFile::from_spec(p)).expect("serializable");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockMargin {
    pub label: String,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryEntry {
    pub alpha: f64,
    pub result: ProbeResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateTolerances {
    pub slack: f64,
    pub delta: f64,
    pub iter_cap: usize,
    pub max_doublings: usize,
    pub warm_start: bool,
    pub validation_tol: f64,
}

/// On-disk rate certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateFile {
    pub version: String,
    pub tool_version: String,
    pub alpha: f64,
    pub dim: usize,
    /// Row-major entries of `P`.
    #[serde(rename = "P")]
    pub p: Vec<f64>,
    pub margins: Vec<BlockMargin>,
    pub history: Vec<HistoryEntry>,
    pub alpha_hi_init: f64,
    pub tol: f64,
    pub seed: u64,
    pub tolerances: CertificateTolerances,
    pub warnings: Vec<String>,
}

impl CertificateFile {
    pub fn from_certificate(c: &RateCertificate, validation_tol: f64) -> Self {
        let dim = c.p.dim();
        CertificateFile {
            version: CERTIFICATE_VERSION.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            alpha: c.alpha,
            dim,
            p: c.p.as_dense().as_slice().to_vec(),
            margins: c
                .labels
                .iter()
                .zip(&c.margins)
                .map(|(l, m)| BlockMargin {
                    label: l.clone(),
                    lambda_max: *m,
                })
                .collect(),
            history: c
                .history
                .iter()
                .map(|(a, r)| HistoryEntry { alpha: *a, result: *r })
                .collect(),
            alpha_hi_init: c.alpha_hi_init,
            tol: c.tol,
            seed: c.options.seed,
            tolerances: CertificateTolerances {
                slack: c.options.slack,
                delta: c.options.delta_for(dim),
                iter_cap: c.options.iter_cap,
                max_doublings: c.options.max_doublings,
                warm_start: c.options.warm_start,
                validation_tol,
            },
            warnings: c.warnings.clone(),
        }
    }

    pub fn to_certificate(&self) -> Result<RateCertificate, Error> {
        if self.version != CERTIFICATE_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported certificate version {:?}",
                self.version
            )));
        }
        let p = DenseMatrix::new(self.dim, self.dim, self.p.clone())?;
        Ok(RateCertificate {
            alpha: self.alpha,
            p: SymMatrix::from_dense(&p),
            margins: self.margins.iter().map(|m| m.lambda_max).collect(),
            labels: self.margins.iter().map(|m| m.label.clone()).collect(),
            history: self.history.iter().map(|h| (h.alpha, h.result)).collect(),
            alpha_hi_init: self.alpha_hi_init,
            tol: self.tol,
            options: RateOptions {
                iter_cap: self.tolerances.iter_cap,
                seed: self.seed,
                slack: self.tolerances.slack,
                delta: Some(self.tolerances.delta),
                max_doublings: self.tolerances.max_doublings,
                warm_start: self.tolerances.warm_start,
            },
            warnings: self.warnings.clone(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serializable");
        s.push('\n');
        s
    }
}

pub fn load_certificate(path: &Path) -> Result<CertificateFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_error(e, &path.display().to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::reference_problem;

    #[test]
    fn problem_roundtrip_is_exact() {
        let p = reference_problem();
        let text = problem_to_json(&p);
        let (q, _) = parse_problem(&text, "mem").unwrap();
        assert_eq!(p, q);
        let (r, _) = parse_problem(&problem_to_json(&q), "mem").unwrap();
        assert_eq!(q, r);
    }

    #[test]
    fn parse_errors_carry_position() {
        match parse_problem("{\n  \"n\": 2,\n  oops\n}", "mem") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_content_is_rejected() {
        let mut f = ProblemFile::from_spec(&reference_problem());
        f.rho = -1.0;
        assert!(f.to_spec().is_err());
        let mut f = ProblemFile::from_spec(&reference_problem());
        f.constraints.t = vec![vec![1.0, 2.0], vec![1.0, 2.0]];
        assert!(f.to_spec().is_err());
    }

    #[test]
    fn values_survive_serialization_bit_for_bit() {
        let vals = [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-17, -2.5e300, 0.123456789012345678];
        for v in vals {
            let s = serde_json::to_string(&v).unwrap();
            let back: f64 = serde_json::from_str(&s).unwrap();
            assert_eq!(back.to_bits(), v.to_bits(), "{s}");
        }
    }
}
