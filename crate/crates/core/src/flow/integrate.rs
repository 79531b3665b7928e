use crate::error::{Error, Result};
use crate::flow::{active_flags, flow_rhs, ProblemSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Sample>,
    /// `‖x − x*‖` per sample when the problem declares `x*`.
    pub err_norms: Option<Vec<f64>>,
    pub active_flags: Vec<Vec<bool>>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&Sample> {
        self.states.last()
    }

    /// Recomputes error norms against an arbitrary reference point.
    pub fn errors_against(&self, x_star: &[f64]) -> Vec<f64> {
        self.states.iter().map(|s| dist(&s.x, x_star)).collect()
    }
}

/// Step sizes with `dt · L_flow` above this produce a warning.
pub const STIFFNESS_WARNING: f64 = 0.1;

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

fn axpy(y: &[f64], a: f64, x: &[f64]) -> Vec<f64> {
    y.iter().zip(x).map(|(y, x)| y + a * x).collect()
}

/// Fixed-step classical Runge–Kutta integration of the flow. The initial
/// state, every `sample_every`-th step and the final step are recorded.
pub fn integrate(
    p: &ProblemSpec,
    x0: &[f64],
    lam0: &[f64],
    dt: f64,
    horizon: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    if x0.len() != p.n || lam0.len() != p.m() {
        return Err(Error::Dimension(format!(
            "initial state has sizes ({}, {}), expected ({}, {})",
            x0.len(),
            lam0.len(),
            p.n,
            p.m()
        )));
    }
    if !(dt > 0.0) || !dt.is_finite() || !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParameter(format!("dt = {dt}, horizon = {horizon}")));
    }
    if sample_every == 0 {
        return Err(Error::InvalidParameter("sample_every must be >= 1".into()));
    }
    if x0.iter().chain(lam0).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite initial state".into()));
    }

    let mut warnings = Vec::new();
    let stiff = dt * p.flow_lipschitz();
    if stiff > STIFFNESS_WARNING {
        let msg = format!("dt * L_flow = {stiff:.3} exceeds {STIFFNESS_WARNING}; results may be inaccurate");
        log::warn!("{msg}");
        warnings.push(msg);
    }

    let steps = (horizon / dt).round() as usize;
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps / sample_every + 2),
        states: Vec::with_capacity(steps / sample_every + 2),
        err_norms: p.x_star.as_ref().map(|_| Vec::new()),
        active_flags: Vec::new(),
        warnings,
    };
    let record = |traj: &mut Trajectory, t: f64, x: &[f64], l: &[f64]| {
        traj.times.push(t);
        if let (Some(errs), Some(xs)) = (traj.err_norms.as_mut(), p.x_star.as_ref()) {
            errs.push(dist(x, xs));
        }
        traj.active_flags.push(active_flags(p, x, l));
        traj.states.push(Sample {
            x: x.to_vec(),
            lambda: l.to_vec(),
        });
    };

    let mut x = x0.to_vec();
    let mut l = lam0.to_vec();
    record(&mut traj, 0.0, &x, &l);
    for step in 1..=steps {
        let (k1x, k1l) = flow_rhs(p, &x, &l);
        let (k2x, k2l) = flow_rhs(p, &axpy(&x, 0.5 * dt, &k1x), &axpy(&l, 0.5 * dt, &k1l));
        let (k3x, k3l) = flow_rhs(p, &axpy(&x, 0.5 * dt, &k2x), &axpy(&l, 0.5 * dt, &k2l));
        let (k4x, k4l) = flow_rhs(p, &axpy(&x, dt, &k3x), &axpy(&l, dt, &k3l));
        let nx: Vec<f64> = (0..x.len())
            .map(|i| x[i] + dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]))
            .collect();
        let nl: Vec<f64> = (0..l.len())
            .map(|j| l[j] + dt / 6.0 * (k1l[j] + 2.0 * k2l[j] + 2.0 * k3l[j] + k4l[j]))
            .collect();
        if nx.iter().chain(&nl).any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                last_valid_time: (step - 1) as f64 * dt,
            });
        }
        x = nx;
        l = nl;
        if step % sample_every == 0 || step == steps {
            record(&mut traj, step as f64 * dt, &x, &l);
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFit {
    /// Negated least-squares slope of `log‖x(t) − x*‖`.
    pub rate: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    pub samples: usize,
}

pub fn fit_decay_rate(traj: &Trajectory, x_star: &[f64], window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!("empty window ({lo}, {hi})")));
    }
    let (first, last) = match (traj.times.first(), traj.times.last()) {
        (Some(a), Some(b)) => (*a, *b),
        _ => return Err(Error::DegenerateFit("empty trajectory".into())),
    };
    if lo < first - 1e-12 || hi > last + 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "window ({lo}, {hi}) outside trajectory span ({first}, {last})"
        )));
    }
    let mut pts = Vec::new();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        if *t < lo || *t > hi {
            continue;
        }
        let e = dist(&s.x, x_star);
        if !(e > 0.0) || !e.is_finite() {
            return Err(Error::DegenerateFit(format!("error norm {e} at t = {t}")));
        }
        pts.push((*t, e.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::DegenerateFit(format!("{} samples in window", pts.len())));
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFit("all samples at one time".into()));
    }
    let slope = sxy / sxx;
    if syy == 0.0 {
        return Err(Error::DegenerateFit("constant error norm".into()));
    }
    let residual = (pts
        .iter()
        .map(|p| (p.1 - my - slope * (p.0 - mt)).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    Ok(DecayFit {
        rate: -slope,
        residual,
        samples: pts.len(),
    })
}
