//! Self-consistent integral constants `(zeta, eta)`.
//!
//! `zeta` is an explicit function of `eta`; `eta` is the deterministic
//! equivalent of the trajectory that `(zeta, eta)` generate. The primary
//! method is the plain fixed-point iteration on that pair, with an
//! under-relaxation factor on `eta` that is halved whenever successive
//! updates alternate in sign without shrinking. If it does not settle
//! within the iteration budget, a damped Newton iteration on the residual
//! map takes over from the best iterate.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::market::{deterministic_equivalent_eta, log_deterministic_equivalent_eta, ProblemSpec, Trajectory};
use crate::variational::AnalyticSolution;

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_GRID_POINTS: usize = 2001;
/// Largest change of `ln eta` accepted in one fixed-point step. An
/// inconsistent starting pair can map to an `eta` dozens of orders of
/// magnitude away; the cap keeps the next iterate inside the range where
/// the Bessel evaluation is meaningful.
pub const MAX_LOG_ETA_STEP: f64 = 4.605170185988092;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    FixedPoint,
    NewtonFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Initialization {
    /// Explicit starting constants.
    Fixed { zeta0: f64, eta0: f64 },
    /// `eta0` from the retail rational decision, `zeta0` from `eta0`.
    RationalWarmStart,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iter: usize,
    pub grid_points: usize,
    pub init: Initialization,
    /// Initial under-relaxation factor on `eta`, in `(0, 1]`.
    pub relaxation: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            grid_points: DEFAULT_GRID_POINTS,
            init: Initialization::Fixed { zeta0: 1.0, eta0: 1.0 },
            relaxation: 1.0,
        }
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    pub zeta: f64,
    pub eta: f64,
    pub delta_zeta: f64,
    pub delta_eta: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub zeta: f64,
    pub eta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub final_deltas: (f64, f64),
    pub method: Method,
    pub residual_norm: f64,
    pub trace: Vec<TraceRecord>,
}

/// `zeta = sigma e^{rT} / r * sqrt(eta alpha1 / theta)`.
pub fn zeta_from_eta(eta: f64, spec: &ProblemSpec) -> f64 {
    let m = &spec.market;
    m.sigma * (m.r * spec.horizon).exp() / m.r * (eta * spec.retail.alpha / spec.theta).sqrt()
}

/// `eta` of the trajectory generated by `(zeta, eta)`.
pub fn eta_update(spec: &ProblemSpec, zeta: f64, eta: f64, grid_points: usize) -> Result<f64> {
    let sol = AnalyticSolution::build(spec, zeta, eta, grid_points)?;
    deterministic_equivalent_eta(&sol.trajectory()?, spec)
}

fn log_eta_update(spec: &ProblemSpec, zeta: f64, eta: f64, grid_points: usize) -> Result<f64> {
    let sol = AnalyticSolution::build(spec, zeta, eta, grid_points)?;
    log_deterministic_equivalent_eta(&sol.trajectory()?, spec)
}

/// `(zeta - Z(eta), eta - H(zeta, eta))`; zero exactly at self-consistent constants.
pub fn residual(spec: &ProblemSpec, zeta: f64, eta: f64, grid_points: usize) -> Result<(f64, f64)> {
    Ok((zeta - zeta_from_eta(eta, spec), eta - eta_update(spec, zeta, eta, grid_points)?))
}

fn check_inputs(spec: &ProblemSpec, opts: &SolverOptions) -> Result<()> {
    spec.validate()?;
    if !(spec.theta > 0.0) {
        return Err(contract("integral constants are only defined for theta > 0"));
    }
    if !(spec.market.v > 0.0) {
        return Err(crate::error::domain("excess return must be positive for the imitation solver"));
    }
    if !(opts.tolerance > 0.0) || opts.max_iter == 0 {
        return Err(contract("tolerance must be positive and max_iter nonzero"));
    }
    if !(opts.relaxation > 0.0 && opts.relaxation <= 1.0) {
        return Err(contract("relaxation must lie in (0, 1]"));
    }
    Ok(())
}

fn initial_point(spec: &ProblemSpec, opts: &SolverOptions) -> Result<(f64, f64)> {
    match opts.init {
        Initialization::Fixed { zeta0, eta0 } => {
            if !(zeta0 > 0.0 && eta0 > 0.0) {
                return Err(contract("initial constants must be positive"));
            }
            Ok((zeta0, eta0))
        }
        Initialization::RationalWarmStart => {
            let p = Trajectory::from_fn(spec.horizon, opts.grid_points, |t| spec.retail_rational(t))?;
            let eta0 = deterministic_equivalent_eta(&p, spec)?;
            Ok((zeta_from_eta(eta0, spec), eta0))
        }
    }
}

/// Fixed-point iteration for `(zeta, eta)`, handing off to
/// [`newton_fallback`] when the budget runs out or an iterate is unusable.
pub fn fixed_point_solve(spec: &ProblemSpec, opts: &SolverOptions) -> Result<SolveReport> {
    check_inputs(spec, opts)?;
    let (mut zeta, mut eta) = initial_point(spec, opts)?;
    let eps = opts.tolerance;
    let mut lambda = opts.relaxation;
    let mut trace = Vec::new();
    let mut last_step = 0.0f64;
    let mut failure = None;

    for k in 0..opts.max_iter {
        let log_new = match log_eta_update(spec, zeta, eta, opts.grid_points) {
            Ok(v) => v,
            Err(e) => {
                failure = Some(e.to_string());
                break;
            }
        };
        let log_step = log_new - eta.ln();
        let eta_new = if log_step.abs() > MAX_LOG_ETA_STEP {
            eta * (log_step.signum() * MAX_LOG_ETA_STEP).exp()
        } else {
            log_new.exp()
        };
        let step = eta_new - eta;
        if k > 0 && step * last_step < 0.0 && step.abs() > 0.5 * last_step.abs() {
            lambda = (0.5 * lambda).max(1.0 / 64.0);
        }
        last_step = step;
        let eta_next = eta + lambda * step;
        let zeta_next = zeta_from_eta(eta_next, spec);
        let (dz, de) = ((zeta_next - zeta).abs(), (eta_next - eta).abs());
        trace.push(TraceRecord {
            k: k + 1,
            zeta: zeta_next,
            eta: eta_next,
            delta_zeta: dz,
            delta_eta: de,
            method: Method::FixedPoint,
        });
        zeta = zeta_next;
        eta = eta_next;
        if !(zeta.is_finite() && eta.is_finite() && eta > 0.0) {
            failure = Some(format!("iterate left the positive orthant: zeta = {zeta}, eta = {eta}"));
            break;
        }
        if dz < eps && de < eps {
            let (r1, r2) = residual(spec, zeta, eta, opts.grid_points)?;
            let norm = r1.abs().max(r2.abs());
            if norm < 10.0 * eps {
                return Ok(SolveReport {
                    zeta,
                    eta,
                    iterations: k + 1,
                    converged: true,
                    final_deltas: (dz, de),
                    method: Method::FixedPoint,
                    residual_norm: norm,
                    trace,
                });
            }
        }
    }

    // Restart Newton from the last usable iterate (or the initial point).
    let start = trace
        .iter()
        .rev()
        .find(|r| r.zeta.is_finite() && r.eta.is_finite() && r.zeta > 0.0 && r.eta > 0.0)
        .map(|r| (r.zeta, r.eta))
        .map_or_else(|| initial_point(spec, opts), Ok)?;
    let fixed_iterations = trace.len();
    match newton_fallback(spec, start, opts) {
        Ok(mut report) => {
            trace.extend(report.trace);
            report.trace = trace;
            report.iterations += fixed_iterations;
            Ok(report)
        }
        Err(Error::NonConvergence { reason, mut report }) => {
            let mut full = trace;
            full.extend(report.trace);
            report.trace = full;
            report.iterations += fixed_iterations;
            let reason = match failure {
                Some(f) => format!("fixed point: {f}; newton: {reason}"),
                None => format!("fixed point: budget exhausted; newton: {reason}"),
            };
            Err(Error::NonConvergence { reason, report })
        }
        Err(e) => Err(e),
    }
}

/// Damped Newton iteration on [`residual`] with a forward-difference
/// Jacobian (relative step 1e-6). Steps are clipped to keep both constants
/// positive and halved until the residual norm decreases.
pub fn newton_fallback(spec: &ProblemSpec, init: (f64, f64), opts: &SolverOptions) -> Result<SolveReport> {
    check_inputs(spec, opts)?;
    let eps = opts.tolerance;
    let n = opts.grid_points;
    let (mut zeta, mut eta) = init;
    if !(zeta > 0.0 && eta > 0.0) {
        return Err(contract("initial constants must be positive"));
    }
    let mut trace = Vec::new();
    let mut f = residual(spec, zeta, eta, n)?;
    let norm = |f: (f64, f64)| f.0.abs().max(f.1.abs());
    let fail = |reason: String, trace: Vec<TraceRecord>, zeta, eta, res| Error::NonConvergence {
        reason,
        report: Box::new(SolveReport {
            zeta,
            eta,
            iterations: trace.len(),
            converged: false,
            final_deltas: trace.last().map_or((f64::NAN, f64::NAN), |r: &TraceRecord| (r.delta_zeta, r.delta_eta)),
            method: Method::NewtonFallback,
            residual_norm: res,
            trace,
        }),
    };

    for k in 0..opts.max_iter {
        if norm(f) < 10.0 * eps {
            if let Some(last) = trace.last() {
                let last: &TraceRecord = last;
                if last.delta_zeta < eps && last.delta_eta < eps {
                    return Ok(SolveReport {
                        zeta,
                        eta,
                        iterations: k,
                        converged: true,
                        final_deltas: (last.delta_zeta, last.delta_eta),
                        method: Method::NewtonFallback,
                        residual_norm: norm(f),
                        trace,
                    });
                }
            }
        }
        let hz = 1e-6 * zeta;
        let he = 1e-6 * eta;
        let fz = residual(spec, zeta + hz, eta, n)?;
        let fe = residual(spec, zeta, eta + he, n)?;
        let j11 = (fz.0 - f.0) / hz;
        let j21 = (fz.1 - f.1) / hz;
        let j12 = (fe.0 - f.0) / he;
        let j22 = (fe.1 - f.1) / he;
        let det = j11 * j22 - j12 * j21;
        if !det.is_finite() || det.abs() < 1e-300 {
            return Err(Error::Singular(format!("Newton Jacobian determinant {det}")));
        }
        let mut dz = -(j22 * f.0 - j12 * f.1) / det;
        let mut de = -(j11 * f.1 - j21 * f.0) / det;
        // Keep both constants positive: never move more than 90% of the way to zero.
        let mut clip: f64 = 1.0;
        if dz < 0.0 {
            clip = clip.min(0.9 * zeta / -dz);
        }
        if de < 0.0 {
            clip = clip.min(0.9 * eta / -de);
        }
        dz *= clip;
        de *= clip;

        let mut accepted = None;
        let mut scale = 1.0;
        for _ in 0..30 {
            let (zt, et) = (zeta + scale * dz, eta + scale * de);
            if let Ok(ft) = residual(spec, zt, et, n) {
                if norm(ft) < norm(f) || norm(ft) < 10.0 * eps {
                    accepted = Some((zt, et, ft));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((zt, et, ft)) = accepted else {
            return Err(fail("line search could not reduce the residual".into(), trace, zeta, eta, norm(f)));
        };
        trace.push(TraceRecord {
            k: k + 1,
            zeta: zt,
            eta: et,
            delta_zeta: (zt - zeta).abs(),
            delta_eta: (et - eta).abs(),
            method: Method::NewtonFallback,
        });
        zeta = zt;
        eta = et;
        f = ft;
    }
    let res = norm(f);
    Err(fail(format!("no convergence within {} iterations", opts.max_iter), trace, zeta, eta, res))
}

/// Solved constants and the resulting optimal decision.
#[derive(Debug, Clone)]
pub enum Solution {
    /// `theta = 0`: the retail rational decision, no constants exist.
    Rational { spec: ProblemSpec },
    Analytic { report: SolveReport, solution: AnalyticSolution },
}

impl Solution {
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self {
            Solution::Rational { spec } => crate::market::rational_decision(spec.retail.alpha, &spec.market, spec.horizon, t),
            Solution::Analytic { solution, .. } => solution.eval(t),
        }
    }

    pub fn rate(&self, t: f64) -> Result<f64> {
        match self {
            Solution::Rational { spec } => {
                crate::market::rational_decision_rate(spec.retail.alpha, &spec.market, spec.horizon, t)
            }
            Solution::Analytic { solution, .. } => solution.rate(t),
        }
    }

    pub fn sample(&self, n: usize) -> Result<Trajectory> {
        match self {
            Solution::Rational { spec } => Trajectory::from_fn(spec.horizon, n, |t| spec.retail_rational(t)),
            Solution::Analytic { solution, .. } => solution.sample(n),
        }
    }

    pub fn report(&self) -> Option<&SolveReport> {
        match self {
            Solution::Rational { .. } => None,
            Solution::Analytic { report, .. } => Some(report),
        }
    }

    pub fn analytic(&self) -> Option<&AnalyticSolution> {
        match self {
            Solution::Rational { .. } => None,
            Solution::Analytic { solution, .. } => Some(solution),
        }
    }
}

/// Solve for the optimal decision. `theta = 0` returns the retail rational
/// decision in both boundary cases.
pub fn solve(spec: &ProblemSpec, opts: &SolverOptions) -> Result<Solution> {
    spec.validate()?;
    if spec.theta == 0.0 {
        return Ok(Solution::Rational { spec: *spec });
    }
    let report = fixed_point_solve(spec, opts)?;
    let solution = AnalyticSolution::build(spec, report.zeta, report.eta, opts.grid_points)?;
    Ok(Solution::Analytic { report, solution })
}
