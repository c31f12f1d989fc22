//! Brute-force checks for the analytic solution: a direct maximizer of the
//! discretized objective over nodal values, and Monte Carlo estimates of
//! the expected terminal utility.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{solve, SolveReport, SolverOptions};
use crate::error::{contract, domain, numeric, Error, Result};
use crate::market::{terminal_wealth_moments, BoundaryCase, ProblemSpec, Trajectory};
use crate::quad::trapezoid_weights;

/// Number of independent random streams the Monte Carlo paths are split
/// into. Fixed so that results do not depend on the thread count.
pub const MC_PARTITIONS: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    pub grid_points: usize,
    /// Stop when the largest gradient component is at most this.
    pub gradient_tolerance: f64,
    pub max_iter: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig { grid_points: 401, gradient_tolerance: 1e-9, max_iter: 5000 }
    }
}

impl OracleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 51 {
            return Err(contract("oracle grid needs at least 51 points"));
        }
        if !(self.gradient_tolerance > 0.0) || self.max_iter == 0 {
            return Err(contract("gradient tolerance must be positive and max_iter nonzero"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McConfig {
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { paths: 200_000, steps: 2000, seed: 20_240_601 }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 || self.steps == 0 {
            return Err(contract("Monte Carlo needs at least 2 paths and 1 step"));
        }
        Ok(())
    }
}

/// Discretized objective on a uniform grid: terminal-wealth integrals by the
/// trapezoid rule, rate disparity by forward differences.
struct Discretization<'a> {
    spec: &'a ProblemSpec,
    h: f64,
    weights: Vec<f64>,
    growth: Vec<f64>,
    expert: Vec<f64>,
}

struct Evaluation {
    objective: f64,
    /// `eta / alpha1`.
    scale: f64,
    /// Gradient of the exponent of `eta`.
    exponent_grad: Vec<f64>,
    /// Gradient of the disparity.
    disparity_grad: Vec<f64>,
}

impl<'a> Discretization<'a> {
    fn new(spec: &'a ProblemSpec, n: usize) -> Self {
        let h = spec.horizon / (n - 1) as f64;
        let grid = Trajectory::uniform_grid(spec.horizon, n);
        let r = spec.market.r;
        Discretization {
            spec,
            h,
            weights: trapezoid_weights(n, h),
            growth: grid.iter().map(|&t| (r * (spec.horizon - t)).exp()).collect(),
            expert: grid.iter().map(|&t| spec.expert_rational(t)).collect(),
        }
    }

    fn evaluate(&self, p: &[f64]) -> Result<Evaluation> {
        let s = self.spec;
        let (a, m) = (s.retail.alpha, &s.market);
        let mut exponent = -a * s.retail.x0 * (m.r * s.horizon).exp();
        let mut exponent_grad = vec![0.0; p.len()];
        for i in 0..p.len() {
            let (w, e) = (self.weights[i], self.growth[i]);
            exponent += w * e * p[i] * (-a * m.v + 0.5 * a * a * m.sigma * m.sigma * e * p[i]);
            exponent_grad[i] = w * e * (-a * m.v + a * a * m.sigma * m.sigma * e * p[i]);
        }
        let eta = exponent.exp();
        if !(eta.is_finite() && eta > 0.0) {
            return Err(numeric(format!("eta overflow in oracle objective (exponent {exponent})")));
        }
        let mut disparity = 0.0;
        let mut disparity_grad = vec![0.0; p.len()];
        for k in 0..p.len() - 1 {
            let slope = (p[k + 1] - p[k] - self.expert[k + 1] + self.expert[k]) / self.h;
            disparity += 0.5 * self.h * slope * slope;
            disparity_grad[k] -= slope;
            disparity_grad[k + 1] += slope;
        }
        Ok(Evaluation {
            objective: -eta / a - s.theta * disparity,
            scale: eta / a,
            exponent_grad,
            disparity_grad,
        })
    }

    fn growth_curvature(&self, i: usize) -> f64 {
        let m = &self.spec.market;
        let a = self.spec.retail.alpha;
        a * a * m.sigma * m.sigma * self.weights[i] * self.growth[i] * self.growth[i]
    }
}

/// Objective evaluated with the oracle's discretization. `p` must be on a
/// uniform grid spanning the horizon.
pub fn discrete_objective(p: &Trajectory, spec: &ProblemSpec) -> Result<f64> {
    if p.uniform_step().is_none() || (p.horizon() - spec.horizon).abs() > 1e-9 * spec.horizon {
        return Err(contract("discrete objective needs a uniform grid over the horizon"));
    }
    Ok(Discretization::new(spec, p.len()).evaluate(p.values())?.objective)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub trajectory: Trajectory,
    pub objective: f64,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Maximize the discretized objective starting from the retail rational
/// decision (endpoints pinned for fixed-endpoint problems).
pub fn optimize_trajectory(spec: &ProblemSpec, cfg: &OracleConfig) -> Result<OracleResult> {
    cfg.validate()?;
    let init = Trajectory::from_fn(spec.horizon, cfg.grid_points, |t| spec.retail_rational(t))?;
    optimize_trajectory_from(spec, cfg, &init)
}

/// Damped Newton ascent on the nodal values with Armijo backtracking. The
/// negated Hessian is a positive tridiagonal matrix plus a rank-one term, so
/// each step costs one tridiagonal solve and a Sherman-Morrison update.
pub fn optimize_trajectory_from(spec: &ProblemSpec, cfg: &OracleConfig, init: &Trajectory) -> Result<OracleResult> {
    cfg.validate()?;
    spec.validate()?;
    let n = init.len();
    if n < 51 || init.uniform_step().is_none() || (init.horizon() - spec.horizon).abs() > 1e-9 * spec.horizon {
        return Err(contract("initial trajectory must be uniform over the horizon with at least 51 points"));
    }
    let disc = Discretization::new(spec, n);
    let mut p = init.values().to_vec();
    let free = match spec.boundary_case {
        BoundaryCase::Case1 => {
            let (p0, pt) = spec.endpoints();
            p[0] = p0;
            p[n - 1] = pt;
            1..n - 1
        }
        BoundaryCase::Case2 => 0..n,
    };
    let theta = spec.theta;
    let mut ev = disc.evaluate(&p)?;
    let mut gradient_norm = f64::INFINITY;

    for iter in 0..cfg.max_iter {
        let grad: Vec<f64> = free
            .clone()
            .map(|i| -ev.scale * ev.exponent_grad[i] - theta * ev.disparity_grad[i])
            .collect();
        gradient_norm = grad.iter().fold(0.0f64, |acc, g| acc.max(g.abs()));
        if gradient_norm <= cfg.gradient_tolerance {
            return Ok(OracleResult {
                trajectory: Trajectory::new(init.grid().to_vec(), p)?,
                objective: ev.objective,
                iterations: iter,
                gradient_norm,
            });
        }

        // Negated Hessian restricted to the free nodes: T + u u^T.
        let m = grad.len();
        let mut diag = vec![0.0; m];
        let mut off = vec![0.0; m.saturating_sub(1)];
        for (j, i) in free.clone().enumerate() {
            diag[j] = ev.scale * disc.growth_curvature(i);
            if i > 0 {
                diag[j] += theta / disc.h;
            }
            if i + 1 < n {
                diag[j] += theta / disc.h;
            }
            if j + 1 < m {
                off[j] = -theta / disc.h;
            }
        }
        let u: Vec<f64> = free.clone().map(|i| ev.scale.sqrt() * ev.exponent_grad[i]).collect();
        let tg = solve_tridiagonal(&diag, &off, &grad)?;
        let tu = solve_tridiagonal(&diag, &off, &u)?;
        let ug: f64 = u.iter().zip(&tg).map(|(a, b)| a * b).sum();
        let uu: f64 = u.iter().zip(&tu).map(|(a, b)| a * b).sum();
        let step: Vec<f64> = tg.iter().zip(&tu).map(|(a, b)| a - b * ug / (1.0 + uu)).collect();
        let slope: f64 = grad.iter().zip(&step).map(|(a, b)| a * b).sum();
        if !(slope > 0.0) {
            return Err(numeric(format!("oracle step is not an ascent direction (slope {slope})")));
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = p.clone();
            for (j, i) in free.clone().enumerate() {
                trial[i] += t * step[j];
            }
            if let Ok(e) = disc.evaluate(&trial) {
                if e.objective >= ev.objective + 1e-4 * t * slope {
                    accepted = Some((trial, e));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                p = trial;
                ev = e;
            }
            None => {
                // No measurable increase is possible: the objective is flat to rounding.
                return Err(Error::Numeric(format!(
                    "oracle line search stalled at iteration {iter} with gradient norm {gradient_norm:e}"
                )));
            }
        }
    }
    Err(Error::Numeric(format!(
        "oracle did not converge in {} iterations (gradient norm {gradient_norm:e})",
        cfg.max_iter
    )))
}

/// Thomas algorithm for a symmetric tridiagonal system.
fn solve_tridiagonal(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-300 {
        return Err(Error::Singular("tridiagonal pivot vanished".into()));
    }
    c[0] = if n > 1 { off[0] / denom } else { 0.0 };
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - off[i - 1] * c[i - 1];
        if denom.abs() < 1e-300 {
            return Err(Error::Singular("tridiagonal pivot vanished".into()));
        }
        c[i] = if i + 1 < n { off[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

/// Rates at both ends of a uniformly sampled trajectory from second-order
/// one-sided differences.
pub fn endpoint_rates(p: &Trajectory) -> Result<(f64, f64)> {
    let h = p.uniform_step().ok_or_else(|| contract("endpoint rates need a uniform grid"))?;
    let v = p.values();
    let n = v.len();
    let start = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h);
    let end = (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * h);
    Ok((start, end))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths: usize,
    pub steps: usize,
    pub seed: u64,
}

impl McEstimate {
    /// Whether `target` lies within `k` standard errors. A relative floor of
    /// 1e-12 covers estimates whose samples are all identical.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= (k * self.std_error).max(1e-12 * target.abs())
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if other.n == 0.0 {
            return self;
        }
        if self.n == 0.0 {
            return other;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }
}

fn partition_sizes(paths: usize) -> Vec<(u64, usize)> {
    let parts = MC_PARTITIONS.min(paths as u64);
    let base = paths / parts as usize;
    let extra = paths % parts as usize;
    (0..parts).map(|k| (k, base + usize::from((k as usize) < extra))).collect()
}

fn run_partitions<F>(cfg: &McConfig, sample: F) -> Result<McEstimate>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    cfg.validate()?;
    let parts: Vec<Moments> = partition_sizes(cfg.paths)
        .into_par_iter()
        .map(|(stream, count)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            let mut acc = Moments::default();
            for _ in 0..count {
                acc.push(sample(&mut rng));
            }
            acc
        })
        .collect();
    let total = parts.into_iter().fold(Moments::default(), Moments::merge);
    if !(total.mean.is_finite() && total.m2.is_finite()) {
        return Err(numeric("non-finite Monte Carlo utility; the step size is too coarse"));
    }
    let var = total.m2 / (total.n - 1.0);
    Ok(McEstimate {
        mean: total.mean,
        std_error: (var / total.n).sqrt(),
        paths: cfg.paths,
        steps: cfg.steps,
        seed: cfg.seed,
    })
}

fn cara_utility(alpha: f64, x: f64) -> f64 {
    -(-alpha * x).exp() / alpha
}

/// Euler-Maruyama estimate of the expected terminal utility under the
/// deterministic control `p` (interpolated linearly onto the step grid).
/// Wealth is stepped in discounted form, so the riskless growth is exact.
pub fn mc_expected_utility(p: &Trajectory, spec: &ProblemSpec, cfg: &McConfig) -> Result<McEstimate> {
    spec.validate()?;
    cfg.validate()?;
    if (p.horizon() - spec.horizon).abs() > 1e-9 * spec.horizon {
        return Err(contract("control does not span the horizon"));
    }
    let m = spec.market;
    let dt = spec.horizon / cfg.steps as f64;
    let sqrt_dt = dt.sqrt();
    let loading: Vec<f64> = (0..cfg.steps)
        .map(|k| {
            let t = k as f64 * dt;
            (-m.r * t).exp() * p.at(t)
        })
        .collect();
    let growth = (m.r * spec.horizon).exp();
    let (x0, alpha) = (spec.retail.x0, spec.retail.alpha);
    run_partitions(cfg, |rng| {
        let mut y = x0;
        for &c in &loading {
            let z: f64 = rng.sample(StandardNormal);
            y += c * (m.v * dt + m.sigma * sqrt_dt * z);
        }
        cara_utility(alpha, growth * y)
    })
}

/// Expected terminal utility estimated by sampling the Gaussian terminal
/// wealth directly. Cross-check for [`mc_expected_utility`].
pub fn mc_exact_utility(p: &Trajectory, spec: &ProblemSpec, cfg: &McConfig) -> Result<McEstimate> {
    let (mean, var) = terminal_wealth_moments(p, spec)?;
    let sd = var.sqrt();
    let alpha = spec.retail.alpha;
    run_partitions(cfg, |rng| {
        let z: f64 = rng.sample(StandardNormal);
        cara_utility(alpha, mean + sd * z)
    })
}

/// Daily closes of a geometric Brownian motion with drift `mu` and
/// volatility `sigma` (annualized), sampled exactly at steps of `dt` years.
pub fn simulate_gbm_prices(s0: f64, mu: f64, sigma: f64, dt: f64, steps: usize, seed: u64) -> Result<Vec<f64>> {
    if !(s0 > 0.0 && sigma >= 0.0 && dt > 0.0) || !mu.is_finite() {
        return Err(domain("GBM needs s0 > 0, sigma >= 0, dt > 0 and finite mu"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drift = (mu - 0.5 * sigma * sigma) * dt;
    let vol = sigma * dt.sqrt();
    let mut out = Vec::with_capacity(steps + 1);
    let mut log_s = s0.ln();
    out.push(s0);
    for _ in 0..steps {
        let z: f64 = rng.sample(StandardNormal);
        log_s += drift + vol * z;
        out.push(log_s.exp());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub spec: ProblemSpec,
    pub grid_points: usize,
    pub sup_gap: f64,
    pub analytic_sup: f64,
    pub relative_sup_gap: f64,
    pub analytic_objective: f64,
    pub oracle_objective: f64,
    /// Oracle minus analytic objective, both in the oracle's discretization.
    pub objective_gap: f64,
    pub relative_objective_gap: f64,
    pub oracle_iterations: usize,
    pub oracle_gradient_norm: f64,
    pub solve: Option<SolveReport>,
}

/// Compare the analytic decision with the brute-force maximizer on the
/// oracle grid.
pub fn compare_analytic_oracle(spec: &ProblemSpec, cfg: &OracleConfig, opts: &SolverOptions) -> Result<ComparisonReport> {
    let solution = solve(spec, opts)?;
    let analytic = solution.sample(cfg.grid_points)?;
    let oracle = optimize_trajectory(spec, cfg)?;
    let sup_gap = analytic.sup_distance(&oracle.trajectory)?;
    let analytic_sup = analytic.sup_norm();
    let analytic_objective = discrete_objective(&analytic, spec)?;
    let objective_gap = oracle.objective - analytic_objective;
    Ok(ComparisonReport {
        spec: *spec,
        grid_points: cfg.grid_points,
        sup_gap,
        analytic_sup,
        relative_sup_gap: sup_gap / analytic_sup,
        analytic_objective,
        oracle_objective: oracle.objective,
        objective_gap,
        relative_objective_gap: objective_gap.abs() / analytic_objective.abs(),
        oracle_iterations: oracle.iterations,
        oracle_gradient_norm: oracle.gradient_norm,
        solve: solution.report().cloned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{deterministic_equivalent_eta, expert_rational_on, integral_disparity};

    #[test]
    fn tridiagonal_solver() {
        let diag = [4.0, 4.0, 4.0, 4.0];
        let off = [-1.0, -1.0, -1.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let b: Vec<f64> = (0..4)
            .map(|i| {
                let mut s = diag[i] * x[i];
                if i > 0 {
                    s += off[i - 1] * x[i - 1];
                }
                if i < 3 {
                    s += off[i] * x[i + 1];
                }
                s
            })
            .collect();
        let got = solve_tridiagonal(&diag, &off, &b).unwrap();
        for (g, e) in got.iter().zip(x) {
            assert!((g - e).abs() < 1e-14);
        }
    }

    #[test]
    fn discrete_objective_matches_its_pieces() {
        let spec = ProblemSpec::reference(3.0, BoundaryCase::Case2);
        let p = Trajectory::from_fn(50.0, 101, |t| 0.5 + 0.01 * t).unwrap();
        let disc = Discretization::new(&spec, 101);
        let ev = disc.evaluate(p.values()).unwrap();
        let q = expert_rational_on(&spec, &p);
        let d = integral_disparity(&p, &q).unwrap();
        // Trapezoid and Simpson agree closely on a smooth control.
        let eta = deterministic_equivalent_eta(&p, &spec).unwrap();
        assert!((ev.scale * 0.2 / eta - 1.0).abs() < 1e-4);
        assert!((ev.objective - (-ev.scale - 3.0 * d)).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let spec = ProblemSpec::reference(2.0, BoundaryCase::Case2);
        let p = Trajectory::from_fn(50.0, 61, |t| 0.4 + 0.05 * t - 0.0004 * t * t).unwrap();
        let disc = Discretization::new(&spec, 61);
        let ev = disc.evaluate(p.values()).unwrap();
        for i in [0, 1, 30, 59, 60] {
            let h = 1e-6;
            let mut a = p.values().to_vec();
            let mut b = a.clone();
            a[i] += h;
            b[i] -= h;
            let fd = (disc.evaluate(&a).unwrap().objective - disc.evaluate(&b).unwrap().objective) / (2.0 * h);
            let g = -ev.scale * ev.exponent_grad[i] - 2.0 * ev.disparity_grad[i];
            assert!((fd - g).abs() < 1e-8 * g.abs().max(1.0), "node {i}: {fd} vs {g}");
        }
    }

    #[test]
    fn theta_zero_recovers_retail_rational() {
        for case in [BoundaryCase::Case1, BoundaryCase::Case2] {
            let spec = ProblemSpec::reference(0.0, case);
            let init = Trajectory::from_fn(50.0, 401, |t| 0.3 + 0.02 * t).unwrap();
            let res = optimize_trajectory_from(&spec, &OracleConfig::default(), &init).unwrap();
            let rational = Trajectory::from_fn(50.0, 401, |t| spec.retail_rational(t)).unwrap();
            assert!(res.trajectory.sup_distance(&rational).unwrap() < 1e-6);
        }
    }

    #[test]
    fn oracle_is_a_local_maximum() {
        let spec = ProblemSpec::reference(1.0, BoundaryCase::Case2);
        let cfg = OracleConfig { grid_points: 101, ..Default::default() };
        let res = optimize_trajectory(&spec, &cfg).unwrap();
        assert!(res.gradient_norm <= cfg.gradient_tolerance);
        let base = discrete_objective(&res.trajectory, &spec).unwrap();
        assert_eq!(base, res.objective);
        for i in 0..101 {
            for d in [1e-3, -1e-3] {
                let mut v = res.trajectory.values().to_vec();
                v[i] += d;
                let q = Trajectory::new(res.trajectory.grid().to_vec(), v).unwrap();
                assert!(discrete_objective(&q, &spec).unwrap() <= base);
            }
        }
    }

    #[test]
    fn random_restarts_agree() {
        let spec = ProblemSpec::reference(4.0, BoundaryCase::Case2).with_alphas(0.4, 0.2);
        let cfg = OracleConfig { grid_points: 201, ..Default::default() };
        let mut results = Vec::new();
        for seed in [1u64, 2] {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let init = Trajectory::from_fn(50.0, 201, |t| spec.retail_rational(t) + rng.random_range(-0.5..0.5)).unwrap();
            results.push(optimize_trajectory_from(&spec, &cfg, &init).unwrap().trajectory);
        }
        assert!(results[0].sup_distance(&results[1]).unwrap() < 1e-8);
    }

    #[test]
    fn fixed_endpoints_are_respected() {
        let spec = ProblemSpec::reference(1.0, BoundaryCase::Case1);
        let res = optimize_trajectory(&spec, &OracleConfig { grid_points: 101, ..Default::default() }).unwrap();
        let v = res.trajectory.values();
        assert_eq!(v[0], spec.retail_rational(0.0));
        assert_eq!(v[100], spec.retail_rational(50.0));
    }

    #[test]
    fn rejects_bad_configs() {
        let spec = ProblemSpec::reference(1.0, BoundaryCase::Case1);
        assert!(optimize_trajectory(&spec, &OracleConfig { grid_points: 50, ..Default::default() }).is_err());
        let p = Trajectory::from_fn(50.0, 11, |_| 0.0).unwrap();
        assert!(mc_expected_utility(&p, &spec, &McConfig { paths: 1, ..Default::default() }).is_err());
    }

    #[test]
    fn endpoint_rates_exact_for_quadratics() {
        let p = Trajectory::from_fn(2.0, 21, |t| 1.0 + 2.0 * t - 0.75 * t * t).unwrap();
        let (a, b) = endpoint_rates(&p).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
        assert!((b - (2.0 - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn moments_merge_like_a_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let (mut a, mut b) = (Moments::default(), Moments::default());
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        let merged = a.merge(b);
        assert!((merged.mean - whole.mean).abs() < 1e-12);
        assert!((merged.m2 - whole.m2).abs() < 1e-9);
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        let spec = ProblemSpec::reference(1.0, BoundaryCase::Case1);
        let p = Trajectory::from_fn(50.0, 101, |t| spec.retail_rational(t)).unwrap();
        let cfg = McConfig { paths: 2000, steps: 50, seed: 7 };
        let a = mc_expected_utility(&p, &spec, &cfg).unwrap();
        let b = mc_expected_utility(&p, &spec, &cfg).unwrap();
        assert_eq!(a, b);
        let c = mc_expected_utility(&p, &spec, &McConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn zero_control_is_deterministic() {
        let spec = ProblemSpec::reference(1.0, BoundaryCase::Case1);
        let p = Trajectory::from_fn(50.0, 11, |_| 0.0).unwrap();
        let est = mc_expected_utility(&p, &spec, &McConfig { paths: 100, steps: 10, seed: 1 }).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert!(est.covers(-1.140682414643800122, 3.0));
    }

    #[test]
    fn exact_sampler_matches_closed_form() {
        let spec = ProblemSpec::reference(1.0, BoundaryCase::Case1);
        let p = Trajectory::from_fn(50.0, 201, |t| spec.expert_rational(t)).unwrap();
        let eta = deterministic_equivalent_eta(&p, &spec).unwrap();
        let est = mc_exact_utility(&p, &spec, &McConfig { paths: 100_000, steps: 1, seed: 3 }).unwrap();
        assert!(est.covers(-eta / 0.2, 3.0), "{est:?} vs {}", -eta / 0.2);
    }

    #[test]
    fn gbm_log_returns_have_expected_moments() {
        let prices = simulate_gbm_prices(100.0, 0.07, 0.17, 1.0 / 252.0, 50_000, 11).unwrap();
        let lr: Vec<f64> = prices.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
        let n = lr.len() as f64;
        let mean = lr.iter().sum::<f64>() / n;
        let var = lr.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(((var * 252.0).sqrt() - 0.17).abs() < 0.003);
        assert_eq!(prices[0], 100.0);
    }
}
