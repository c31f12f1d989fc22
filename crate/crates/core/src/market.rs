//! Market and investor parameters, rational (Merton) decisions, the integral
//! disparity and the deterministic-equivalent objective.

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, numeric, Result};
use crate::quad::simpson_weights;

/// Coefficients of the two-asset market: risk-free rate `r`, excess return
/// `v` and volatility `sigma`, all annualised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub r: f64,
    pub v: f64,
    pub sigma: f64,
}

impl MarketParams {
    pub fn new(r: f64, v: f64, sigma: f64) -> Result<Self> {
        let m = MarketParams { r, v, sigma };
        m.validate()?;
        Ok(m)
    }

    /// Dow Jones 1974-2023 calibration: r = 0.04, v = 0.03, sigma = 0.17.
    pub fn reference() -> Self {
        MarketParams { r: 0.04, v: 0.03, sigma: 0.17 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(domain(format!("interest rate must be positive, got {}", self.r)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(domain(format!("volatility must be positive, got {}", self.sigma)));
        }
        if !self.v.is_finite() {
            return Err(domain("excess return must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Investor {
    /// Absolute risk aversion (1 / currency).
    pub alpha: f64,
    /// Initial wealth.
    pub x0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryCase {
    /// Both endpoint holdings fixed (to the retail rational decision by default).
    Case1,
    /// Endpoint decision rates matched to the expert's rational rate.
    Case2,
}

impl std::fmt::Display for BoundaryCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCase::Case1 => f.write_str("case1"),
            BoundaryCase::Case2 => f.write_str("case2"),
        }
    }
}

/// A retail investor imitating a leading expert's decision-changing rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub market: MarketParams,
    pub retail: Investor,
    pub expert_alpha: f64,
    pub horizon: f64,
    pub theta: f64,
    pub boundary_case: BoundaryCase,
    /// Case 1 endpoint holdings `(P(0), P(T))`. `None` means the retail
    /// rational decision at both ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_endpoints: Option<(f64, f64)>,
}

impl ProblemSpec {
    /// The reference configuration: alpha1 = 0.2, alpha2 = 0.4, x1 = 1,
    /// T = 50 years on the reference market.
    pub fn reference(theta: f64, boundary_case: BoundaryCase) -> Self {
        ProblemSpec {
            market: MarketParams::reference(),
            retail: Investor { alpha: 0.2, x0: 1.0 },
            expert_alpha: 0.4,
            horizon: 50.0,
            theta,
            boundary_case,
            fixed_endpoints: None,
        }
    }

    pub fn with_alphas(mut self, retail: f64, expert: f64) -> Self {
        self.retail.alpha = retail;
        self.expert_alpha = expert;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        if !(self.retail.alpha.is_finite() && self.retail.alpha > 0.0) {
            return Err(domain(format!("retail risk aversion must be positive, got {}", self.retail.alpha)));
        }
        if !(self.expert_alpha.is_finite() && self.expert_alpha > 0.0) {
            return Err(domain(format!("expert risk aversion must be positive, got {}", self.expert_alpha)));
        }
        if !self.retail.x0.is_finite() {
            return Err(domain("initial wealth must be finite"));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(domain(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.theta.is_finite() && self.theta >= 0.0) {
            return Err(domain(format!("imitation coefficient must be >= 0, got {}", self.theta)));
        }
        if let Some((a, b)) = self.fixed_endpoints {
            if !(a.is_finite() && b.is_finite()) {
                return Err(domain("fixed endpoints must be finite"));
            }
        }
        Ok(())
    }

    pub fn retail_rational(&self, t: f64) -> f64 {
        merton(self.retail.alpha, &self.market, self.horizon, t)
    }

    pub fn expert_rational(&self, t: f64) -> f64 {
        merton(self.expert_alpha, &self.market, self.horizon, t)
    }

    pub fn expert_rate(&self, t: f64) -> f64 {
        self.market.r * self.expert_rational(t)
    }

    /// Case 1 endpoint holdings.
    pub fn endpoints(&self) -> (f64, f64) {
        self.fixed_endpoints
            .unwrap_or_else(|| (self.retail_rational(0.0), self.retail_rational(self.horizon)))
    }
}

fn merton(alpha: f64, market: &MarketParams, horizon: f64, t: f64) -> f64 {
    market.v / (alpha * market.sigma * market.sigma) * (market.r * (t - horizon)).exp()
}

fn check_time(t: f64, horizon: f64) -> Result<()> {
    if !(t.is_finite() && (0.0..=horizon).contains(&t)) {
        return Err(domain(format!("time {t} outside [0, {horizon}]")));
    }
    Ok(())
}

/// Merton holding `v / (alpha sigma^2) * exp(r (t - T))`.
pub fn rational_decision(alpha: f64, market: &MarketParams, horizon: f64, t: f64) -> Result<f64> {
    check_time(t, horizon)?;
    if !(alpha > 0.0) {
        return Err(domain(format!("risk aversion must be positive, got {alpha}")));
    }
    Ok(merton(alpha, market, horizon, t))
}

/// Time derivative of [`rational_decision`], `r` times the holding.
pub fn rational_decision_rate(alpha: f64, market: &MarketParams, horizon: f64, t: f64) -> Result<f64> {
    Ok(market.r * rational_decision(alpha, market, horizon, t)?)
}

/// A decision path sampled on a strictly increasing time grid that starts at
/// zero. Holdings are in currency units invested in the risky asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl Trajectory {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if grid.len() != values.len() {
            return Err(contract(format!("grid has {} points but {} values", grid.len(), values.len())));
        }
        if grid.len() < 3 {
            return Err(contract("a trajectory needs at least 3 points"));
        }
        if grid[0] != 0.0 {
            return Err(contract("trajectory grid must start at 0"));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(contract("trajectory grid must be strictly increasing"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(numeric(format!("non-finite holding at t = {}", grid[i])));
        }
        Ok(Trajectory { grid, values })
    }

    /// `n` equally spaced times on `[0, horizon]` with exact endpoints.
    pub fn uniform_grid(horizon: f64, n: usize) -> Vec<f64> {
        let last = (n - 1) as f64;
        (0..n)
            .map(|i| if i + 1 == n { horizon } else { horizon * i as f64 / last })
            .collect()
    }

    pub fn from_fn(horizon: f64, n: usize, mut f: impl FnMut(f64) -> f64) -> Result<Self> {
        if n < 3 {
            return Err(contract("a trajectory needs at least 3 points"));
        }
        let grid = Self::uniform_grid(horizon, n);
        let values = grid.iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    pub fn try_from_fn(horizon: f64, n: usize, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        if n < 3 {
            return Err(contract("a trajectory needs at least 3 points"));
        }
        let grid = Self::uniform_grid(horizon, n);
        let values = grid.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.grid[self.grid.len() - 1]
    }

    /// Spacing of a uniform grid, `None` otherwise.
    pub fn uniform_step(&self) -> Option<f64> {
        let h = self.horizon() / (self.len() - 1) as f64;
        let uniform = self
            .grid
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        uniform.then_some(h)
    }

    /// Piecewise-linear interpolation, clamped to the grid.
    pub fn at(&self, t: f64) -> f64 {
        let n = self.len();
        if t <= self.grid[0] {
            return self.values[0];
        }
        if t >= self.grid[n - 1] {
            return self.values[n - 1];
        }
        let j = self.grid.partition_point(|&g| g <= t) - 1;
        let w = (t - self.grid[j]) / (self.grid[j + 1] - self.grid[j]);
        self.values[j] + w * (self.values[j + 1] - self.values[j])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Trajectory) -> Result<f64> {
        self.same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    fn same_grid(&self, other: &Trajectory) -> Result<()> {
        let matches = self.len() == other.len()
            && self
                .grid
                .iter()
                .zip(&other.grid)
                .all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if matches {
            Ok(())
        } else {
            Err(contract("trajectories are sampled on different grids"))
        }
    }

    /// Quadrature weights: composite Simpson on uniform grids, trapezoid otherwise.
    pub(crate) fn quadrature_weights(&self) -> Vec<f64> {
        match self.uniform_step() {
            Some(h) => simpson_weights(self.len(), h),
            None => {
                let n = self.len();
                let mut w = vec![0.0; n];
                for i in 0..n - 1 {
                    let h = self.grid[i + 1] - self.grid[i];
                    w[i] += 0.5 * h;
                    w[i + 1] += 0.5 * h;
                }
                w
            }
        }
    }
}

/// Expert rational decision sampled on the grid of `like`.
pub fn expert_rational_on(spec: &ProblemSpec, like: &Trajectory) -> Trajectory {
    let values = like.grid().iter().map(|&t| spec.expert_rational(t)).collect();
    Trajectory { grid: like.grid.clone(), values }
}

/// Half the integrated squared difference of the two decision rates. Rates
/// are forward-difference slopes on each grid interval, integrated with the
/// midpoint rule.
pub fn integral_disparity(p: &Trajectory, q: &Trajectory) -> Result<f64> {
    p.same_grid(q)?;
    let mut d = 0.0;
    for i in 0..p.len() - 1 {
        let h = p.grid[i + 1] - p.grid[i];
        let dp = p.values[i + 1] - p.values[i];
        let dq = q.values[i + 1] - q.values[i];
        let slope = (dp - dq) / h;
        d += 0.5 * h * slope * slope;
    }
    Ok(d)
}

/// Mean and variance of the (Gaussian) terminal wealth under the
/// deterministic control `p`.
pub fn terminal_wealth_moments(p: &Trajectory, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let (drift, var) = wealth_integrals(p, spec)?;
    let m = &spec.market;
    let mean = spec.retail.x0 * (m.r * spec.horizon).exp() + m.v * drift;
    Ok((mean, m.sigma * m.sigma * var))
}

/// `(int e^{r(T-t)} p dt, int e^{2r(T-t)} p^2 dt)`.
fn wealth_integrals(p: &Trajectory, spec: &ProblemSpec) -> Result<(f64, f64)> {
    check_horizon(p, spec)?;
    let w = p.quadrature_weights();
    let r = spec.market.r;
    let mut drift = 0.0;
    let mut var = 0.0;
    for ((&t, &x), &wi) in p.grid.iter().zip(&p.values).zip(&w) {
        let e = (r * (spec.horizon - t)).exp();
        drift += wi * e * x;
        var += wi * e * e * x * x;
    }
    Ok((drift, var))
}

fn check_horizon(p: &Trajectory, spec: &ProblemSpec) -> Result<()> {
    let h = p.horizon();
    if (h - spec.horizon).abs() > 1e-9 * spec.horizon {
        return Err(contract(format!("trajectory ends at {h}, horizon is {}", spec.horizon)));
    }
    Ok(())
}

/// Exponent of [`deterministic_equivalent_eta`].
pub fn log_deterministic_equivalent_eta(p: &Trajectory, spec: &ProblemSpec) -> Result<f64> {
    let (drift, var) = wealth_integrals(p, spec)?;
    let m = &spec.market;
    let a = spec.retail.alpha;
    let exponent = -a * spec.retail.x0 * (m.r * spec.horizon).exp() - a * m.v * drift
        + 0.5 * a * a * m.sigma * m.sigma * var;
    if !exponent.is_finite() {
        return Err(numeric(format!(
            "deterministic-equivalent exponent is not finite (drift integral {drift}, variance integral {var})"
        )));
    }
    Ok(exponent)
}

/// `eta = E[exp(-alpha1 X1(T))]` for the deterministic control `p`; the
/// expected CARA utility is `-eta / alpha1`.
pub fn deterministic_equivalent_eta(p: &Trajectory, spec: &ProblemSpec) -> Result<f64> {
    let eta = log_deterministic_equivalent_eta(p, spec)?.exp();
    if !(eta.is_finite() && eta > 0.0) {
        return Err(numeric(format!("eta = {eta} is not a positive finite number")));
    }
    Ok(eta)
}

/// Expected utility of terminal wealth minus `theta` times the integral
/// disparity against the expert's rational decision.
pub fn objective(p: &Trajectory, spec: &ProblemSpec) -> Result<f64> {
    if !(spec.theta >= 0.0) {
        return Err(domain("imitation coefficient must be >= 0"));
    }
    let eta = deterministic_equivalent_eta(p, spec)?;
    let utility = -eta / spec.retail.alpha;
    if spec.theta == 0.0 {
        return Ok(utility);
    }
    let expert = expert_rational_on(spec, p);
    Ok(utility - spec.theta * integral_disparity(p, &expert)?)
}
