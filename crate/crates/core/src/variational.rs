//! General solution of the imitation problem and its boundary parameters.
//!
//! With `u = zeta * exp(-r t)` the Euler-Lagrange equation becomes the
//! inhomogeneous modified Bessel equation of order zero
//!
//! ```text
//! u^2 P'' + u P' - u^2 P = u * g(u),
//! g(y) = zeta v e^{-rT} / (alpha2 sigma^2 y^2) - eta v e^{rT} / (zeta r^2 theta)
//! ```
//!
//! whose general solution is
//! `P = gamma1 I0(u) + gamma2 K0(u) + I0(u) Kf(u) - K0(u) If(u)` with the
//! particular integrals `If(x) = int_1^x I0 g`, `Kf(x) = int_1^x K0 g`.
//!
//! Two evaluation routes live here. [`general_solution_eval`] evaluates that
//! formula literally from `(gamma1, gamma2)`, which is exact algebra but
//! cancels terms of size `exp(zeta - xi)` against each other.
//! [`AnalyticSolution`] evaluates the same function through the bounded
//! Green's kernel on `[xi, zeta]` with homogeneous parts normalised at the
//! endpoints, so nothing exceeds O(1) however large `zeta` gets. The solver
//! uses the second route; the first is kept for the closed-form `gamma`
//! expressions and as a cross-check.

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, numeric, Error, Result};
use crate::market::{BoundaryCase, ProblemSpec, Trajectory};
use crate::quad::adaptive_simpson;
use crate::special::{i0_scaled, i1_scaled, k0_scaled, k1_scaled};

/// Absolute tolerance for the particular integrals.
pub const PARTICULAR_ABS_TOL: f64 = 1e-10;
/// Relative tolerance used alongside [`PARTICULAR_ABS_TOL`].
pub const PARTICULAR_REL_TOL: f64 = 1e-13;
const PANEL_ABS_TOL: f64 = 1e-15;
const SINGULAR_GUARD: f64 = 1e-300;
const MAX_EXPONENT: f64 = 709.0;

/// The two coefficients of the forcing `g(y) = expert / y^2 - utility`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Forcing {
    pub expert: f64,
    pub utility: f64,
}

impl Forcing {
    pub fn new(zeta: f64, eta: f64, spec: &ProblemSpec) -> Result<Self> {
        if !(spec.theta > 0.0) {
            return Err(contract("the forcing term is undefined for theta = 0"));
        }
        if !(zeta > 0.0 && zeta.is_finite()) || !(eta > 0.0 && eta.is_finite()) {
            return Err(domain(format!("integral constants must be positive, got zeta = {zeta}, eta = {eta}")));
        }
        let m = &spec.market;
        let s2 = m.sigma * m.sigma;
        let rt = m.r * spec.horizon;
        Ok(Forcing {
            expert: zeta * m.v * (-rt).exp() / (spec.expert_alpha * s2),
            utility: eta * m.v * rt.exp() / (zeta * m.r * m.r * spec.theta),
        })
    }

    #[inline]
    pub fn at(&self, y: f64) -> f64 {
        self.expert / (y * y) - self.utility
    }
}

/// Solved constants that pin down one trajectory of the general solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolutionParams {
    pub zeta: f64,
    pub eta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub boundary_case: BoundaryCase,
}

impl SolutionParams {
    pub fn xi(&self, spec: &ProblemSpec) -> f64 {
        self.zeta * (-spec.market.r * spec.horizon).exp()
    }
}

/// Scaled particular integrals `(exp(-x) If(x), Kf(x))`. `Kf` never needs
/// scaling: `K0(y) g(y)` is integrable at infinity.
pub fn scaled_particular_integrals(x: f64, forcing: &Forcing) -> Result<(f64, f64)> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(domain(format!("particular integrals need x > 0, got {x}")));
    }
    let i_scaled = adaptive_simpson(
        |y| i0_scaled(y) * (y - x).exp() * forcing.at(y),
        1.0,
        x,
        PARTICULAR_ABS_TOL * (-x).exp().min(1.0),
        PARTICULAR_REL_TOL,
    )?;
    let k = adaptive_simpson(
        |y| k0_scaled(y) * (-y).exp() * forcing.at(y),
        1.0,
        x,
        PARTICULAR_ABS_TOL,
        PARTICULAR_REL_TOL,
    )?;
    Ok((i_scaled, k))
}

/// Oriented particular integrals `(If(x), Kf(x))` for the given constants.
pub fn particular_integrals(x: f64, zeta: f64, eta: f64, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let forcing = Forcing::new(zeta, eta, spec)?;
    particular_integrals_with(x, &forcing)
}

pub fn particular_integrals_with(x: f64, forcing: &Forcing) -> Result<(f64, f64)> {
    let (i_scaled, k) = scaled_particular_integrals(x, forcing)?;
    if x > MAX_EXPONENT {
        return Err(numeric(format!("If({x}) overflows: scale exponent {x} > {MAX_EXPONENT}")));
    }
    Ok((i_scaled * x.exp(), k))
}

/// Bessel and particular-integral values at `zeta` (superscript 0) and
/// `xi = zeta e^{-rT}` (superscript 1); subscripts give the Bessel order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCoefficients {
    pub iota0_0: f64,
    pub iota0_1: f64,
    pub iota1_0: f64,
    pub iota1_1: f64,
    pub kappa0_0: f64,
    pub kappa0_1: f64,
    pub kappa1_0: f64,
    pub kappa1_1: f64,
    pub frak_i_0: f64,
    pub frak_i_1: f64,
    pub frak_k_0: f64,
    pub frak_k_1: f64,
}

impl BoundaryCoefficients {
    pub fn evaluate(zeta: f64, eta: f64, spec: &ProblemSpec) -> Result<Self> {
        let forcing = Forcing::new(zeta, eta, spec)?;
        let xi = zeta * (-spec.market.r * spec.horizon).exp();
        if zeta > MAX_EXPONENT {
            return Err(numeric(format!(
                "closed-form boundary coefficients overflow: I0({zeta}) needs exponent {zeta}"
            )));
        }
        let (fi0, fk0) = particular_integrals_with(zeta, &forcing)?;
        let (fi1, fk1) = particular_integrals_with(xi, &forcing)?;
        Ok(BoundaryCoefficients {
            iota0_0: i0_scaled(zeta) * zeta.exp(),
            iota0_1: i0_scaled(xi) * xi.exp(),
            iota1_0: i1_scaled(zeta) * zeta.exp(),
            iota1_1: i1_scaled(xi) * xi.exp(),
            kappa0_0: k0_scaled(zeta) * (-zeta).exp(),
            kappa0_1: k0_scaled(xi) * (-xi).exp(),
            kappa1_0: k1_scaled(zeta) * (-zeta).exp(),
            kappa1_1: k1_scaled(xi) * (-xi).exp(),
            frak_i_0: fi0,
            frak_i_1: fi1,
            frak_k_0: fk0,
            frak_k_1: fk1,
        })
    }

    pub fn tilde_iota(&self) -> f64 {
        self.frak_i_1 - self.frak_i_0
    }

    pub fn tilde_kappa(&self) -> f64 {
        self.frak_k_1 - self.frak_k_0
    }
}

fn guard(den: f64, what: &str) -> Result<f64> {
    if !den.is_finite() || den.abs() < SINGULAR_GUARD {
        return Err(Error::Singular(format!("{what} denominator is {den}")));
    }
    Ok(den)
}

/// Closed-form `(gamma1, gamma2)` for fixed endpoint holdings. With the
/// default endpoints `(P̄1(0), P̄1(T))` this is exactly the published
/// expression; other endpoints enter through the same linear system.
pub fn gamma_case1(coeffs: &BoundaryCoefficients, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let c = coeffs;
    let (p0, p_end) = spec.endpoints();
    let den = guard(c.iota0_0 * c.kappa0_1 - c.iota0_1 * c.kappa0_0, "case 1")?;
    let cross = c.kappa0_1 * c.tilde_iota() - c.iota0_1 * c.tilde_kappa();
    let gamma1 = -c.frak_k_0 - (c.kappa0_0 * cross + (c.kappa0_0 * p_end - c.kappa0_1 * p0)) / den;
    let gamma2 = c.frak_i_0 + (c.iota0_0 * cross + (c.iota0_0 * p_end - c.iota0_1 * p0)) / den;
    Ok((gamma1, gamma2))
}

/// Closed-form `(gamma1, gamma2)` when the endpoint rates match the expert's.
pub fn gamma_case2(coeffs: &BoundaryCoefficients, zeta: f64, spec: &ProblemSpec) -> Result<(f64, f64)> {
    if !(spec.theta > 0.0) {
        return Err(contract("case 2 boundary parameters are undefined for theta = 0"));
    }
    let c = coeffs;
    let m = &spec.market;
    let rt = m.r * spec.horizon;
    let den = guard(c.iota1_0 * c.kappa1_1 - c.iota1_1 * c.kappa1_0, "case 2")?;
    let cross = c.kappa1_1 * c.tilde_iota() + c.iota1_1 * c.tilde_kappa();
    let scale = m.v / (zeta * spec.expert_alpha * m.sigma * m.sigma);
    let gamma1 = -c.frak_k_0
        + (c.kappa1_0 * cross + (c.kappa1_0 * rt.exp() - c.kappa1_1 * (-rt).exp()) * scale) / den;
    let gamma2 = c.frak_i_0
        + (c.iota1_0 * cross + (c.iota1_0 * rt.exp() - c.iota1_1 * (-rt).exp()) * scale) / den;
    Ok((gamma1, gamma2))
}

/// Closed-form `(gamma1, gamma2)` for the problem's boundary case.
pub fn closed_form_gammas(zeta: f64, eta: f64, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let coeffs = BoundaryCoefficients::evaluate(zeta, eta, spec)?;
    match spec.boundary_case {
        BoundaryCase::Case1 => gamma_case1(&coeffs, spec),
        BoundaryCase::Case2 => gamma_case2(&coeffs, zeta, spec),
    }
}

/// `a * exp(e)` computed without overflowing intermediates.
fn scaled_product(a: f64, e: f64) -> Result<f64> {
    if a == 0.0 {
        return Ok(0.0);
    }
    let log = a.abs().ln() + e;
    if log > MAX_EXPONENT {
        return Err(numeric(format!("term overflows: log magnitude {log:.3} (scale exponent {e:.3})")));
    }
    Ok(a.signum() * log.exp())
}

fn check_t(t: f64, spec: &ProblemSpec) -> Result<()> {
    if !(t.is_finite() && (0.0..=spec.horizon).contains(&t)) {
        return Err(domain(format!("time {t} outside [0, {}]", spec.horizon)));
    }
    Ok(())
}

/// Literal evaluation of the general solution from `(gamma1, gamma2)`.
pub fn general_solution_eval(t: f64, params: &SolutionParams, spec: &ProblemSpec) -> Result<f64> {
    check_t(t, spec)?;
    let forcing = Forcing::new(params.zeta, params.eta, spec)?;
    let u = params.zeta * (-spec.market.r * t).exp();
    let (fi_scaled, fk) = scaled_particular_integrals(u, &forcing)?;
    let (i0s, k0s) = (i0_scaled(u), k0_scaled(u));
    // gamma1 I0 + I0 Kf  and  gamma2 K0 - K0 If, with If = e^u fi_scaled.
    let growing = scaled_product(i0s * params.gamma1, u)? + scaled_product(i0s * fk, u)?;
    let decaying = scaled_product(k0s * params.gamma2, -u)? - k0s * fi_scaled;
    Ok(growing + decaying)
}

/// Time derivative of [`general_solution_eval`]: `-r u dP/du` with
/// `dP/du = gamma1 I1 - gamma2 K1 + I1 Kf + K1 If`.
pub fn general_solution_rate(t: f64, params: &SolutionParams, spec: &ProblemSpec) -> Result<f64> {
    check_t(t, spec)?;
    let forcing = Forcing::new(params.zeta, params.eta, spec)?;
    let u = params.zeta * (-spec.market.r * t).exp();
    let (fi_scaled, fk) = scaled_particular_integrals(u, &forcing)?;
    let (i1s, k1s) = (i1_scaled(u), k1_scaled(u));
    let dp_du = scaled_product(i1s * params.gamma1, u)? + scaled_product(i1s * fk, u)?
        - scaled_product(k1s * params.gamma2, -u)?
        + k1s * fi_scaled;
    Ok(-spec.market.r * u * dp_du)
}

/// Maximum interior residual of the Euler-Lagrange equation
/// `theta (p'' - P̄2'') + eta v e^{r(T-t)} - eta alpha1 sigma^2 e^{2r(T-t)} p = 0`
/// with `p''` from central second differences.
pub fn el_residual(p: &Trajectory, eta: f64, spec: &ProblemSpec) -> Result<f64> {
    if p.len() < 3 {
        return Err(contract("residual needs at least 3 points"));
    }
    let m = &spec.market;
    let g = p.grid();
    let x = p.values();
    let mut worst: f64 = 0.0;
    for i in 1..p.len() - 1 {
        let (hl, hr) = (g[i] - g[i - 1], g[i + 1] - g[i]);
        let second = 2.0 * (hl * x[i + 1] - (hl + hr) * x[i] + hr * x[i - 1]) / (hl * hr * (hl + hr));
        let expert_second = m.r * m.r * spec.expert_rational(g[i]);
        let e = (m.r * (spec.horizon - g[i])).exp();
        let res = spec.theta * (second - expert_second) + eta * m.v * e
            - eta * spec.retail.alpha * m.sigma * m.sigma * e * e * x[i];
        worst = worst.max(res.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy)]
struct Node {
    u: f64,
    i0s: f64,
    k0s: f64,
    /// `exp(-u) * int_xi^u I0(y) g(y) dy`
    lower: f64,
    /// `exp(u) * int_u^zeta K0(y) g(y) dy`
    upper: f64,
}

/// One trajectory of the general solution for given `(zeta, eta)`, with the
/// homogeneous coefficients chosen to satisfy the boundary case.
///
/// Internally `P(u) = A I0(u)/I0(zeta) + B K0(u)/K0(xi) + G(u)` where
/// `G(u) = -K0(u) int_xi^u I0 g - I0(u) int_u^zeta K0 g` is bounded on
/// `[xi, zeta]`. The kernel integrals are accumulated panel by panel on a
/// uniform time grid and reused for off-grid evaluation.
#[derive(Debug, Clone)]
pub struct AnalyticSolution {
    spec: ProblemSpec,
    zeta: f64,
    eta: f64,
    xi: f64,
    forcing: Forcing,
    step: f64,
    nodes: Vec<Node>,
    coef_a: f64,
    coef_b: f64,
}

impl AnalyticSolution {
    pub fn build(spec: &ProblemSpec, zeta: f64, eta: f64, grid_points: usize) -> Result<Self> {
        spec.validate()?;
        if grid_points < 3 {
            return Err(contract("solver grid needs at least 3 points"));
        }
        let forcing = Forcing::new(zeta, eta, spec)?;
        let r = spec.market.r;
        let grid = Trajectory::uniform_grid(spec.horizon, grid_points);
        let step = spec.horizon / (grid_points - 1) as f64;
        let mut nodes: Vec<Node> = grid
            .iter()
            .map(|&t| {
                let u = if t == spec.horizon { zeta * (-r * spec.horizon).exp() } else { zeta * (-r * t).exp() };
                Node { u, i0s: i0_scaled(u), k0s: k0_scaled(u), lower: 0.0, upper: 0.0 }
            })
            .collect();
        let xi = nodes[grid_points - 1].u;
        // u decreases along the grid: lower accumulates from the end, upper from the start.
        for j in (0..grid_points - 1).rev() {
            let (hi, lo) = (nodes[j].u, nodes[j + 1].u);
            let panel = lower_panel(&forcing, lo, hi, hi)?;
            nodes[j].lower = (lo - hi).exp() * nodes[j + 1].lower + panel;
        }
        for j in 0..grid_points - 1 {
            let (hi, lo) = (nodes[j].u, nodes[j + 1].u);
            let panel = upper_panel(&forcing, lo, hi, lo)?;
            nodes[j + 1].upper = (lo - hi).exp() * nodes[j].upper + panel;
        }
        let mut sol = AnalyticSolution {
            spec: *spec,
            zeta,
            eta,
            xi,
            forcing,
            step,
            nodes,
            coef_a: 0.0,
            coef_b: 0.0,
        };
        sol.fit_boundary()?;
        Ok(sol)
    }

    fn fit_boundary(&mut self) -> Result<()> {
        let (zeta, xi) = (self.zeta, self.xi);
        let first = self.nodes[0];
        let last = self.nodes[self.nodes.len() - 1];
        let i0s_zeta = first.i0s;
        let k0s_xi = last.k0s;
        let spread = (xi - zeta).exp();
        let (m11, m12, m21, m22, rhs1, rhs2) = match self.spec.boundary_case {
            BoundaryCase::Case1 => {
                let (p0, p_end) = self.spec.endpoints();
                (
                    1.0,
                    first.k0s / k0s_xi * spread,
                    last.i0s / i0s_zeta * spread,
                    1.0,
                    p0 + first.k0s * first.lower,
                    p_end + last.i0s * last.upper,
                )
            }
            BoundaryCase::Case2 => {
                let r = self.spec.market.r;
                let c0 = -self.spec.expert_rate(0.0) / (r * zeta);
                let c1 = -self.spec.expert_rate(self.spec.horizon) / (r * xi);
                (
                    i1_scaled(zeta) / i0s_zeta,
                    -k1_scaled(zeta) / k0s_xi * spread,
                    i1_scaled(xi) / i0s_zeta * spread,
                    -k1_scaled(xi) / k0s_xi,
                    c0 - k1_scaled(zeta) * first.lower,
                    c1 + i1_scaled(xi) * last.upper,
                )
            }
        };
        let det = m11 * m22 - m12 * m21;
        guard(det, "normalised boundary")?;
        self.coef_a = (rhs1 * m22 - m12 * rhs2) / det;
        self.coef_b = (m11 * rhs2 - m21 * rhs1) / det;
        if !(self.coef_a.is_finite() && self.coef_b.is_finite()) {
            return Err(numeric("boundary coefficients are not finite"));
        }
        Ok(())
    }

    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn grid_points(&self) -> usize {
        self.nodes.len()
    }

    /// Kernel state `(u, lower, upper)` at time `t`.
    fn kernel_at(&self, t: f64) -> Result<(f64, f64, f64)> {
        check_t(t, &self.spec)?;
        let n = self.nodes.len();
        let j = ((t / self.step).floor() as usize).min(n - 2);
        let u = self.zeta * (-self.spec.market.r * t).exp();
        let (hi, lo) = (self.nodes[j].u, self.nodes[j + 1].u);
        let u = u.clamp(lo, hi);
        if u == hi {
            return Ok((u, self.nodes[j].lower, self.nodes[j].upper));
        }
        if u == lo {
            return Ok((u, self.nodes[j + 1].lower, self.nodes[j + 1].upper));
        }
        let lower = (lo - u).exp() * self.nodes[j + 1].lower + lower_panel(&self.forcing, lo, u, u)?;
        let upper = (u - hi).exp() * self.nodes[j].upper + upper_panel(&self.forcing, u, hi, u)?;
        Ok((u, lower, upper))
    }

    fn value_from(&self, u: f64, lower: f64, upper: f64, i0s: f64, k0s: f64) -> f64 {
        let i0s_zeta = self.nodes[0].i0s;
        let k0s_xi = self.nodes[self.nodes.len() - 1].k0s;
        self.coef_a * i0s / i0s_zeta * (u - self.zeta).exp()
            + self.coef_b * k0s / k0s_xi * (self.xi - u).exp()
            - k0s * lower
            - i0s * upper
    }

    /// Optimal holding at time `t`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let (u, lower, upper) = self.kernel_at(t)?;
        Ok(self.value_from(u, lower, upper, i0_scaled(u), k0_scaled(u)))
    }

    /// Decision rate `dP/dt` at time `t`.
    pub fn rate(&self, t: f64) -> Result<f64> {
        let (u, lower, upper) = self.kernel_at(t)?;
        let i0s_zeta = self.nodes[0].i0s;
        let k0s_xi = self.nodes[self.nodes.len() - 1].k0s;
        let dp_du = self.coef_a * i1_scaled(u) / i0s_zeta * (u - self.zeta).exp()
            - self.coef_b * k1_scaled(u) / k0s_xi * (self.xi - u).exp()
            + k1_scaled(u) * lower
            - i1_scaled(u) * upper;
        Ok(-self.spec.market.r * u * dp_du)
    }

    /// The solution on its own construction grid.
    pub fn trajectory(&self) -> Result<Trajectory> {
        let grid = Trajectory::uniform_grid(self.spec.horizon, self.nodes.len());
        let values = self
            .nodes
            .iter()
            .map(|nd| self.value_from(nd.u, nd.lower, nd.upper, nd.i0s, nd.k0s))
            .collect();
        Trajectory::new(grid, values)
    }

    /// The solution resampled on `n` uniform points.
    pub fn sample(&self, n: usize) -> Result<Trajectory> {
        if n == self.nodes.len() {
            return self.trajectory();
        }
        Trajectory::try_from_fn(self.spec.horizon, n, |t| self.eval(t))
    }

    /// `(gamma1, gamma2)` implied by the normalised coefficients:
    /// `gamma1 = A / I0(zeta) - Kf(zeta)`, `gamma2 = B / K0(xi) + If(xi)`.
    pub fn gammas(&self) -> Result<(f64, f64)> {
        let (_, fk_zeta) = scaled_particular_integrals(self.zeta, &self.forcing)?;
        let (fi_xi, _) = particular_integrals_with(self.xi, &self.forcing)?;
        let gamma1 = self.coef_a / self.nodes[0].i0s * (-self.zeta).exp() - fk_zeta;
        let gamma2 = scaled_product(self.coef_b / self.nodes[self.nodes.len() - 1].k0s, self.xi)? + fi_xi;
        Ok((gamma1, gamma2))
    }

    pub fn params(&self) -> Result<SolutionParams> {
        let (gamma1, gamma2) = self.gammas()?;
        Ok(SolutionParams {
            zeta: self.zeta,
            eta: self.eta,
            gamma1,
            gamma2,
            boundary_case: self.spec.boundary_case,
        })
    }
}

/// `exp(-scale) * int_lo^hi I0(y) g(y) dy`, with `scale >= hi`.
fn lower_panel(forcing: &Forcing, lo: f64, hi: f64, scale: f64) -> Result<f64> {
    adaptive_simpson(
        |y| i0_scaled(y) * (y - scale).exp() * forcing.at(y),
        lo,
        hi,
        PANEL_ABS_TOL,
        PARTICULAR_REL_TOL,
    )
}

/// `exp(scale) * int_lo^hi K0(y) g(y) dy`, with `scale <= lo`.
fn upper_panel(forcing: &Forcing, lo: f64, hi: f64, scale: f64) -> Result<f64> {
    adaptive_simpson(
        |y| k0_scaled(y) * (scale - y).exp() * forcing.at(y),
        lo,
        hi,
        PANEL_ABS_TOL,
        PARTICULAR_REL_TOL,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{bessel_i0, bessel_k0};

    fn spec(case: BoundaryCase, theta: f64) -> ProblemSpec {
        ProblemSpec::reference(theta, case)
    }

    /// A consistent-looking `(zeta, eta)` pair for the reference market.
    fn constants(spec: &ProblemSpec) -> (f64, f64) {
        let eta = 0.1;
        let m = &spec.market;
        let zeta = m.sigma * (m.r * spec.horizon).exp() / m.r * (eta * spec.retail.alpha / spec.theta).sqrt();
        (zeta, eta)
    }

    #[test]
    fn particular_integrals_vanish_at_one() {
        let s = spec(BoundaryCase::Case1, 1.0);
        let (fi, fk) = particular_integrals(1.0, 3.0, 0.1, &s).unwrap();
        assert_eq!((fi, fk), (0.0, 0.0));
    }

    #[test]
    fn particular_integrals_match_trapezoid_oracle() {
        // Utility term switched off: g(y) = c / y^2.
        let forcing = Forcing { expert: 0.37, utility: 0.0 };
        for &x in &[0.2, 3.0, 9.0] {
            let (fi, fk) = particular_integrals_with(x, &forcing).unwrap();
            let n = 200_000;
            let h = (x - 1.0) / n as f64;
            let mut ti = 0.0;
            let mut tk = 0.0;
            for k in 0..=n {
                let y = 1.0 + k as f64 * h;
                let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                ti += w * bessel_i0(y).unwrap().natural * 0.37 / (y * y);
                tk += w * bessel_k0(y).unwrap().natural * 0.37 / (y * y);
            }
            ti *= h;
            tk *= h;
            assert!(((fi - ti) / ti).abs() < 1e-8, "If({x}): {fi} vs {ti}");
            assert!(((fk - tk) / tk).abs() < 1e-8, "Kf({x}): {fk} vs {tk}");
            if x > 1.0 {
                assert!(fi > 0.0 && fk > 0.0);
            }
        }
    }

    #[test]
    fn theta_zero_forcing_rejected() {
        let s = spec(BoundaryCase::Case1, 0.0);
        assert!(Forcing::new(1.0, 0.1, &s).is_err());
        assert!(particular_integrals(-1.0, 1.0, 0.1, &spec(BoundaryCase::Case1, 1.0)).is_err());
    }

    #[test]
    fn case1_endpoints_reproduced_by_both_routes() {
        for &theta in &[0.25, 1.0, 16.0] {
            let s = spec(BoundaryCase::Case1, theta);
            let (zeta, eta) = constants(&s);
            let sol = AnalyticSolution::build(&s, zeta, eta, 401).unwrap();
            let p0 = 0.7024322659339759;
            let p_end = 5.190311418685121;
            assert!(((sol.eval(0.0).unwrap() - p0) / p0).abs() < 1e-12);
            assert!(((sol.eval(50.0).unwrap() - p_end) / p_end).abs() < 1e-12);

            let (g1, g2) = closed_form_gammas(zeta, eta, &s).unwrap();
            let params = SolutionParams { zeta, eta, gamma1: g1, gamma2: g2, boundary_case: BoundaryCase::Case1 };
            assert!(((general_solution_eval(0.0, &params, &s).unwrap() - p0) / p0).abs() < 1e-8);
            assert!(((general_solution_eval(50.0, &params, &s).unwrap() - p_end) / p_end).abs() < 1e-8);
        }
    }

    #[test]
    fn closed_form_gammas_match_normalised_route() {
        for case in [BoundaryCase::Case1, BoundaryCase::Case2] {
            for &theta in &[0.25, 4.0] {
                let s = spec(case, theta);
                let (zeta, eta) = constants(&s);
                let sol = AnalyticSolution::build(&s, zeta, eta, 201).unwrap();
                let (a1, a2) = sol.gammas().unwrap();
                let (c1, c2) = closed_form_gammas(zeta, eta, &s).unwrap();
                let scale = a1.abs().max(a2.abs()).max(1.0);
                assert!((a1 - c1).abs() < 1e-8 * scale, "{case:?} gamma1 {a1} vs {c1}");
                assert!((a2 - c2).abs() < 1e-8 * scale, "{case:?} gamma2 {a2} vs {c2}");
                let params = sol.params().unwrap();
                for &t in &[0.0, 3.3, 25.0, 49.0] {
                    let literal = general_solution_eval(t, &params, &s).unwrap();
                    let stable = sol.eval(t).unwrap();
                    assert!((literal - stable).abs() < 1e-8 * stable.abs().max(1.0), "t={t}: {literal} vs {stable}");
                    let lr = general_solution_rate(t, &params, &s).unwrap();
                    let sr = sol.rate(t).unwrap();
                    assert!((lr - sr).abs() < 1e-8 * sr.abs().max(1e-2), "rate t={t}: {lr} vs {sr}");
                }
            }
        }
    }

    #[test]
    fn case2_endpoint_rates() {
        let s = spec(BoundaryCase::Case2, 1.0);
        let (zeta, eta) = constants(&s);
        let sol = AnalyticSolution::build(&s, zeta, eta, 401).unwrap();
        let r0 = sol.rate(0.0).unwrap();
        let r_end = sol.rate(50.0).unwrap();
        assert!(((r0 - 0.01404864531867952) / 0.01404864531867952).abs() < 1e-10);
        assert!(((r_end - 0.1038062283737024) / 0.1038062283737024).abs() < 1e-10);
    }

    #[test]
    fn off_grid_evaluation_matches_grid() {
        let s = spec(BoundaryCase::Case2, 4.0);
        let (zeta, eta) = constants(&s);
        let coarse = AnalyticSolution::build(&s, zeta, eta, 51).unwrap();
        let fine = AnalyticSolution::build(&s, zeta, eta, 2001).unwrap();
        for &t in &[0.37, 12.9, 33.3333, 49.99] {
            let a = coarse.eval(t).unwrap();
            let b = fine.eval(t).unwrap();
            assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn kernel_derivative_has_no_forcing_leakage() {
        // d/du [I0 Kf - K0 If] = I1 Kf + K1 If, checked by central differences.
        let forcing = Forcing { expert: 0.5, utility: 0.2 };
        let pair = |u: f64| {
            let (fi, fk) = particular_integrals_with(u, &forcing).unwrap();
            let i0 = bessel_i0(u).unwrap().natural;
            let k0 = bessel_k0(u).unwrap().natural;
            (i0 * fk - k0 * fi, fi, fk)
        };
        for &u in &[0.4, 2.0, 6.0] {
            let h = 1e-4 * u;
            let fd = (pair(u + h).0 - pair(u - h).0) / (2.0 * h);
            let (_, fi, fk) = pair(u);
            let exact = crate::special::bessel_i1(u).unwrap().natural * fk
                + crate::special::bessel_k1(u).unwrap().natural * fi;
            assert!((fd - exact).abs() < 1e-6 * exact.abs().max(1e-3), "u={u}: {fd} vs {exact}");
        }
    }

    #[test]
    fn large_zeta_stays_bounded() {
        // zeta in the thousands: the literal route overflows, the normalised one does not.
        let s = spec(BoundaryCase::Case1, 1e-6);
        let (zeta, eta) = constants(&s);
        assert!(zeta > 1000.0);
        let sol = AnalyticSolution::build(&s, zeta, eta, 2001).unwrap();
        let traj = sol.trajectory().unwrap();
        assert!(traj.values().iter().all(|v| v.is_finite()));
        assert!(BoundaryCoefficients::evaluate(zeta, eta, &s).is_err());
    }

    #[test]
    fn homogeneous_bessel_residual() {
        // p = I0(zeta e^{-rt}) solves theta p'' = eta alpha1 sigma^2 e^{2r(T-t)} p.
        let s = spec(BoundaryCase::Case1, 2.0);
        let (zeta, eta) = constants(&s);
        let m = s.market;
        let p = Trajectory::from_fn(50.0, 4001, |t| bessel_i0(zeta * (-m.r * t).exp()).unwrap().natural).unwrap();
        let g = p.grid();
        let x = p.values();
        let h = g[1] - g[0];
        let mut worst: f64 = 0.0;
        for i in 1..p.len() - 1 {
            let second = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / (h * h);
            let e = (m.r * (50.0 - g[i])).exp();
            let res = s.theta * second - eta * s.retail.alpha * m.sigma * m.sigma * e * e * x[i];
            worst = worst.max(res.abs());
        }
        assert!(worst < 1e-4 * p.sup_norm(), "{worst}");
    }

    #[test]
    fn rational_decision_is_not_stationary_for_positive_theta() {
        let s = spec(BoundaryCase::Case1, 1.0);
        let p = Trajectory::from_fn(50.0, 401, |t| s.retail_rational(t)).unwrap();
        assert!(el_residual(&p, 0.1, &s).unwrap() > 1e-3);
    }
}
