//! Limiting decisions as the imitation coefficient grows without bound,
//! the crossing time of the boundary-rate limit, and pointwise checks of the
//! orderings between a decision and the two rational decisions.

use serde::{Deserialize, Serialize};

use crate::error::{contract, domain, Error, Result};
use crate::market::{BoundaryCase, ProblemSpec, Trajectory};

/// Margin used for strict inequalities and equality ties in the ordering checks.
pub const ORDERING_MARGIN: f64 = 1e-12;
/// Bisection tolerance for finite-theta crossing times, in years.
pub const CROSSING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticDecision {
    pub boundary_case: BoundaryCase,
    /// Constant added to the expert decision.
    pub offset: f64,
    /// Linear growth rate added to the expert decision; zero for the rate-matched case.
    pub slope: f64,
}

impl AsymptoticDecision {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        spec.market.validate()?;
        let m = &spec.market;
        let (t_end, r) = (spec.horizon, m.r);
        if !(t_end > 0.0) {
            return Err(domain("horizon must be positive"));
        }
        let c = risk_gap_coefficient(spec);
        Ok(match spec.boundary_case {
            BoundaryCase::Case1 => AsymptoticDecision {
                boundary_case: BoundaryCase::Case1,
                offset: c * (-r * t_end).exp(),
                slope: c * (-(-r * t_end).exp_m1()) / t_end,
            },
            BoundaryCase::Case2 => {
                if !(r > 0.0) {
                    return Err(domain("the rate-matched limit requires r > 0"));
                }
                // (e^{rT} - 1) / (e^{2rT} - 1) = 1 / (e^{rT} + 1)
                AsymptoticDecision {
                    boundary_case: BoundaryCase::Case2,
                    offset: 2.0 * c / ((r * t_end).exp() + 1.0),
                    slope: 0.0,
                }
            }
        })
    }

    pub fn eval(&self, spec: &ProblemSpec, t: f64) -> Result<f64> {
        check_time(spec, t)?;
        Ok(spec.expert_rational(t) + self.slope * t + self.offset)
    }

    pub fn sample(&self, spec: &ProblemSpec, n: usize) -> Result<Trajectory> {
        Trajectory::from_fn(spec.horizon, n, |t| spec.expert_rational(t) + self.slope * t + self.offset)
    }
}

/// `v (1/alpha1 - 1/alpha2) / sigma^2`.
fn risk_gap_coefficient(spec: &ProblemSpec) -> f64 {
    let m = &spec.market;
    m.v * (1.0 / spec.retail.alpha - 1.0 / spec.expert_alpha) / (m.sigma * m.sigma)
}

fn check_time(spec: &ProblemSpec, t: f64) -> Result<()> {
    if !(t >= 0.0 && t <= spec.horizon) {
        return Err(domain(format!("t = {t} outside [0, {}]", spec.horizon)));
    }
    Ok(())
}

/// Limiting decision with fixed endpoints.
pub fn asymptotic_case1(spec: &ProblemSpec, t: f64) -> Result<f64> {
    let spec = ProblemSpec { boundary_case: BoundaryCase::Case1, ..*spec };
    AsymptoticDecision::new(&spec)?.eval(&spec, t)
}

/// Limiting decision with matched endpoint rates.
pub fn asymptotic_case2(spec: &ProblemSpec, t: f64) -> Result<f64> {
    let spec = ProblemSpec { boundary_case: BoundaryCase::Case2, ..*spec };
    AsymptoticDecision::new(&spec)?.eval(&spec, t)
}

pub fn asymptotic_decision(spec: &ProblemSpec, t: f64) -> Result<f64> {
    AsymptoticDecision::new(spec)?.eval(spec, t)
}

/// Time at which the rate-matched limiting decision meets the retail
/// rational decision. Depends only on `r` and `T`.
pub fn crossing_time(spec: &ProblemSpec) -> Result<f64> {
    let (r, t_end) = (spec.market.r, spec.horizon);
    if !(r > 0.0 && t_end > 0.0) {
        return Err(domain("crossing time requires r > 0 and T > 0"));
    }
    // ln((e^{rT} - 1) / (e^{2rT} - 1)) = -ln(e^{rT} + 1)
    let tau = t_end - (r * t_end).exp().ln_1p() / r + std::f64::consts::LN_2 / r;
    if !(tau >= 0.0 && tau <= t_end) {
        return Err(Error::Invariant(format!("crossing time {tau} outside [0, {t_end}]")));
    }
    Ok(tau)
}

/// All sign changes of `f` on `grid`, each refined by bisection to
/// [`CROSSING_TOLERANCE`]. Exact zeros at grid nodes are reported as-is.
pub fn sign_changes<F>(grid: &[f64], f: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut roots = Vec::new();
    let mut prev = f(grid[0])?;
    if prev == 0.0 {
        roots.push(grid[0]);
    }
    for w in grid.windows(2) {
        let (mut a, mut b) = (w[0], w[1]);
        let fb = f(b)?;
        if fb == 0.0 {
            roots.push(b);
        } else if prev != 0.0 && prev.signum() != fb.signum() {
            let mut fa = prev;
            while b - a > CROSSING_TOLERANCE {
                let m = 0.5 * (a + b);
                let fm = f(m)?;
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fm.signum() == fa.signum() {
                    a = m;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            roots.push(0.5 * (a + b));
        }
        prev = fb;
    }
    Ok(roots)
}

/// Crossing times of a finite-theta decision `p` with the retail rational
/// decision, located on `grid` and refined by bisection.
pub fn finite_crossing_times<F>(spec: &ProblemSpec, grid: &[f64], p: F) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    sign_changes(grid, |t| Ok(p(t)? - spec.retail_rational(t)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub boundary_case: BoundaryCase,
    /// Time splitting the two ordering regimes (rate-matched case only).
    pub split: Option<f64>,
    pub checked: usize,
    pub violations: usize,
    /// Smallest slack over all inequalities; negative when violated.
    pub worst_margin: f64,
    pub worst_time: f64,
}

impl OrderingReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Pointwise check of the predicted orderings between `p`, the retail
/// rational decision and the expert rational decision.
///
/// With `alpha1 < alpha2` the prediction is `p >= retail > expert` (fixed
/// endpoints, and before `split` when rates are matched) and
/// `retail >= p > expert` after `split`. The inequalities flip when
/// `alpha1 > alpha2`, and collapse to equalities when they coincide. For
/// the rate-matched case `split` defaults to [`crossing_time`].
pub fn ordering_check(p: &Trajectory, spec: &ProblemSpec, split: Option<f64>) -> Result<OrderingReport> {
    if (p.horizon() - spec.horizon).abs() > 1e-9 * spec.horizon {
        return Err(contract("trajectory does not span the horizon"));
    }
    let split = match spec.boundary_case {
        BoundaryCase::Case1 => None,
        BoundaryCase::Case2 => Some(match split {
            Some(s) => s,
            None => crossing_time(spec)?,
        }),
    };
    let sign = (spec.expert_alpha - spec.retail.alpha).signum();
    let equal_risk = spec.expert_alpha == spec.retail.alpha;
    let mut report = OrderingReport {
        boundary_case: spec.boundary_case,
        split,
        checked: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
        worst_time: f64::NAN,
    };
    let mut record = |t: f64, margin: f64, ok: bool| {
        report.checked += 1;
        if !ok {
            report.violations += 1;
        }
        if margin < report.worst_margin {
            report.worst_margin = margin;
            report.worst_time = t;
        }
    };
    for (&t, &v) in p.grid().iter().zip(p.values()) {
        let retail = spec.retail_rational(t);
        let expert = spec.expert_rational(t);
        if equal_risk {
            for gap in [v - retail, retail - expert] {
                let margin = ORDERING_MARGIN - gap.abs();
                record(t, margin, margin >= 0.0);
            }
            continue;
        }
        let before = split.is_none_or(|s| t <= s);
        let after = split.is_some_and(|s| t >= s);
        // Oriented so that all slacks are nonnegative when the prediction holds.
        if before {
            let weak = sign * (v - retail);
            record(t, weak, weak >= -ORDERING_MARGIN);
        }
        if after {
            let weak = sign * (retail - v);
            record(t, weak, weak >= -ORDERING_MARGIN);
        }
        if !after {
            let strict = sign * (retail - expert);
            record(t, strict, strict > ORDERING_MARGIN);
        } else {
            let strict = sign * (v - expert);
            record(t, strict, strict > ORDERING_MARGIN);
            if before {
                let s2 = sign * (retail - expert);
                record(t, s2, s2 > ORDERING_MARGIN);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(case: BoundaryCase) -> ProblemSpec {
        ProblemSpec::reference(1.0, case)
    }

    #[test]
    fn case1_reference_values() {
        let s = spec(BoundaryCase::Case1);
        assert!((asymptotic_case1(&s, 0.0).unwrap() - 0.702432265933975909).abs() < 1e-13);
        assert!((asymptotic_case1(&s, 25.0).unwrap() - 2.427890353260593428).abs() < 1e-13);
        assert!((asymptotic_case1(&s, 50.0).unwrap() - 5.190311418685121107).abs() < 1e-13);
    }

    #[test]
    fn case1_matches_retail_rational_at_both_ends() {
        for (a1, a2) in [(0.2, 0.4), (0.4, 0.2), (0.05, 3.0)] {
            let s = spec(BoundaryCase::Case1).with_alphas(a1, a2);
            for t in [0.0, 50.0] {
                let d = asymptotic_case1(&s, t).unwrap() - s.retail_rational(t);
                assert!(d.abs() < 1e-12 * s.retail_rational(t).abs().max(1.0), "{a1} {a2} {t}: {d}");
            }
        }
    }

    #[test]
    fn case2_reference_values() {
        let s = spec(BoundaryCase::Case2);
        let a = AsymptoticDecision::new(&s).unwrap();
        assert_eq!(a.slope, 0.0);
        assert!((a.offset - 0.618700287312028837).abs() < 1e-13);
        assert!((asymptotic_case2(&s, 0.0).unwrap() - 0.969916420279016792).abs() < 1e-13);
    }

    #[test]
    fn case2_is_a_pure_shift_of_the_expert() {
        let s = spec(BoundaryCase::Case2);
        let p = AsymptoticDecision::new(&s).unwrap().sample(&s, 501).unwrap();
        let e = crate::market::expert_rational_on(&s, &p);
        assert!(crate::market::integral_disparity(&p, &e).unwrap().abs() < 1e-24);
        let same = s.with_alphas(0.3, 0.3);
        for t in [0.0, 7.0, 50.0] {
            assert_eq!(asymptotic_case2(&same, t).unwrap(), same.expert_rational(t));
        }
    }

    #[test]
    fn signs_follow_risk_gap() {
        for case in [BoundaryCase::Case1, BoundaryCase::Case2] {
            let lo = AsymptoticDecision::new(&spec(case)).unwrap();
            let hi = AsymptoticDecision::new(&spec(case).with_alphas(0.4, 0.2)).unwrap();
            assert!(lo.offset > 0.0 && hi.offset < 0.0);
            if case == BoundaryCase::Case1 {
                assert!(lo.slope > 0.0 && hi.slope < 0.0);
            }
        }
    }

    #[test]
    fn crossing_time_reference() {
        let s = spec(BoundaryCase::Case2);
        let tau = crossing_time(&s).unwrap();
        assert!((tau - 14.155479237924320324).abs() < 1e-12);
        let a = asymptotic_case2(&s, tau).unwrap();
        assert!((a - 1.237400574624057674).abs() < 1e-12);
        assert!((a - s.retail_rational(tau)).abs() < 1e-9 * a);
        let other = ProblemSpec { market: crate::market::MarketParams { v: 0.07, sigma: 0.3, ..s.market }, ..s }
            .with_alphas(1.0, 0.1);
        assert_eq!(crossing_time(&other).unwrap(), tau);
    }

    #[test]
    fn asymptotic_orderings_hold() {
        for case in [BoundaryCase::Case1, BoundaryCase::Case2] {
            for (a1, a2) in [(0.2, 0.4), (0.4, 0.2), (0.3, 0.3)] {
                let s = spec(case).with_alphas(a1, a2);
                let p = AsymptoticDecision::new(&s).unwrap().sample(&s, 2001).unwrap();
                let rep = ordering_check(&p, &s, None).unwrap();
                assert!(rep.holds(), "{case} {a1} {a2}: {rep:?}");
                assert!(rep.checked >= 2 * 2001);
            }
        }
    }

    #[test]
    fn ordering_violation_is_detected() {
        let s = spec(BoundaryCase::Case1);
        let p = Trajectory::from_fn(50.0, 101, |t| s.expert_rational(t)).unwrap();
        let rep = ordering_check(&p, &s, None).unwrap();
        assert!(rep.violations > 0);
        assert!(rep.worst_margin < 0.0);
        // Reversed orderings predicted for the rate-matched case after the split.
        let s2 = spec(BoundaryCase::Case2);
        let p2 = AsymptoticDecision::new(&s2).unwrap().sample(&s2, 101).unwrap();
        assert!(!ordering_check(&p2, &s2, Some(40.0)).unwrap().holds());
    }

    #[test]
    fn sign_changes_finds_all_roots() {
        let grid = Trajectory::uniform_grid(10.0, 101);
        let roots = sign_changes(&grid, |t| Ok((t - 2.345) * (t - 7.5))).unwrap();
        assert_eq!(roots.len(), 2);
        assert!((roots[0] - 2.345).abs() < CROSSING_TOLERANCE);
        assert!((roots[1] - 7.5).abs() < CROSSING_TOLERANCE);
    }

    #[test]
    fn domain_errors() {
        let s = spec(BoundaryCase::Case1);
        assert!(asymptotic_case1(&s, -0.1).is_err());
        assert!(asymptotic_case2(&s, 50.1).is_err());
    }
}
