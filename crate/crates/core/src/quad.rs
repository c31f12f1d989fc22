//! Quadrature helpers: adaptive Simpson for smooth integrands and composite
//! rules over uniformly sampled data.

use crate::error::{numeric, Result};

const MAX_DEPTH: u32 = 48;

/// Oriented integral of `f` over `[a, b]` by adaptive Simpson bisection with
/// Richardson correction. Panels are accepted when the local error estimate
/// is below `max(abs_tol, rel_tol * |I|)`, split between halves on descent.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if a == b {
        return Ok(0.0);
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let fa = f(lo);
    let fb = f(hi);
    let m = 0.5 * (lo + hi);
    let fm = f(m);
    let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
    if !whole.is_finite() {
        return Err(numeric(format!("non-finite integrand on [{lo}, {hi}]")));
    }
    let tol = abs_tol.max(rel_tol * whole.abs());
    let value = recurse(&f, lo, hi, fa, fm, fb, whole, tol, MAX_DEPTH)?;
    Ok(sign * value)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if !delta.is_finite() {
        return Err(numeric(format!("non-finite integrand on [{a}, {b}]")));
    }
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    Ok(recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?)
}

/// Composite Simpson weights for `n` uniformly spaced samples with step `h`.
/// An even sample count closes with Simpson's 3/8 rule on the last three
/// intervals. Two samples fall back to the trapezoid rule.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => return w,
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
            return w;
        }
        3 => {
            w[0] = h / 3.0;
            w[1] = 4.0 * h / 3.0;
            w[2] = h / 3.0;
            return w;
        }
        _ => {}
    }
    // Number of points covered by plain Simpson (odd).
    let simpson_points = if n % 2 == 1 { n } else { n - 3 };
    for i in 0..simpson_points - 1 {
        if i % 2 == 0 {
            w[i] += h / 3.0;
            w[i + 1] += 4.0 * h / 3.0;
            w[i + 2] += h / 3.0;
        }
    }
    if n.is_multiple_of(2) {
        let s = n - 4;
        let c = 3.0 * h / 8.0;
        w[s] += c;
        w[s + 1] += 3.0 * c;
        w[s + 2] += 3.0 * c;
        w[s + 3] += c;
    }
    w
}

pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    if n == 1 {
        w[0] = 0.0;
    }
    w
}
