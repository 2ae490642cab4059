//! Real branches of the Lambert W function, the inverse of `w ↦ w·eʷ`.
//!
//! Both branches start from an asymptotic or branch-point series guess and
//! refine with Halley steps kept inside a bracket on which `w·eʷ − x` is
//! monotone. A step that leaves the bracket is replaced by bisection.

use crate::error::{domain, Result};

/// `-1/e`, the common endpoint of both branches.
pub const BRANCH_POINT: f64 = -0.367_879_441_171_442_3;
/// Slack below [`BRANCH_POINT`] still treated as the branch point.
const BRANCH_SLACK: f64 = 1e-15;
const MAX_ITER: usize = 200;

fn residual_tolerance(x: f64) -> f64 {
    // a little inside the 1e-12 contract so the final evaluation has headroom
    1e-14 * x.abs().max(1.0)
}

/// Principal branch `W₀`, defined for `x ≥ -1/e`, with `W₀(x) ≥ -1`.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < BRANCH_POINT - BRANCH_SLACK {
        return Err(domain(format!("W0 is undefined below -1/e, got {x}")));
    }
    if x <= BRANCH_POINT {
        return Ok(-1.0);
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let (lo, hi) = if x < 0.0 {
        (-1.0, 0.0)
    } else if x <= std::f64::consts::E {
        (0.0, 1.0)
    } else {
        // W₀(x) ≤ ln x for x ≥ e
        (1.0, x.ln())
    };
    let guess = if x < -0.25 {
        branch_series(x, 1.0)
    } else if x.abs() <= 0.5 {
        x * (1.0 - x * (1.0 - 1.5 * x))
    } else if x < 3.0 {
        0.5 * x.ln_1p() + 0.2
    } else {
        let l1 = x.ln();
        let l2 = l1.ln();
        l1 - l2 + l2 / l1
    };
    Ok(refine(x, guess, lo, hi))
}

/// Lower branch `W₋₁`, defined for `-1/e ≤ x < 0`, with `W₋₁(x) ≤ -1`.
pub fn lambert_wm1(x: f64) -> Result<f64> {
    if !(BRANCH_POINT - BRANCH_SLACK..0.0).contains(&x) {
        return Err(domain(format!("W-1 is defined on [-1/e, 0), got {x}")));
    }
    if x <= BRANCH_POINT {
        return Ok(-1.0);
    }
    // with x = -exp(-z-1): -1 - sqrt(2z) - z ≤ W₋₁(x) ≤ -1 - sqrt(2z) - 2z/3
    let z = -(-x).ln() - 1.0;
    let lo = -1.0 - (2.0 * z).sqrt() - z - 1.0;
    let hi = -1.0;
    let guess = if x < -0.25 {
        branch_series(x, -1.0)
    } else {
        let l1 = (-x).ln();
        let l2 = (-l1).ln();
        l1 - l2 + l2 / l1
    };
    Ok(refine(x, guess.clamp(lo, hi), lo, hi))
}

/// Series about the branch point in `p = ±sqrt(2(e·x + 1))`.
fn branch_series(x: f64, sign: f64) -> f64 {
    let p = sign * (2.0 * (std::f64::consts::E * x + 1.0)).max(0.0).sqrt();
    -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
}

/// Halley iteration for `w·eʷ = x` on `[lo, hi]`, falling back to bisection.
fn refine(x: f64, guess: f64, mut lo: f64, mut hi: f64) -> f64 {
    let f = |w: f64| w * w.exp() - x;
    // orientation: f is increasing on the W₀ bracket, decreasing on W₋₁'s
    let increasing = lo >= -1.0;
    let tol = residual_tolerance(x);
    let mut w = if guess.is_finite() && guess > lo && guess < hi { guess } else { 0.5 * (lo + hi) };
    let mut best = (f64::INFINITY, w);
    for _ in 0..MAX_ITER {
        let fw = f(w);
        if fw.abs() < best.0 {
            best = (fw.abs(), w);
        }
        if fw.abs() <= tol || fw == 0.0 {
            return w;
        }
        if (fw > 0.0) == increasing {
            hi = w;
        } else {
            lo = w;
        }
        let ew = w.exp();
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * fw / (2.0 * wp1);
        let mut next = w - fw / denom;
        if !(next.is_finite() && next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == w || hi - lo <= f64::EPSILON * w.abs().max(1.0) {
            break;
        }
        w = next;
    }
    best.1
}
