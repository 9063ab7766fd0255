use super::FiniteMeasure;
use crate::error::{Error, Result};

/// Young function `τ(u) = e^{|u|} − |u| − 1`.
pub fn young_tau(u: f64) -> f64 {
    let a = u.abs();
    // expm1 keeps accuracy for small arguments.
    a.exp_m1() - a
}

/// `Σ α_i τ(g_i / s)`.
pub fn tau_integral(g: &[f64], alpha: &FiniteMeasure, s: f64) -> f64 {
    alpha
        .weights()
        .iter()
        .zip(g)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, x)| w * young_tau(x / s))
        .sum()
}

/// Luxemburg norm `inf{s > 0 : ∫τ(g/s) dα ≤ 1}` by bracketing and bisection
/// on the decreasing map `s ↦ ∫τ(g/s) dα`.
pub fn luxemburg_norm(g: &[f64], alpha: &FiniteMeasure) -> Result<f64> {
    if g.len() != alpha.len() {
        return Err(Error::InvalidArgument("function length mismatch".into()));
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("function must be finite".into()));
    }
    let top = alpha
        .weights()
        .iter()
        .zip(g)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, x)| x.abs())
        .fold(0.0, f64::max);
    if top == 0.0 {
        return Ok(0.0);
    }
    // At s = top every |g/s| ≤ 1, so the integral is at most e − 2 < 1.
    let mut hi = top;
    let mut lo = top;
    while tau_integral(g, alpha, lo) <= 1.0 {
        lo *= 0.5;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if tau_integral(g, alpha, mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(hi)
}
