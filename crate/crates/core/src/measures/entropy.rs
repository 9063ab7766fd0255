//! Relative entropy and its variational lower bound.

use super::{tv_distance, FiniteMeasure};
use crate::error::{Error, Result};

/// `H(β|γ) = Σ β_i log(β_i/γ_i)` in nats, with `0·log(0/·) = 0` and `+∞` when
/// β charges a point γ does not.
pub fn relative_entropy(beta: &FiniteMeasure, gamma: &FiniteMeasure) -> Result<f64> {
    beta.ensure_same_support(gamma)?;
    Ok(kl_weights(beta.weights(), gamma.weights()))
}

/// Relative entropy between raw probability vectors of equal length.
pub fn kl_weights(beta: &[f64], gamma: &[f64]) -> f64 {
    let mut h = 0.0;
    for (&b, &g) in beta.iter().zip(gamma) {
        if b > 0.0 {
            if g <= 0.0 {
                return f64::INFINITY;
            }
            h += b * (b / g).ln();
        }
    }
    // Rounding can push an exact zero a hair below.
    h.max(0.0)
}

/// `max_φ ∫φ dβ − log ∫e^φ dγ` over the supplied test functions.
pub fn variational_entropy_lower(beta: &FiniteMeasure, gamma: &FiniteMeasure, phis: &[Vec<f64>]) -> Result<f64> {
    beta.ensure_same_support(gamma)?;
    if phis.is_empty() {
        return Err(Error::InvalidArgument("empty test-function set".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for phi in phis {
        if phi.len() != beta.len() {
            return Err(Error::InvalidArgument("test function length mismatch".into()));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("test functions must be finite".into()));
        }
        let lhs = beta.integrate(phi);
        best = best.max(lhs - log_mean_exp(gamma.weights(), phi));
    }
    Ok(best)
}

/// `log Σ w_i e^{x_i}` with a max shift.
pub(crate) fn log_mean_exp(weights: &[f64], x: &[f64]) -> f64 {
    let shift = weights
        .iter()
        .zip(x)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, x)| *x)
        .fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = weights
        .iter()
        .zip(x)
        .filter(|(w, _)| **w > 0.0)
        .map(|(w, x)| w * (x - shift).exp())
        .sum();
    shift + s.ln()
}

/// Output of [`weighted_tv_ratio`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTv {
    /// `Σ |f_i|·|ν₁_i − ν₂_i|`
    pub lhs: f64,
    /// `(1/δ)(1 + log ∫e^{δ|f|} dν₂)(H + √H)` with `H = H(ν₁|ν₂)`
    pub factor: f64,
    /// `lhs / factor`, zero when `H = 0`.
    pub ratio: f64,
}

/// Ratio between the weighted total variation of `ν₁ − ν₂` and the entropy
/// factor of the weighted Pinsker inequality; its supremum over pairs is an
/// empirical value for the inequality's constant.
pub fn weighted_tv_ratio(f: &[f64], nu1: &FiniteMeasure, nu2: &FiniteMeasure, delta: f64) -> Result<WeightedTv> {
    nu1.ensure_same_support(nu2)?;
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    if f.len() != nu1.len() {
        return Err(Error::InvalidArgument("weight function length mismatch".into()));
    }
    let h = relative_entropy(nu1, nu2)?;
    if !h.is_finite() {
        return Err(Error::InvalidArgument("relative entropy is infinite".into()));
    }
    let lhs: f64 = f
        .iter()
        .zip(nu1.weights().iter().zip(nu2.weights()))
        .map(|(fi, (a, b))| fi.abs() * (a - b).abs())
        .sum();
    let abs_f: Vec<f64> = f.iter().map(|x| delta * x.abs()).collect();
    let log_mgf = log_mean_exp(nu2.weights(), &abs_f);
    let factor = (1.0 + log_mgf) * (h + h.sqrt()) / delta;
    let ratio = if h == 0.0 { 0.0 } else { lhs / factor };
    Ok(WeightedTv { lhs, factor, ratio })
}

/// Pinsker check helper: `tv − sqrt(2·H)`, nonpositive whenever `H` is finite.
pub fn pinsker_excess(nu1: &FiniteMeasure, nu2: &FiniteMeasure) -> Result<f64> {
    let h = relative_entropy(nu1, nu2)?;
    Ok(tv_distance(nu1, nu2)? - (2.0 * h).sqrt())
}
