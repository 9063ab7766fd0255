//! Enlargement schedules and the finite-n bounds around them.

use std::f64::consts::{E, PI, SQRT_2};

use serde::{Deserialize, Serialize};

use super::{MomentProblem, Norm, TiltedSolution};
use crate::error::{Error, Result};
use crate::measures::{luxemburg_norm, relative_entropy, FiniteMeasure};

/// Relative margin above `c/√n`; the schedule needs a strict inequality.
pub const SQRT_MARGIN: f64 = 1e-6;
/// Default margin above `10√(2π)κ/σ³`.
pub const BE_MARGIN: f64 = 1.1;

/// Enlargement schedule `ε_n` for a moment band around the projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// `c/√n` with `c = √(a·Var)` and `a` the type-2 constant (1 in ℝ^d).
    SqrtN { a: f64 },
    /// `c/n` with `c = margin·10√(2π)κ/σ³`, one-dimensional only.
    InvN { margin: f64 },
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule::SqrtN { a: 1.0 }
    }
}

impl Schedule {
    pub fn epsilon(&self, solution: &TiltedSolution, n: u64) -> Result<f64> {
        match *self {
            Schedule::SqrtN { a } => enlargement_sqrt(solution, a, n),
            Schedule::InvN { margin } => enlargement_berry_esseen(solution, n, margin),
        }
    }

    /// The constant `c` of the schedule.
    pub fn constant(&self, solution: &TiltedSolution) -> Result<f64> {
        match *self {
            Schedule::SqrtN { a } => Ok(enlargement_sqrt(solution, a, 1)?),
            Schedule::InvN { margin } => berry_esseen_constant(solution, margin),
        }
    }
}

/// `(1 + 1e-6)·√(a·Var)/√n`.
pub fn enlargement_sqrt(solution: &TiltedSolution, a: f64, n: u64) -> Result<f64> {
    if !(a > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("need a > 0 and n >= 1".into()));
    }
    Ok((1.0 + SQRT_MARGIN) * (a * solution.variance).sqrt() / (n as f64).sqrt())
}

/// `margin·10√(2π)·κ/σ³` for a one-dimensional solution.
pub fn berry_esseen_constant(solution: &TiltedSolution, margin: f64) -> Result<f64> {
    let kappa = solution
        .third_abs_moment
        .ok_or_else(|| Error::InvalidArgument("Berry-Esseen schedule needs d = 1".into()))?;
    let sigma = solution.variance.sqrt();
    if sigma == 0.0 {
        return Err(Error::InvalidArgument("zero variance under the projection".into()));
    }
    Ok(margin * 10.0 * (2.0 * PI).sqrt() * kappa / sigma.powi(3))
}

/// `c/n` with `c` from [`berry_esseen_constant`].
pub fn enlargement_berry_esseen(solution: &TiltedSolution, n: u64, margin: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    Ok(berry_esseen_constant(solution, margin)? / n as f64)
}

/// `exp(−n t² / (8(b² + tM)))`.
pub fn yurinskii_tail(b: f64, m: f64, n: u64, t: f64) -> Result<f64> {
    if !(b > 0.0 && m > 0.0 && t >= 0.0) {
        return Err(Error::InvalidArgument("need b, M > 0 and t >= 0".into()));
    }
    Ok((-(n as f64) * t * t / (8.0 * (b * b + t * m))).exp())
}

/// `(b, M)` for the tail bound: `M` is the Luxemburg norm under `α*` of
/// `‖F − ∫F dα*‖₂` and `b = √2·M`.
pub fn yurinskii_constants(problem: &MomentProblem, solution: &TiltedSolution) -> Result<(f64, f64)> {
    let g: Vec<f64> = problem
        .moment_map()
        .iter()
        .map(|r| Norm::Euclidean.of(&r.iter().zip(&solution.moment).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .collect();
    let m = luxemburg_norm(&g, &solution.alpha_star)?;
    Ok((SQRT_2 * m, m))
}

/// `(1/n)·log p_ball − ‖λ*‖_*·ε`, a lower bound on
/// `(1/n)·log(α^⊗n(L_n ∈ C_ε)·e^{nH})` where `p_ball` is the `α*^⊗n`
/// probability that the sample mean of `F` is within `ε` (in `norm`) of
/// `∫F dα*`.
pub fn centering_lower_bound(solution: &TiltedSolution, epsilon: f64, p_ball: f64, n: u64, norm: Norm) -> Result<f64> {
    if !(p_ball > 0.0 && p_ball <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ball probability {p_ball} outside (0, 1]"
        )));
    }
    if !(epsilon >= 0.0) || n == 0 {
        return Err(Error::InvalidArgument("need epsilon >= 0 and n >= 1".into()));
    }
    Ok(p_ball.ln() / n as f64 - norm.dual_of(&solution.lambda_star) * epsilon)
}

/// `−H(1−p)/p + (1/n)log p − 1/(n·e·(1−p))` with `p = ν^⊗n(L_n ∈ A)`.
/// Degenerates at `p ∈ {0, 1}`, which is rejected.
pub fn dst_lower_bound(entropy: f64, p_in: f64, n: u64) -> Result<f64> {
    if !(p_in > 0.0 && p_in < 1.0) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "need p in (0, 1) and n >= 1, got p = {p_in}"
        )));
    }
    let nf = n as f64;
    Ok(-entropy * (1.0 - p_in) / p_in + p_in.ln() / nf - 1.0 / (nf * E * (1.0 - p_in)))
}

/// `H(ν|α) − H(α*|α) − H(ν|α*)`; nonnegative for every `ν` in the
/// constraint set when `α*` is the I-projection.
pub fn pythagoras_gap(nu: &FiniteMeasure, alpha: &FiniteMeasure, alpha_star: &FiniteMeasure) -> Result<f64> {
    Ok(relative_entropy(nu, alpha)? - relative_entropy(alpha_star, alpha)? - relative_entropy(nu, alpha_star)?)
}
