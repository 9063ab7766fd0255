//! I-projections of a finite measure onto moment constraint sets.
//!
//! For a base measure `α`, a moment map `F` into ℝ^d and a target set `K`
//! (a point or a box), the entropy minimizer over `{ν : ∫F dν ∈ K}` is an
//! exponential tilt `α* ∝ e^{⟨λ*, F⟩} α`. [`solve_dual`] finds `λ*` from the
//! convex dual; [`brute_force_projection`] scans the simplex and serves as an
//! independent oracle on tiny supports.

mod bounds;
mod brute;
mod dual;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{relative_entropy, FiniteMeasure};

pub use bounds::{
    berry_esseen_constant, centering_lower_bound, dst_lower_bound, enlargement_berry_esseen, enlargement_sqrt,
    pythagoras_gap, yurinskii_constants, yurinskii_tail, Schedule, BE_MARGIN, SQRT_MARGIN,
};
pub use brute::brute_force_projection;
pub use dual::{relative_interior_margin, solve_dual, DUAL_GRADIENT_TOL};

/// Norm used for moment bands on ℝ^d.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Norm {
    #[default]
    Sup,
    Euclidean,
}

impl Norm {
    pub fn of(self, x: &[f64]) -> f64 {
        match self {
            Norm::Sup => x.iter().fold(0.0, |m, v| m.max(v.abs())),
            Norm::Euclidean => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
        }
    }

    /// The dual norm, used to bound `⟨λ, y⟩` by `‖λ‖_* ‖y‖`.
    pub fn dual_of(self, x: &[f64]) -> f64 {
        match self {
            Norm::Sup => x.iter().map(|v| v.abs()).sum(),
            Norm::Euclidean => Norm::Euclidean.of(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Point(Vec<f64>),
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl Target {
    pub fn dim(&self) -> usize {
        match self {
            Target::Point(x) => x.len(),
            Target::Box { lo, .. } => lo.len(),
        }
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> bool {
        match self {
            Target::Point(x) => x.iter().zip(y).all(|(a, b)| (a - b).abs() <= tol),
            Target::Box { lo, hi } => y
                .iter()
                .enumerate()
                .all(|(j, v)| *v >= lo[j] - tol && *v <= hi[j] + tol),
        }
    }
}

/// Entropy minimization over `{ν : ∫F dν ∈ target}`.
#[derive(Debug, Clone)]
pub struct MomentProblem {
    alpha: FiniteMeasure,
    f: Vec<Vec<f64>>,
    target: Target,
}

impl MomentProblem {
    /// `f[i]` is the value of the moment map at point `i`.
    pub fn new(alpha: FiniteMeasure, f: Vec<Vec<f64>>, target: Target) -> Result<Self> {
        if f.len() != alpha.len() {
            return Err(Error::InvalidArgument(format!(
                "moment map has {} rows for {} points",
                f.len(),
                alpha.len()
            )));
        }
        let d = target.dim();
        if d == 0 {
            return Err(Error::InvalidArgument("zero-dimensional target".into()));
        }
        if f.iter().any(|row| row.len() != d || row.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument(format!(
                "moment map rows must be finite of length {d}"
            )));
        }
        match &target {
            Target::Point(x) if x.iter().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidArgument("target must be finite".into()))
            }
            Target::Box { lo, hi }
                if (hi.len() != d
                    || lo
                        .iter()
                        .zip(hi)
                        .any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite())) =>
            {
                return Err(Error::InvalidArgument("box needs finite lo <= hi".into()));
            }
            _ => {}
        }
        Ok(Self { alpha, f, target })
    }

    /// One-dimensional problem with `F` the identity on the real line points.
    pub fn scalar(alpha: FiniteMeasure, values: &[f64], target: Target) -> Result<Self> {
        Self::new(alpha, values.iter().map(|v| vec![*v]).collect(), target)
    }

    pub fn alpha(&self) -> &FiniteMeasure {
        &self.alpha
    }

    pub fn moment_map(&self) -> &[Vec<f64>] {
        &self.f
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    pub fn with_target(&self, target: Target) -> Result<Self> {
        Self::new(self.alpha.clone(), self.f.clone(), target)
    }

    /// `∫F dν`.
    pub fn moment_of(&self, nu: &FiniteMeasure) -> Vec<f64> {
        moment(&self.f, nu.weights(), self.dim())
    }
}

fn moment(f: &[Vec<f64>], w: &[f64], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for (row, wi) in f.iter().zip(w) {
        if *wi > 0.0 {
            for (mj, fj) in m.iter_mut().zip(row) {
                *mj += wi * fj;
            }
        }
    }
    m
}

/// Value, gradient and Hessian of `Λ(λ) = log ∫e^{⟨λ,F⟩} dα`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLaplace {
    pub value: f64,
    /// Tilted mean of `F`.
    pub gradient: Vec<f64>,
    /// Tilted covariance of `F`, row-major `d × d`.
    pub hessian: Vec<Vec<f64>>,
}

/// Tilted weights `α_i e^{⟨λ,F_i⟩ − Λ(λ)}` together with `Λ(λ)`.
fn tilted_weights(alpha: &[f64], f: &[Vec<f64>], lambda: &[f64]) -> (Vec<f64>, f64) {
    let expo: Vec<f64> = f
        .iter()
        .map(|row| row.iter().zip(lambda).map(|(a, b)| a * b).sum())
        .collect();
    let shift = alpha
        .iter()
        .zip(&expo)
        .filter(|(a, _)| **a > 0.0)
        .map(|(_, e)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = alpha
        .iter()
        .zip(&expo)
        .map(|(a, e)| if *a > 0.0 { a * (e - shift).exp() } else { 0.0 })
        .collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= z);
    (w, shift + z.ln())
}

fn covariance(f: &[Vec<f64>], w: &[f64], mean: &[f64]) -> Vec<Vec<f64>> {
    let d = mean.len();
    let mut c = vec![vec![0.0; d]; d];
    for (row, wi) in f.iter().zip(w) {
        if *wi == 0.0 {
            continue;
        }
        for a in 0..d {
            let da = row[a] - mean[a];
            for b in a..d {
                c[a][b] += wi * da * (row[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            c[a][b] = c[b][a];
        }
    }
    c
}

pub fn log_laplace(problem: &MomentProblem, lambda: &[f64]) -> Result<LogLaplace> {
    if lambda.len() != problem.dim() {
        return Err(Error::InvalidArgument("multiplier dimension mismatch".into()));
    }
    let (w, value) = tilted_weights(problem.alpha.weights(), &problem.f, lambda);
    let gradient = moment(&problem.f, &w, problem.dim());
    let hessian = covariance(&problem.f, &w, &gradient);
    Ok(LogLaplace {
        value,
        gradient,
        hessian,
    })
}

/// `α_i e^{⟨λ,F_i⟩}` normalized.
pub fn tilt(alpha: &FiniteMeasure, f: &[Vec<f64>], lambda: &[f64]) -> Result<FiniteMeasure> {
    if f.len() != alpha.len() || f.iter().any(|r| r.len() != lambda.len()) {
        return Err(Error::InvalidArgument("tilt dimension mismatch".into()));
    }
    let (w, _) = tilted_weights(alpha.weights(), f, lambda);
    FiniteMeasure::from_unnormalized(alpha.space().clone(), w)
}

/// The I-projection `α*` and its summary statistics.
#[derive(Debug, Clone)]
pub struct TiltedSolution {
    pub lambda_star: Vec<f64>,
    pub log_z: f64,
    pub alpha_star: FiniteMeasure,
    /// `H(α*|α)` in nats, equal to `⟨λ*, moment⟩ − log Z`.
    pub entropy: f64,
    /// `∫F dα*`.
    pub moment: Vec<f64>,
    /// Largest eigenvalue of the covariance of `F` under `α*`.
    pub variance: f64,
    /// `∫|F − moment|³ dα*`, one-dimensional problems only.
    pub third_abs_moment: Option<f64>,
    pub iterations: usize,
}

impl TiltedSolution {
    pub(crate) fn from_lambda(problem: &MomentProblem, lambda: Vec<f64>, iterations: usize) -> Result<Self> {
        let ll = log_laplace(problem, &lambda)?;
        let alpha_star = tilt(&problem.alpha, &problem.f, &lambda)?;
        let d = problem.dim();
        let cov = DMatrix::from_fn(d, d, |a, b| ll.hessian[a][b]);
        let variance = SymmetricEigen::new(cov).eigenvalues.max().max(0.0);
        let third_abs_moment = (d == 1).then(|| {
            problem
                .f
                .iter()
                .zip(alpha_star.weights())
                .map(|(r, w)| w * (r[0] - ll.gradient[0]).abs().powi(3))
                .sum()
        });
        // Summed directly rather than as ⟨λ*, moment⟩ − log Z, which cancels
        // badly near λ = 0.
        let entropy = relative_entropy(&alpha_star, &problem.alpha)?;
        Ok(Self {
            lambda_star: lambda,
            log_z: ll.value,
            alpha_star,
            entropy,
            moment: ll.gradient,
            variance,
            third_abs_moment,
            iterations,
        })
    }
}
