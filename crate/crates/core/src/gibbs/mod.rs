//! Conditional laws of i.i.d. blocks given that the empirical measure falls
//! in a (possibly shrinking) event.
//!
//! Small instances are solved exactly by summing over type classes; larger
//! ones by rejection sampling on reproducible parallel streams. The table
//! builders at the bottom of this module assemble the Sanov sandwich, the
//! Csiszár inequality check and total-variation curves along an enlargement
//! schedule.

mod event;
mod exact;
mod mc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iproj::{
    centering_lower_bound, dst_lower_bound, solve_dual, MomentProblem, Norm, Schedule, Target, TiltedSolution,
};
use crate::measures::{relative_entropy, tv_distance, FiniteMeasure};

pub use event::{BallMetric, ConditioningEvent, EVENT_TOL};
pub use exact::{
    exact_conditional, exact_event_log_probability, exact_event_probability, type_class_count, TUPLE_BUDGET,
    TYPE_CLASS_BUDGET,
};
pub use mc::run_conditional_mc;
pub(crate) use mc::{cdf_of, draw}; // shared with the tree sampler

/// Estimated law of the first `k` coordinates given the event.
#[derive(Debug, Clone)]
pub struct ConditionalEstimate {
    pub k: usize,
    /// Law on the `k`-fold product of the support, first coordinate slowest.
    pub law: FiniteMeasure,
    /// Event probability (exact) or accepted fraction (Monte Carlo).
    pub acceptance_rate: f64,
    /// Trials drawn, or type classes enumerated when exact.
    pub n_trials: u64,
    /// Accepted trials or accepted type classes.
    pub accepted: u64,
    pub exact: bool,
    /// `ln P(L_n ∈ event)`, exact runs only.
    pub log_event_probability: Option<f64>,
    /// Binomial standard error of each cell, Monte Carlo runs only.
    pub std_errors: Option<Vec<f64>>,
}

/// Band of radius `epsilon` around the projection's moment, for the moment
/// map of `problem`.
pub fn band_around(problem: &MomentProblem, center: &[f64], epsilon: f64, norm: Norm) -> Result<ConditioningEvent> {
    ConditioningEvent::moment_band(problem.moment_map().to_vec(), center.to_vec(), epsilon, norm)
}

/// Box `{y : ‖y − center‖_∞ ≤ ε}`; equals the band for the sup norm.
fn sup_box(center: &[f64], epsilon: f64) -> Target {
    Target::Box {
        lo: center.iter().map(|c| c - epsilon).collect(),
        hi: center.iter().map(|c| c + epsilon).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanovRow {
    pub n: u64,
    pub epsilon: f64,
    pub p_event: f64,
    /// `(1/n)·ln P(L_n ∈ C_n)`.
    pub log_p_over_n: f64,
    /// `−H(C|α)` for the unenlarged constraint.
    pub neg_entropy: f64,
    /// `(1/n)·ln P + H(C|α)`; tends to 0 along a good schedule.
    pub centered: f64,
    /// `−H(C_n|α)` for the enlarged band, an upper bound on `log_p_over_n`
    /// for convex closed events (sup-norm bands only).
    pub upper: Option<f64>,
    /// Lower bound on `centered` from centering around `α*`.
    pub centering_bound: Option<f64>,
    /// Lower bound on `centered` from the minimization bound with `ν = α*`.
    pub dst_bound: Option<f64>,
    /// Every available bound holds (1e-9 slack).
    pub ok: bool,
}

/// For each `n`, the exact probability of the band of radius `ε_n`
/// around `∫F dα*` and the bounds that sandwich it.
pub fn sanov_sandwich(
    problem: &MomentProblem,
    solution: &TiltedSolution,
    schedule: &dyn Fn(u64) -> Result<f64>,
    norm: Norm,
    n_list: &[u64],
) -> Result<Vec<SanovRow>> {
    let alpha = problem.alpha();
    let h = solution.entropy;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let eps = schedule(n)?;
        let event = band_around(problem, &solution.moment, eps, norm)?;
        let log_p = exact_event_log_probability(alpha, n, &event)?;
        let nf = n as f64;
        let centered = log_p / nf + h;
        let p_star = exact_event_probability(&solution.alpha_star, n, &event)?;
        let centering_bound = if p_star > 0.0 {
            Some(centering_lower_bound(solution, eps, p_star, n, norm)?)
        } else {
            None
        };
        let dst_bound = if p_star > 0.0 && p_star < 1.0 {
            Some(dst_lower_bound(h, p_star, n)?)
        } else {
            None
        };
        let upper = if norm == Norm::Sup || problem.dim() == 1 {
            let widened = problem.with_target(sup_box(&solution.moment, eps))?;
            match solve_dual(&widened) {
                Ok(s) => Some(-s.entropy),
                Err(Error::Infeasible { .. }) => None,
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let ok = centering_bound.map_or(true, |b| centered >= b - 1e-9)
            && dst_bound.map_or(true, |b| centered >= b - 1e-9)
            && upper.map_or(true, |u| log_p / nf <= u + 1e-9);
        rows.push(SanovRow {
            n,
            epsilon: eps,
            p_event: log_p.exp(),
            log_p_over_n: log_p / nf,
            neg_entropy: -h,
            centered,
            upper,
            centering_bound,
            dst_bound,
            ok,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiszarCheck {
    /// `H(conditional k-law | α*^⊗k)`.
    pub lhs: f64,
    /// `−(1/⌊n/k⌋)·ln(P(L_n ∈ A)·e^{n·H(A|α)})`.
    pub rhs: f64,
    pub ok: bool,
}

/// Csiszár's inequality for a convex closed event `A` with I-projection
/// `alpha_star` and `h_event = H(A|α)`. The bracket `[n/k]` is read as the
/// integer part.
pub fn csiszar_bound_check(
    alpha: &FiniteMeasure,
    n: u64,
    event: &ConditioningEvent,
    k: usize,
    alpha_star: &FiniteMeasure,
    h_event: f64,
) -> Result<CsiszarCheck> {
    let est = exact_conditional(alpha, n, event, k)?;
    let log_p = est.log_event_probability.ok_or(Error::ZeroProbability)?;
    let lhs = relative_entropy(&est.law, &alpha_star.power(k))?;
    let blocks = (n / k as u64) as f64;
    let rhs = -(log_p + n as f64 * h_event) / blocks;
    Ok(CsiszarCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + 1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvRow {
    pub n: u64,
    pub epsilon: f64,
    pub p_event: f64,
    pub log_p_over_n: f64,
    /// `‖conditional k-law − α*^⊗k‖_TV` (full-mass convention).
    pub tv_k: f64,
    pub acceptance_rate: f64,
}

/// Exact conditional laws along the schedule, compared with `α*^⊗k`. The
/// band is centered at the problem's point target.
pub fn conditional_tv_curve(
    problem: &MomentProblem,
    solution: &TiltedSolution,
    schedule: Schedule,
    norm: Norm,
    n_list: &[u64],
    k: usize,
) -> Result<Vec<TvRow>> {
    let center = match problem.target() {
        Target::Point(x) => x.clone(),
        Target::Box { .. } => solution.moment.clone(),
    };
    let product = solution.alpha_star.power(k);
    n_list
        .iter()
        .map(|&n| {
            let eps = schedule.epsilon(solution, n)?;
            let event = band_around(problem, &center, eps, norm)?;
            let est = exact_conditional(problem.alpha(), n, &event, k)?;
            let log_p = est.log_event_probability.unwrap_or(f64::NEG_INFINITY);
            Ok(TvRow {
                n,
                epsilon: eps,
                p_event: log_p.exp(),
                log_p_over_n: log_p / n as f64,
                tv_k: tv_distance(&est.law, &product)?,
                acceptance_rate: est.acceptance_rate,
            })
        })
        .collect()
}
