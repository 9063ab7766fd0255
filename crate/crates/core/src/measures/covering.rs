//! Covering numbers of finite metric spaces and the derived entropy bounds for
//! spaces of probability measures.

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use super::MetricSpace;
use crate::error::{Error, Result};

/// Largest space for which covers are minimized exhaustively.
pub const COVER_EXACT_MAX: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMethod {
    Exact,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub epsilon: f64,
    pub count: usize,
    pub method: CoverMethod,
    /// Indices of the centers.
    pub center_indices: Vec<usize>,
    /// Labels of the centers.
    pub centers: Vec<String>,
}

impl CoveringReport {
    /// Every point lies in an open ball of radius `epsilon` around a center.
    pub fn covers(&self, space: &MetricSpace) -> bool {
        covers(space, &self.center_indices, self.epsilon)
    }
}

fn covers(space: &MetricSpace, centers: &[usize], eps: f64) -> bool {
    (0..space.len()).all(|y| centers.iter().any(|&c| space.dist(c, y) < eps))
}

/// Minimal number of open `ε`-balls centered at points of the space needed to
/// cover it. Exact by exhaustive search for at most [`COVER_EXACT_MAX`]
/// points, otherwise a farthest-point greedy cover (an upper bound).
pub fn covering_number(space: &MetricSpace, epsilon: f64) -> Result<CoveringReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let m = space.len();
    let (centers, method) = if m == 0 {
        (Vec::new(), CoverMethod::Exact)
    } else if m <= COVER_EXACT_MAX {
        (exact_cover(space, epsilon), CoverMethod::Exact)
    } else {
        (farthest_point_cover(space, epsilon), CoverMethod::Greedy)
    };
    Ok(CoveringReport {
        epsilon,
        count: centers.len(),
        method,
        centers: centers.iter().map(|&i| space.labels()[i].clone()).collect(),
        center_indices: centers,
    })
}

fn exact_cover(space: &MetricSpace, eps: f64) -> Vec<usize> {
    let m = space.len();
    let full: u32 = if m == 32 { u32::MAX } else { (1u32 << m) - 1 };
    let balls: Vec<u32> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| space.dist(i, j) < eps)
                .fold(0u32, |acc, j| acc | (1 << j))
        })
        .collect();
    for size in 1..=m {
        let mut idx: Vec<usize> = (0..size).collect();
        loop {
            let cover = idx.iter().fold(0u32, |acc, &i| acc | balls[i]);
            if cover == full {
                return idx;
            }
            // next combination in lexicographic order
            let mut pos = size;
            while pos > 0 && idx[pos - 1] == m - size + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            idx[pos - 1] += 1;
            for q in pos..size {
                idx[q] = idx[q - 1] + 1;
            }
        }
    }
    (0..m).collect()
}

fn farthest_point_cover(space: &MetricSpace, eps: f64) -> Vec<usize> {
    let m = space.len();
    let mut centers = vec![0];
    let mut gap: Vec<f64> = (0..m).map(|j| space.dist(0, j)).collect();
    loop {
        let (far, d) =
            gap.iter().copied().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |best, (j, d)| if d > best.1 { (j, d) } else { best },
            );
        if d < eps {
            return centers;
        }
        centers.push(far);
        for (j, g) in gap.iter_mut().enumerate() {
            *g = g.min(space.dist(far, j));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureMetric {
    Prohorov,
    FortetMourier,
}

/// Upper bound on the covering number of the space of probability measures:
/// `(2e/ε)^N` for Prohorov, `(4e/ε)^N` for Fortet-Mourier. The caller passes
/// the matching `N`: `N(d, ε)` for Prohorov and `N(d, ε/2)` for
/// Fortet-Mourier.
pub fn covering_bound_measures(n_cover: usize, epsilon: f64, metric: MeasureMetric) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let base = match metric {
        MeasureMetric::Prohorov => 2.0 * E / epsilon,
        MeasureMetric::FortetMourier => 4.0 * E / epsilon,
    };
    Ok(base.powi(n_cover as i32))
}

/// Ratio of the geometric radius grid scanned by [`epsilon_schedule_metric`].
pub const SCHEDULE_GRID_RATIO: f64 = 0.95;
/// The grid stops here.
pub const SCHEDULE_GRID_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSchedule {
    pub n: u64,
    pub epsilon: f64,
    /// `nε²/8 + (log ε)·N(ε/8)` at the returned radius.
    pub criterion: f64,
    /// Set when the criterion does not reach `√n` anywhere on the grid (the
    /// radius 1 is returned) or still holds at the grid floor.
    pub warning: bool,
}

/// `nε²/8 + (log ε)·N(ε/8)`.
pub fn schedule_criterion(covering_fn: impl Fn(f64) -> f64, n: u64, epsilon: f64) -> f64 {
    n as f64 * epsilon * epsilon / 8.0 + epsilon.ln() * covering_fn(epsilon / 8.0)
}

/// Smallest radius on the grid `1, 0.95, 0.95², …` at which the criterion
/// reaches `√n`. The criterion increases with ε when the covering function
/// is nonincreasing, so the scan stops at the first failure.
pub fn epsilon_schedule_metric(covering_fn: impl Fn(f64) -> f64, n: u64) -> MetricSchedule {
    let target = (n as f64).sqrt();
    let mut eps = 1.0;
    let mut crit = schedule_criterion(&covering_fn, n, eps);
    if crit < target {
        return MetricSchedule {
            n,
            epsilon: 1.0,
            criterion: crit,
            warning: true,
        };
    }
    loop {
        let next = eps * SCHEDULE_GRID_RATIO;
        if next < SCHEDULE_GRID_FLOOR {
            return MetricSchedule {
                n,
                epsilon: eps,
                criterion: crit,
                warning: true,
            };
        }
        let c = schedule_criterion(&covering_fn, n, next);
        if c < target {
            return MetricSchedule {
                n,
                epsilon: eps,
                criterion: crit,
                warning: false,
            };
        }
        eps = next;
        crit = c;
    }
}

/// Lower bound `α*(K)^n (1 − (16e/η)^{N_K(η/8)} e^{−nη²/8})` on the
/// probability that the empirical measure of `n` draws from `α*` lies within
/// `η + 2α*(K^c)` of the constraint set, for a compact `K` of mass
/// `mass_in_compact` and covering number `n_cover = N_K(d, η/8)`. Negative
/// values mean the bound is vacuous.
pub fn compact_truncation_bound(mass_in_compact: f64, n_cover: usize, eta: f64, n: u64) -> Result<f64> {
    if !(eta > 0.0) || !(0.0..=1.0).contains(&mass_in_compact) {
        return Err(Error::InvalidArgument("need eta > 0 and mass in [0, 1]".into()));
    }
    let nf = n as f64;
    let log_cover = n_cover as f64 * (16.0 * E / eta).ln() - nf * eta * eta / 8.0;
    Ok(mass_in_compact.powf(nf) * (1.0 - log_cover.exp()))
}
