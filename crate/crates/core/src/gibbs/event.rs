use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::iproj::Norm;
use crate::measures::{fm_distance, prohorov_distance, FiniteMeasure};

/// Slack on band and ball membership, absorbing rounding in the empirical
/// mean.
pub const EVENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMetric {
    #[default]
    Fm,
    Prohorov,
}

/// A set of empirical measures, tested on the type (count vector) of a
/// sample.
#[derive(Debug, Clone)]
pub enum ConditioningEvent {
    /// No conditioning.
    Whole,
    /// `‖∫F dL_n − center‖ ≤ radius`.
    MomentBand {
        f: Vec<Vec<f64>>,
        center: Vec<f64>,
        radius: f64,
        norm: Norm,
    },
    /// `d(L_n, target) ≤ radius`.
    MetricBall {
        target: FiniteMeasure,
        metric: BallMetric,
        radius: f64,
    },
}

impl ConditioningEvent {
    pub fn moment_band(f: Vec<Vec<f64>>, center: Vec<f64>, radius: f64, norm: Norm) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative radius {radius}")));
        }
        if f.iter().any(|r| r.len() != center.len()) {
            return Err(Error::InvalidArgument("band dimension mismatch".into()));
        }
        Ok(Self::MomentBand {
            f,
            center,
            radius,
            norm,
        })
    }

    pub fn metric_ball(target: FiniteMeasure, metric: BallMetric, radius: f64) -> Result<Self> {
        if !(radius >= 0.0) {
            return Err(Error::InvalidArgument(format!("negative radius {radius}")));
        }
        Ok(Self::MetricBall { target, metric, radius })
    }

    pub fn radius(&self) -> f64 {
        match self {
            Self::Whole => f64::INFINITY,
            Self::MomentBand { radius, .. } | Self::MetricBall { radius, .. } => *radius,
        }
    }

    /// Checks that the event is defined on a space of `m` points.
    pub(crate) fn check_support(&self, alpha: &FiniteMeasure) -> Result<()> {
        match self {
            Self::Whole => Ok(()),
            Self::MomentBand { f, .. } if f.len() != alpha.len() => Err(Error::InvalidArgument(
                "band moment map does not match the support".into(),
            )),
            Self::MomentBand { .. } => Ok(()),
            Self::MetricBall { target, .. } => {
                if target.same_support(alpha) {
                    Ok(())
                } else {
                    Err(Error::SupportMismatch)
                }
            }
        }
    }

    /// Whether the empirical measure with the given counts (summing to `n`)
    /// lies in the event.
    pub fn contains_counts(&self, counts: &[u64], n: u64) -> Result<bool> {
        match self {
            Self::Whole => Ok(true),
            Self::MomentBand {
                f,
                center,
                radius,
                norm,
            } => {
                let nf = n as f64;
                let gap: Vec<f64> = (0..center.len())
                    .map(|j| {
                        let s: f64 = counts
                            .iter()
                            .zip(f)
                            .filter(|(c, _)| **c > 0)
                            .map(|(c, r)| *c as f64 * r[j])
                            .sum();
                        s / nf - center[j]
                    })
                    .collect();
                Ok(norm.of(&gap) <= radius + EVENT_TOL)
            }
            Self::MetricBall { target, metric, radius } => {
                let emp = FiniteMeasure::empirical(target.space().clone(), counts)?;
                let d = match metric {
                    BallMetric::Fm => fm_distance(&emp, target)?,
                    BallMetric::Prohorov => prohorov_distance(&emp, target)?.value,
                };
                Ok(d <= radius + EVENT_TOL)
            }
        }
    }

    pub fn contains(&self, empirical: &FiniteMeasure, n: u64) -> Result<bool> {
        let counts: Vec<u64> = empirical
            .weights()
            .iter()
            .map(|w| (w * n as f64).round() as u64)
            .collect();
        self.contains_counts(&counts, n)
    }
}
