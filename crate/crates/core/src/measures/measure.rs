use std::sync::Arc;

use super::space::{same_space, MetricSpace};
use crate::error::{Error, Result};

/// Mass tolerance for a vector of weights to count as a probability measure.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// A probability measure on the points of a finite [`MetricSpace`].
#[derive(Debug, Clone)]
pub struct FiniteMeasure {
    space: Arc<MetricSpace>,
    weights: Vec<f64>,
}

impl FiniteMeasure {
    /// Validating constructor: weights must be nonnegative, finite and sum to
    /// one within [`MASS_TOLERANCE`].
    pub fn new(space: Arc<MetricSpace>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {} points",
                weights.len(),
                space.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidMeasure(format!("bad weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}")));
        }
        Ok(Self { space, weights })
    }

    /// Normalizes nonnegative weights with positive total mass.
    pub fn from_unnormalized(space: Arc<MetricSpace>, mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} weights for {} points",
                weights.len(),
                space.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidMeasure("zero total mass".into()));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Ok(Self { space, weights })
    }

    pub fn uniform(space: Arc<MetricSpace>) -> Self {
        let n = space.len();
        Self {
            space,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn dirac(space: Arc<MetricSpace>, at: usize) -> Result<Self> {
        if at >= space.len() {
            return Err(Error::InvalidArgument(format!("no point {at}")));
        }
        let mut weights = vec![0.0; space.len()];
        weights[at] = 1.0;
        Ok(Self { space, weights })
    }

    /// Bernoulli(p) on the two points `0` and `1` of the real line.
    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("Bernoulli parameter {p}")));
        }
        Self::new(Arc::new(MetricSpace::line(&[0.0, 1.0])?), vec![1.0 - p, p])
    }

    /// Empirical measure of `counts` (a histogram over the points).
    pub fn empirical(space: Arc<MetricSpace>, counts: &[u64]) -> Result<Self> {
        let w = counts.iter().map(|&c| c as f64).collect();
        Self::from_unnormalized(space, w)
    }

    pub fn space(&self) -> &Arc<MetricSpace> {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Same object on another (label-compatible) space handle.
    pub fn with_space(&self, space: Arc<MetricSpace>) -> Result<Self> {
        Self::new(space, self.weights.clone())
    }

    pub fn same_support(&self, other: &Self) -> bool {
        same_space(&self.space, &other.space)
    }

    pub(crate) fn ensure_same_support(&self, other: &Self) -> Result<()> {
        if self.same_support(other) {
            Ok(())
        } else {
            Err(Error::SupportMismatch)
        }
    }

    /// `∫ f dν` for a function given by its values on the points.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, x)| w * x).sum()
    }

    /// Mass of a set of point indices.
    pub fn mass_of(&self, points: impl IntoIterator<Item = usize>) -> f64 {
        points.into_iter().map(|i| self.weights[i]).sum()
    }

    /// `k`-fold product measure on [`MetricSpace::power_labels`].
    pub fn power(&self, k: usize) -> Self {
        let mut w = vec![1.0];
        for _ in 0..k {
            let mut next = Vec::with_capacity(w.len() * self.len());
            for a in &w {
                for b in &self.weights {
                    next.push(a * b);
                }
            }
            w = next;
        }
        Self {
            space: Arc::new(self.space.power_labels(k)),
            weights: w,
        }
    }
}

impl PartialEq for FiniteMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.same_support(other) && self.weights == other.weights
    }
}
