use std::sync::Arc;

use crate::error::{Error, Result};

/// How distances between points of a [`MetricSpace`] are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum Distance {
    /// Explicit symmetric table, row-major `len × len`.
    Table(Vec<f64>),
    /// Points embedded in ℝ^d; Euclidean distance between coordinates.
    Euclidean(Vec<Vec<f64>>),
    /// 0/1 metric.
    Discrete,
}

/// A finite metric space with labelled points.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSpace {
    labels: Vec<String>,
    distance: Distance,
}

impl MetricSpace {
    /// Builds a space from an explicit distance table and checks the metric
    /// axioms (zero diagonal, symmetry, triangle inequality) by exhaustive scan.
    pub fn from_table(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if dist.len() != n || dist.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidSpace(format!("distance table must be {n}x{n}")));
        }
        let flat: Vec<f64> = dist.into_iter().flatten().collect();
        let space = Self {
            labels,
            distance: Distance::Table(flat),
        };
        space.check_axioms(1e-12)?;
        Ok(space)
    }

    /// Points on the real line (or in ℝ^d) with the Euclidean metric.
    pub fn euclidean(labels: Vec<String>, coords: Vec<Vec<f64>>) -> Result<Self> {
        if labels.len() != coords.len() {
            return Err(Error::InvalidSpace("one coordinate vector per label".into()));
        }
        if let Some(d) = coords.first().map(Vec::len) {
            if coords.iter().any(|c| c.len() != d || c.iter().any(|x| !x.is_finite())) {
                return Err(Error::InvalidSpace(
                    "coordinates must be finite with equal dimension".into(),
                ));
            }
        }
        Ok(Self {
            labels,
            distance: Distance::Euclidean(coords),
        })
    }

    /// Points of the real line labelled by their value.
    pub fn line(points: &[f64]) -> Result<Self> {
        let labels = points.iter().map(|x| format!("{x}")).collect();
        Self::euclidean(labels, points.iter().map(|&x| vec![x]).collect())
    }

    pub fn discrete(labels: Vec<String>) -> Self {
        Self {
            labels,
            distance: Distance::Discrete,
        }
    }

    /// `k`-fold product of the label set, with the discrete metric. Labels are
    /// joined with `|`; the first coordinate varies slowest.
    pub fn power_labels(&self, k: usize) -> Self {
        let mut labels = vec![String::new()];
        for _ in 0..k {
            let mut next = Vec::with_capacity(labels.len() * self.len());
            for prefix in &labels {
                for l in &self.labels {
                    if prefix.is_empty() {
                        next.push(l.clone());
                    } else {
                        next.push(format!("{prefix}|{l}"));
                    }
                }
            }
            labels = next;
        }
        Self::discrete(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn distance_kind(&self) -> &Distance {
        &self.distance
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        match &self.distance {
            Distance::Table(t) => t[i * self.labels.len() + j],
            Distance::Euclidean(c) => c[i]
                .iter()
                .zip(&c[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            Distance::Discrete => {
                if i == j {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// Materialized distance table.
    pub fn table(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|i| (0..self.len()).map(|j| self.dist(i, j)).collect())
            .collect()
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                d = d.max(self.dist(i, j));
            }
        }
        d
    }

    /// Exhaustive check of the metric axioms with absolute slack `tol`.
    pub fn check_axioms(&self, tol: f64) -> Result<()> {
        let n = self.len();
        for i in 0..n {
            if self.dist(i, i).abs() > tol {
                return Err(Error::InvalidSpace(format!("dist({i},{i}) != 0")));
            }
            for j in 0..n {
                let dij = self.dist(i, j);
                if !dij.is_finite() || dij < 0.0 {
                    return Err(Error::InvalidSpace(format!("dist({i},{j}) = {dij}")));
                }
                if (dij - self.dist(j, i)).abs() > tol {
                    return Err(Error::InvalidSpace(format!("dist not symmetric at ({i},{j})")));
                }
                for k in 0..n {
                    if dij > self.dist(i, k) + self.dist(k, j) + tol {
                        return Err(Error::InvalidSpace(format!(
                            "triangle inequality fails for ({i},{k},{j})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Indicator masks of closed balls `{j : d(i, j) <= r}` as bitsets; only
    /// meaningful for spaces with at most 64 points.
    pub(crate) fn ball_masks(&self, r: f64) -> Vec<u64> {
        debug_assert!(self.len() <= 64);
        (0..self.len())
            .map(|i| {
                (0..self.len())
                    .filter(|&j| self.dist(i, j) <= r)
                    .fold(0u64, |m, j| m | (1 << j))
            })
            .collect()
    }
}

/// Two spaces are interchangeable when they are the same allocation or carry
/// identical labels.
pub(crate) fn same_space(a: &Arc<MetricSpace>, b: &Arc<MetricSpace>) -> bool {
    Arc::ptr_eq(a, b) || a.labels == b.labels
}
