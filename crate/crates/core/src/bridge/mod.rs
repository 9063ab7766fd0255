//! Discrete Schrödinger bridges.
//!
//! Given a reference joint law `μ₀,₁ = p·(μ₀ ⊗ μ₁)` on a product grid and
//! target marginals `ν₀, ν₁`, the entropy-minimal coupling has density
//! `f(u)·g(v)` against `μ₀,₁`, where `(f, g)` solves
//!
//! ```text
//! dν₀/dμ₀(u) = f(u) ∫ p(u,v) g(v) dμ₁(v),
//! dν₁/dμ₁(v) = g(v) ∫ p(u,v) f(u) dμ₀(u).
//! ```
//!
//! [`sinkhorn`] solves this by alternating the two equations from `g ≡ 1`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{fm_distance, prohorov_distance, relative_entropy, FiniteMeasure, MetricSpace};
use crate::rng::run_partitioned;

/// Tolerance on `∫p(u,·) dμ₁ = 1` and `∫p(·,v) dμ₀ = 1`.
pub const DENSITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct BridgeProblem {
    mu0: FiniteMeasure,
    mu1: FiniteMeasure,
    /// `p[u][v]`, density of the reference joint against `μ₀ ⊗ μ₁`.
    p: Vec<Vec<f64>>,
    nu0: FiniteMeasure,
    nu1: FiniteMeasure,
}

impl BridgeProblem {
    pub fn new(
        mu0: FiniteMeasure,
        mu1: FiniteMeasure,
        p: Vec<Vec<f64>>,
        nu0: FiniteMeasure,
        nu1: FiniteMeasure,
    ) -> Result<Self> {
        let (nu, nv) = (mu0.len(), mu1.len());
        if p.len() != nu || p.iter().any(|r| r.len() != nv) {
            return Err(Error::InvalidArgument(format!("density table must be {nu}x{nv}")));
        }
        if p.iter().flatten().any(|x| !x.is_finite() || *x <= 0.0) {
            return Err(Error::InvalidArgument("density must be finite and positive".into()));
        }
        nu0.same_support(&mu0).then_some(()).ok_or(Error::SupportMismatch)?;
        nu1.same_support(&mu1).then_some(()).ok_or(Error::SupportMismatch)?;
        for u in 0..nu {
            if mu0.weights()[u] > 0.0 {
                let s: f64 = (0..nv).map(|v| p[u][v] * mu1.weights()[v]).sum();
                if (s - 1.0).abs() > DENSITY_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "row {u} of the density integrates to {s}"
                    )));
                }
            } else if nu0.weights()[u] > 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "target 0 charges point {u} outside the reference"
                )));
            }
        }
        for v in 0..nv {
            if mu1.weights()[v] > 0.0 {
                let s: f64 = (0..nu).map(|u| p[u][v] * mu0.weights()[u]).sum();
                if (s - 1.0).abs() > DENSITY_TOL {
                    return Err(Error::InvalidArgument(format!(
                        "column {v} of the density integrates to {s}"
                    )));
                }
            } else if nu1.weights()[v] > 0.0 {
                return Err(Error::InvalidMeasure(format!(
                    "target 1 charges point {v} outside the reference"
                )));
            }
        }
        Ok(Self { mu0, mu1, p, nu0, nu1 })
    }

    /// Same reference, new targets.
    pub fn with_targets(&self, nu0: FiniteMeasure, nu1: FiniteMeasure) -> Result<Self> {
        Self::new(self.mu0.clone(), self.mu1.clone(), self.p.clone(), nu0, nu1)
    }

    pub fn mu0(&self) -> &FiniteMeasure {
        &self.mu0
    }
    pub fn mu1(&self) -> &FiniteMeasure {
        &self.mu1
    }
    pub fn density(&self) -> &[Vec<f64>] {
        &self.p
    }
    pub fn nu0(&self) -> &FiniteMeasure {
        &self.nu0
    }
    pub fn nu1(&self) -> &FiniteMeasure {
        &self.nu1
    }

    /// Labels `u|v` of the product grid, `v` fastest.
    pub fn product_space(&self) -> Arc<MetricSpace> {
        let mut labels = Vec::with_capacity(self.mu0.len() * self.mu1.len());
        for a in self.mu0.space().labels() {
            for b in self.mu1.space().labels() {
                labels.push(format!("{a}|{b}"));
            }
        }
        Arc::new(MetricSpace::discrete(labels))
    }

    /// The reference joint `μ₀,₁`.
    pub fn reference_joint(&self) -> Result<FiniteMeasure> {
        self.joint_with(|_, _| 1.0)
    }

    /// Normalized `h(u,v)·p(u,v)·μ₀(u)·μ₁(v)` on the product grid.
    fn joint_with(&self, h: impl Fn(usize, usize) -> f64) -> Result<FiniteMeasure> {
        let (m0, m1) = (self.mu0.weights(), self.mu1.weights());
        let mut w = Vec::with_capacity(m0.len() * m1.len());
        for u in 0..m0.len() {
            for v in 0..m1.len() {
                w.push(h(u, v) * self.p[u][v] * m0[u] * m1[v]);
            }
        }
        FiniteMeasure::from_unnormalized(self.product_space(), w)
    }

    /// Marginals of a measure on the product grid.
    pub fn marginals(&self, joint: &FiniteMeasure) -> (Vec<f64>, Vec<f64>) {
        let nv = self.mu1.len();
        let mut a = vec![0.0; self.mu0.len()];
        let mut b = vec![0.0; nv];
        for (i, w) in joint.weights().iter().enumerate() {
            a[i / nv] += w;
            b[i % nv] += w;
        }
        (a, b)
    }
}

/// Solution of the Schrödinger system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgePotentials {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    /// Largest marginal violation `max |marginal − target|` at the last
    /// iterate.
    pub residual: f64,
    pub iterations: usize,
    /// Residual after each iteration.
    pub history: Vec<f64>,
}

fn density_ratio(nu: &FiniteMeasure, mu: &FiniteMeasure) -> Vec<f64> {
    nu.weights()
        .iter()
        .zip(mu.weights())
        .map(|(n, m)| if *m > 0.0 { n / m } else { 0.0 })
        .collect()
}

fn marginal_residual(problem: &BridgePotentials, bp: &BridgeProblem) -> f64 {
    let (m0, m1) = (bp.mu0.weights(), bp.mu1.weights());
    let (f, g) = (&problem.f, &problem.g);
    let mut worst = 0.0f64;
    for u in 0..m0.len() {
        let s: f64 = (0..m1.len()).map(|v| bp.p[u][v] * g[v] * m1[v]).sum();
        worst = worst.max((f[u] * s * m0[u] - bp.nu0.weights()[u]).abs());
    }
    for v in 0..m1.len() {
        let s: f64 = (0..m0.len()).map(|u| bp.p[u][v] * f[u] * m0[u]).sum();
        worst = worst.max((g[v] * s * m1[v] - bp.nu1.weights()[v]).abs());
    }
    worst
}

/// Alternating fit of the two equations, `f` first, starting from `g ≡ 1`.
/// The returned pair is gauged so that `∫log f dν₀ = ∫log g dν₁`.
pub fn sinkhorn(problem: &BridgeProblem, tol: f64, max_iter: usize) -> Result<BridgePotentials> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let (m0, m1) = (problem.mu0.weights(), problem.mu1.weights());
    let r0 = density_ratio(&problem.nu0, &problem.mu0);
    let r1 = density_ratio(&problem.nu1, &problem.mu1);
    let mut pot = BridgePotentials {
        f: vec![1.0; m0.len()],
        g: vec![1.0; m1.len()],
        residual: f64::INFINITY,
        iterations: 0,
        history: Vec::new(),
    };
    for it in 1..=max_iter {
        let f: Vec<f64> = (0..m0.len())
            .map(|u| {
                let s: f64 = (0..m1.len()).map(|v| problem.p[u][v] * pot.g[v] * m1[v]).sum();
                r0[u] / s
            })
            .collect();
        let g: Vec<f64> = (0..m1.len())
            .map(|v| {
                let s: f64 = (0..m0.len()).map(|u| problem.p[u][v] * f[u] * m0[u]).sum();
                r1[v] / s
            })
            .collect();
        pot.f = f;
        pot.g = g;
        pot.residual = marginal_residual(&pot, problem);
        pot.history.push(pot.residual);
        pot.iterations = it;
        if pot.residual <= tol {
            break;
        }
    }
    gauge(&mut pot, problem);
    if pot.residual <= tol {
        Ok(pot)
    } else {
        Err(Error::SinkhornStalled(Box::new(pot)))
    }
}

/// `∫log h dν` over the points charged by `ν`.
fn log_integral(h: &[f64], nu: &FiniteMeasure) -> f64 {
    h.iter()
        .zip(nu.weights())
        .filter(|(_, w)| **w > 0.0)
        .map(|(x, w)| w * x.ln())
        .sum()
}

fn gauge(pot: &mut BridgePotentials, problem: &BridgeProblem) {
    let a = log_integral(&pot.f, &problem.nu0);
    let b = log_integral(&pot.g, &problem.nu1);
    let c = (0.5 * (b - a)).exp();
    if c.is_finite() && c > 0.0 {
        pot.f.iter_mut().for_each(|x| *x *= c);
        pot.g.iter_mut().for_each(|x| *x /= c);
    }
}

/// The coupling with density `f(u)g(v)` against `μ₀,₁`, normalized.
pub fn bridge_measure(problem: &BridgeProblem, potentials: &BridgePotentials) -> Result<FiniteMeasure> {
    if potentials.f.len() != problem.mu0.len() || potentials.g.len() != problem.mu1.len() {
        return Err(Error::InvalidArgument("potentials do not match the grid".into()));
    }
    problem.joint_with(|u, v| potentials.f[u] * potentials.g[v])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BridgeEntropy {
    /// `H(μ*₀,₁ | μ₀,₁)` summed directly.
    pub direct: f64,
    /// `∫log f dν₀ + ∫log g dν₁`.
    pub potentials: f64,
}

pub fn bridge_entropy(problem: &BridgeProblem, potentials: &BridgePotentials) -> Result<BridgeEntropy> {
    let bridge = bridge_measure(problem, potentials)?;
    let reference = problem.reference_joint()?;
    Ok(BridgeEntropy {
        direct: relative_entropy(&bridge, &reference)?,
        potentials: log_integral(&potentials.f, &problem.nu0) + log_integral(&potentials.g, &problem.nu1),
    })
}

/// Discretized Brownian pair on a strictly increasing grid with time gap
/// `t`: the kernel `K(u,v) ∝ exp(−(v−u)²/2t)` is row-normalized,
/// `μ₁ = μ₀K` and `p = K/μ₁`. Targets are set to the references.
pub fn gaussian_reference(grid: &[f64], t: f64, mu0: &FiniteMeasure) -> Result<BridgeProblem> {
    if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "grid must be strictly increasing with at least two points".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("variance must be positive".into()));
    }
    if mu0.len() != grid.len() {
        return Err(Error::InvalidArgument("initial law does not match the grid".into()));
    }
    let n = grid.len();
    let kernel: Vec<Vec<f64>> = grid
        .iter()
        .map(|u| {
            let row: Vec<f64> = grid.iter().map(|v| (-(v - u) * (v - u) / (2.0 * t)).exp()).collect();
            let s: f64 = row.iter().sum();
            row.into_iter().map(|x| x / s).collect()
        })
        .collect();
    let mu1w: Vec<f64> = (0..n)
        .map(|v| (0..n).map(|u| mu0.weights()[u] * kernel[u][v]).sum())
        .collect();
    let mu1 = FiniteMeasure::from_unnormalized(mu0.space().clone(), mu1w)?;
    let p: Vec<Vec<f64>> = kernel
        .iter()
        .map(|row| row.iter().zip(mu1.weights()).map(|(k, m)| k / m).collect())
        .collect();
    BridgeProblem::new(mu0.clone(), mu1.clone(), p, mu0.clone(), mu1)
}

/// Iterative proportional fitting of a positive matrix (row-major `a × b`)
/// to the marginals `r` and `c`; the result is a coupling of `r` and `c`
/// up to `tol` in the largest marginal violation.
pub fn fit_coupling(mut m: Vec<Vec<f64>>, r: &[f64], c: &[f64], tol: f64, max_iter: usize) -> Result<Vec<Vec<f64>>> {
    for _ in 0..max_iter {
        for (row, ri) in m.iter_mut().zip(r) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|x| *x *= ri / s);
        }
        let mut worst = 0.0f64;
        for (j, cj) in c.iter().enumerate() {
            let s: f64 = m.iter().map(|row| row[j]).sum();
            m.iter_mut().for_each(|row| row[j] *= cj / s);
        }
        for (row, ri) in m.iter().zip(r) {
            worst = worst.max((row.iter().sum::<f64>() - ri).abs());
        }
        if worst <= tol {
            return Ok(m);
        }
    }
    Err(Error::NotConverged {
        iterations: max_iter,
        residual: f64::NAN,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMetric {
    #[default]
    Fm,
    Prohorov,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub n: u64,
    pub epsilon: f64,
    /// Fraction of trials with `d(L_n, ν) ≤ ε_n`.
    pub probability: f64,
}

/// Monte Carlo estimate of `P(d(L_n, ν) ≤ ε_n)` for `n` in `n_list`.
pub fn marginal_schedule_check(
    nu: &FiniteMeasure,
    metric: MarginalMetric,
    epsilon_fn: &(dyn Fn(u64) -> f64 + Sync),
    n_list: &[u64],
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<Vec<ScheduleRow>> {
    let cdf = crate::gibbs::cdf_of(nu);
    n_list
        .iter()
        .map(|&n| {
            let eps = epsilon_fn(n);
            let parts = run_partitioned(seed ^ n, trials, workers, |rng, chunk| -> Result<u64> {
                let mut hits = 0;
                let mut counts = vec![0u64; nu.len()];
                for _ in 0..chunk {
                    counts.iter_mut().for_each(|c| *c = 0);
                    for _ in 0..n {
                        counts[crate::gibbs::draw(&cdf, rng)] += 1;
                    }
                    let emp = FiniteMeasure::empirical(nu.space().clone(), &counts)?;
                    let d = match metric {
                        MarginalMetric::Fm => fm_distance(&emp, nu)?,
                        MarginalMetric::Prohorov => prohorov_distance(&emp, nu)?.value,
                    };
                    if d <= eps {
                        hits += 1;
                    }
                }
                Ok(hits)
            });
            let hits: u64 = parts.into_iter().sum::<Result<u64>>()?;
            Ok(ScheduleRow {
                n,
                epsilon: eps,
                probability: hits as f64 / trials as f64,
            })
        })
        .collect()
}

/// A random positive `a × b` matrix with entries in `[0.05, 1)`.
pub fn random_positive_matrix(a: usize, b: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..a)
        .map(|_| (0..b).map(|_| rng.random_range(0.05..1.0)).collect())
        .collect()
}
