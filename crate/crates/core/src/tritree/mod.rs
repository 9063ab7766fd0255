//! Trinomial trees and relative-entropy volatility calibration.
//!
//! Level `n` lattice: node `(k, j)` with `|j| ≤ k ≤ n` sits at time `k/n`
//! and position `jα/√n`. From each node the walk moves up, stays or moves
//! down with probabilities
//!
//! ```text
//! m = σ²/(2α²) + b/(2α√n),   r = 1 − σ²/α²,   d = σ²/(2α²) − b/(2α√n),
//! ```
//!
//! so each step has mean `b/n` and variance `σ²/n − b²/n²`.

mod calibrate;
mod entropy;
mod recover;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use calibrate::{audit, calibrate, epsilon0, AuditReport, CalibProblem, CalibResult, Constraint, Family};
pub use entropy::{
    dl_gap, entropy_decomposition_check, i_rate, local_entropy, q_rate, tree_entropy_chain, tree_entropy_paths,
    trinomial_weak_convergence_probe, DlGap, PathMeasure, ProbeRow, MAX_PATH_LEVEL,
};
pub use recover::{
    gibbs_tree_mc, lattice_modulus, recover_coefficients, GibbsTreeReport, Membership, MembershipReport, Modulus,
    TwoTimeMarginals, DEFAULT_REL_TOL,
};

/// Lattice parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub n: usize,
    /// Space scale `α`; must exceed `σ_max`.
    pub alpha: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// Reference drift.
    pub b0: f64,
    /// Drift half-width.
    pub s: f64,
}

impl LatticeSpec {
    /// Checks `0 < σ_min ≤ σ_max < α`, `0 ≤ s < b0` (or `s = b0 = 0`) and
    /// `n ≥ 1`. The level bound `n ≥ n0` is checked separately by
    /// [`LatticeSpec::check_level`].
    pub fn new(n: usize, alpha: f64, sigma_min: f64, sigma_max: f64, b0: f64, s: f64) -> Result<Self> {
        let spec = Self {
            n,
            alpha,
            sigma_min,
            sigma_max,
            b0,
            s,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("lattice level must be positive".into()));
        }
        if !(0.0 < self.sigma_min && self.sigma_min <= self.sigma_max && self.sigma_max < self.alpha) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < sigma_min <= sigma_max < alpha, got {} {} {}",
                self.sigma_min, self.sigma_max, self.alpha
            )));
        }
        if !(self.s >= 0.0 && (self.s < self.b0 || (self.s == 0.0 && self.b0 == 0.0))) {
            return Err(Error::InvalidArgument(format!(
                "need 0 <= s < b0, got s={} b0={}",
                self.s, self.b0
            )));
        }
        Ok(())
    }

    /// Errors when `n < n0`.
    pub fn check_level(&self) -> Result<()> {
        let n0 = min_level_n0(self);
        if self.n < n0 {
            return Err(Error::InvalidArgument(format!("level n={} is below n0={n0}", self.n)));
        }
        Ok(())
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..*self }
    }

    /// Position of lattice index `j`.
    pub fn x(&self, j: i64) -> f64 {
        j as f64 * self.alpha / (self.n as f64).sqrt()
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 / self.n as f64
    }
}

/// Transition triple `(m, r, d)` (up, stay, down) at volatility `y` and
/// drift `z`.
pub fn kernel(y: f64, z: f64, spec: &LatticeSpec) -> Result<(f64, f64, f64)> {
    let (m, r, d) = raw_kernel(y, z, spec.alpha, spec.n);
    if m < 0.0 || r < 0.0 || d < 0.0 {
        return Err(Error::NegativeKernel {
            n: spec.n,
            sigma: y,
            drift: z,
        });
    }
    Ok((m, r, d))
}

pub(crate) fn raw_kernel(y: f64, z: f64, alpha: f64, n: usize) -> (f64, f64, f64) {
    let a2 = alpha * alpha;
    let half = y * y / (2.0 * a2);
    let tilt = z / (2.0 * alpha * (n as f64).sqrt());
    (half + tilt, 1.0 - y * y / a2, half - tilt)
}

/// Smallest level with `m, d > 0` over the whole coefficient rectangle:
/// `⌊(α(b0+s)/σ_min²)²⌋ + 1`.
pub fn min_level_n0(spec: &LatticeSpec) -> usize {
    let v = spec.alpha * (spec.b0 + spec.s) / (spec.sigma_min * spec.sigma_min);
    (v * v).floor() as usize + 1
}

/// Volatility as a function of `(t, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaField {
    Constant {
        value: f64,
    },
    /// `values[i]` on `[i/p, (i+1)/p)` with `p = values.len()`.
    PiecewiseTime {
        values: Vec<f64>,
    },
    /// `clamp(base + slope_t·t + slope_x·x, lo, hi)`.
    LocalLinear {
        base: f64,
        slope_t: f64,
        slope_x: f64,
        lo: f64,
        hi: f64,
    },
}

impl SigmaField {
    pub fn constant(value: f64) -> Self {
        Self::Constant { value }
    }

    pub fn at(&self, t: f64, x: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::PiecewiseTime { values } => {
                let p = values.len();
                let i = ((t * p as f64).floor() as usize).min(p - 1);
                values[i]
            }
            Self::LocalLinear {
                base,
                slope_t,
                slope_x,
                lo,
                hi,
            } => (base + slope_t * t + slope_x * x).clamp(*lo, *hi),
        }
    }
}

/// Node-indexed coefficient tables: `sigma[k][j + k]` and `b[k][j + k]` for
/// `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolSurface {
    pub n: usize,
    pub sigma: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

impl VolSurface {
    pub fn constant(spec: &LatticeSpec, sigma: f64, b: f64) -> Self {
        Self::from_fn(spec, |_, _| (sigma, b))
    }

    /// Tables from a function of `(t, x)`.
    pub fn from_fn(spec: &LatticeSpec, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        let mut sigma = Vec::with_capacity(spec.n + 1);
        let mut b = Vec::with_capacity(spec.n + 1);
        for k in 0..=spec.n {
            let (s, d): (Vec<f64>, Vec<f64>) = (-(k as i64)..=k as i64).map(|j| f(spec.t(k), spec.x(j))).unzip();
            sigma.push(s);
            b.push(d);
        }
        Self { n: spec.n, sigma, b }
    }

    /// Volatility field with drift held at `b0`.
    pub fn from_field(spec: &LatticeSpec, field: &SigmaField) -> Self {
        Self::from_fn(spec, |t, x| (field.at(t, x), spec.b0))
    }

    /// Validates table shapes.
    pub fn from_tables(n: usize, sigma: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> Result<Self> {
        let ok = |t: &Vec<Vec<f64>>| t.len() == n + 1 && t.iter().enumerate().all(|(k, r)| r.len() == 2 * k + 1);
        if !ok(&sigma) || !ok(&b) {
            return Err(Error::InvalidArgument(
                "surface tables must have 2k+1 entries at level k = 0..=n".into(),
            ));
        }
        Ok(Self { n, sigma, b })
    }

    pub fn sigma_at(&self, k: usize, j: i64) -> f64 {
        self.sigma[k][(j + k as i64) as usize]
    }

    pub fn b_at(&self, k: usize, j: i64) -> f64 {
        self.b[k][(j + k as i64) as usize]
    }

    /// Checks `σ ∈ [σ_min, σ_max]` and `b ∈ [b0 − s, b0 + s]` on levels
    /// `0..n`. Closed ranges, so calibration may sit on a family bound.
    pub fn check_ranges(&self, spec: &LatticeSpec) -> Result<()> {
        for k in 0..self.n {
            for (i, (s, b)) in self.sigma[k].iter().zip(&self.b[k]).enumerate() {
                let j = i as i64 - k as i64;
                if !(spec.sigma_min..=spec.sigma_max).contains(s) {
                    return Err(Error::InvalidArgument(format!(
                        "sigma {s} out of range at node ({k}, {j})"
                    )));
                }
                if !(spec.b0 - spec.s..=spec.b0 + spec.s).contains(b) {
                    return Err(Error::InvalidArgument(format!(
                        "drift {b} out of range at node ({k}, {j})"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Node marginals and transition triples of the tree measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TrinomialTree {
    pub spec: LatticeSpec,
    /// `node_prob[k][j + k] = P(X_{k/n} = jα/√n)`, `k = 0..=n`.
    pub node_prob: Vec<Vec<f64>>,
    /// `(m, r, d)` at node `(k, j)`, `k = 0..n`.
    pub transitions: Vec<Vec<(f64, f64, f64)>>,
}

impl TrinomialTree {
    pub fn prob(&self, k: usize, j: i64) -> f64 {
        self.node_prob[k][(j + k as i64) as usize]
    }

    pub fn transition(&self, k: usize, j: i64) -> (f64, f64, f64) {
        self.transitions[k][(j + k as i64) as usize]
    }
}

/// Forward induction from `δ₀`.
pub fn build_tree(surface: &VolSurface, spec: &LatticeSpec) -> Result<TrinomialTree> {
    if surface.n != spec.n {
        return Err(Error::InvalidArgument(format!(
            "surface level {} vs spec level {}",
            surface.n, spec.n
        )));
    }
    let n = spec.n;
    let mut node_prob = vec![vec![1.0]];
    let mut transitions = Vec::with_capacity(n);
    for k in 0..n {
        let row: Vec<(f64, f64, f64)> = surface.sigma[k]
            .iter()
            .zip(&surface.b[k])
            .map(|(s, b)| kernel(*s, *b, spec))
            .collect::<Result<_>>()?;
        let mut next = vec![0.0; 2 * k + 3];
        for (i, (p, (m, r, d))) in node_prob[k].iter().zip(&row).enumerate() {
            // node (k, j) with i = j + k goes to next index i + 1 + {+1, 0, −1}
            next[i + 2] += p * m;
            next[i + 1] += p * r;
            next[i] += p * d;
        }
        node_prob.push(next);
        transitions.push(row);
    }
    Ok(TrinomialTree {
        spec: *spec,
        node_prob,
        transitions,
    })
}

/// `Σ_j P(X_{k/n} = x_j)·payoff(x_j)`.
pub fn expectation(tree: &TrinomialTree, payoff: impl Fn(f64) -> f64, k: usize) -> Result<f64> {
    if k > tree.spec.n {
        return Err(Error::InvalidArgument(format!("level {k} beyond n = {}", tree.spec.n)));
    }
    Ok(tree.node_prob[k]
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > 0.0)
        .map(|(i, p)| p * payoff(tree.spec.x(i as i64 - k as i64)))
        .sum())
}

/// Terminal payoffs `scale·f(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payoff {
    Power { exponent: i32, scale: f64 },
    Call { strike: f64, scale: f64 },
    Put { strike: f64, scale: f64 },
}

impl Payoff {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Payoff::Power { exponent, scale } => scale * x.powi(exponent),
            Payoff::Call { strike, scale } => scale * (x - strike).max(0.0),
            Payoff::Put { strike, scale } => scale * (strike - x).max(0.0),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        match *self {
            Payoff::Power { exponent, scale } => Payoff::Power {
                exponent,
                scale: scale * factor,
            },
            Payoff::Call { strike, scale } => Payoff::Call {
                strike,
                scale: scale * factor,
            },
            Payoff::Put { strike, scale } => Payoff::Put {
                strike,
                scale: scale * factor,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> LatticeSpec {
        LatticeSpec::new(n, 2.0, 0.5, 1.5, 0.5, 0.25).unwrap()
    }

    #[test]
    fn kernel_example() {
        let s = LatticeSpec::new(100, 2.0, 0.5, 1.5, 0.5, 0.25).unwrap();
        let (m, r, d) = kernel(1.0, 0.1, &s).unwrap();
        assert!((m - 0.1275).abs() < 1e-15);
        assert!((r - 0.75).abs() < 1e-15);
        assert!((d - 0.1225).abs() < 1e-15);
        let (m, _, d) = kernel(1.3, 0.0, &s).unwrap();
        assert_eq!(m, d);
    }

    #[test]
    fn kernel_sums_to_one() {
        for &(y, z) in &[(0.5, 0.25), (1.49, 0.7), (1.0, -0.3)] {
            let (m, r, d) = raw_kernel(y, z, 2.0, 50);
            assert!((m + r + d - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn n0_example_and_boundary() {
        let s = spec(37);
        assert_eq!(min_level_n0(&s), 37);
        let (m, r, d) = kernel(0.5, 0.75, &s).unwrap();
        assert!(m > 0.0 && r > 0.0 && d > 0.0);
        let (m, _, d) = raw_kernel(0.5, 0.75, 2.0, 36);
        assert!(!(m > 0.0 && d > 0.0));
        let flat = LatticeSpec::new(1, 2.0, 0.5, 1.5, 0.0, 0.0).unwrap();
        assert_eq!(min_level_n0(&flat), 1);
    }

    #[test]
    fn level_sums_and_single_step() {
        let s = LatticeSpec::new(512, 2.0, 0.5, 1.5, 0.1, 0.05).unwrap();
        let surf = VolSurface::from_fn(&s, |t, x| (1.0 + 0.2 * (t + x).sin(), 0.1 + 0.03 * x.cos()));
        let tree = build_tree(&surf, &s).unwrap();
        for row in &tree.node_prob {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let one = LatticeSpec::new(1, 2.0, 0.5, 1.5, 0.1, 0.05).unwrap();
        let t1 = build_tree(&VolSurface::constant(&one, 1.2, 0.12), &one).unwrap();
        let (m, r, d) = kernel(1.2, 0.12, &one).unwrap();
        assert_eq!(t1.node_prob[1], vec![d, r, m]);
    }

    #[test]
    fn driftless_tree_is_symmetric() {
        let s = LatticeSpec::new(20, 2.0, 0.5, 1.5, 0.0, 0.0).unwrap();
        let tree = build_tree(&VolSurface::constant(&s, 1.0, 0.0), &s).unwrap();
        for row in &tree.node_prob {
            let l = row.len();
            for i in 0..l {
                assert!((row[i] - row[l - 1 - i]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn moments_of_constant_tree() {
        let s = LatticeSpec::new(64, 2.0, 0.5, 1.5, 0.1, 0.05).unwrap();
        let tree = build_tree(&VolSurface::constant(&s, 1.0, 0.1), &s).unwrap();
        assert!((expectation(&tree, |_| 1.0, 64).unwrap() - 1.0).abs() < 1e-12);
        for k in [1, 10, 64] {
            assert!((expectation(&tree, |x| x, k).unwrap() - k as f64 * 0.1 / 64.0).abs() < 1e-12);
        }
        let d = LatticeSpec::new(64, 2.0, 0.5, 1.5, 0.0, 0.0).unwrap();
        let tree = build_tree(&VolSurface::constant(&d, 1.0, 0.0), &d).unwrap();
        for k in [1, 10, 64] {
            assert!((expectation(&tree, |x| x * x, k).unwrap() - k as f64 / 64.0).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_kernel_is_reported() {
        let s = LatticeSpec::new(4, 2.0, 0.5, 1.5, 0.5, 0.25).unwrap();
        let surf = VolSurface::constant(&s, 0.5, 0.75);
        assert!(matches!(build_tree(&surf, &s), Err(Error::NegativeKernel { .. })));
    }
}
