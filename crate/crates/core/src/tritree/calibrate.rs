//! Minimum-entropy volatility calibration on the tree.
//!
//! Minimizes `H(Q^n_{σ_θ,b0} | Q^n_{σ0,b0})` over a low-dimensional family
//! `θ ↦ σ_θ` subject to `|E[F_i(X_{t_i})] − target_i| ≤ ε`. One parameter:
//! a 65-point sweep locates the feasible intervals, their ends are bisected
//! to 1e-12 and the entropy is golden-sectioned inside each to 1e-6. More
//! parameters: coordinate descent with the same line search.

use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::entropy::{chain_on_tree, i_rate};
use super::{build_tree, expectation, LatticeSpec, Payoff, SigmaField, VolSurface};
use crate::error::{Error, Result};

const SWEEP_POINTS: usize = 65;
const BOUNDARY_TOL: f64 = 1e-12;
const THETA_TOL: f64 = 1e-6;
const MAX_SWEEPS: usize = 50;
/// Rounding allowance on the band `|E − target| ≤ ε`.
const FEAS_TOL: f64 = 1e-10;

/// `E[payoff(X_maturity)] = target`; the maturity is rounded to the
/// nearest level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub payoff: Payoff,
    #[serde(default = "one")]
    pub maturity: f64,
    #[serde(default = "one")]
    pub target: f64,
}

fn one() -> f64 {
    1.0
}

/// Parametrized volatility families on `[lo, hi]` per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Family {
    Constant {
        lo: f64,
        hi: f64,
    },
    /// `p` values on equal time pieces.
    PiecewiseTime {
        pieces: usize,
        lo: f64,
        hi: f64,
    },
}

impl Family {
    pub fn dim(&self) -> usize {
        match self {
            Family::Constant { .. } => 1,
            Family::PiecewiseTime { pieces, .. } => *pieces,
        }
    }

    pub fn bounds(&self) -> (f64, f64) {
        match *self {
            Family::Constant { lo, hi } | Family::PiecewiseTime { lo, hi, .. } => (lo, hi),
        }
    }

    pub fn field(&self, theta: &[f64]) -> SigmaField {
        match self {
            Family::Constant { .. } => SigmaField::constant(theta[0]),
            Family::PiecewiseTime { .. } => SigmaField::PiecewiseTime { values: theta.to_vec() },
        }
    }
}

/// What calibration minimizes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Level-`n` tree entropy.
    #[default]
    TreeEntropy,
    /// `n·I_n(σ_θ|σ0)`, the rate-based cross-check.
    IRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibProblem {
    pub sigma0: SigmaField,
    pub constraints: Vec<Constraint>,
    pub family: Family,
    #[serde(default)]
    pub objective: Objective,
}

impl CalibProblem {
    /// One terminal constraint `E[F(X_1)] = 1`.
    pub fn terminal(sigma0: SigmaField, payoff: Payoff, family: Family) -> Self {
        Self {
            sigma0,
            constraints: vec![Constraint {
                payoff,
                maturity: 1.0,
                target: 1.0,
            }],
            family,
            objective: Objective::TreeEntropy,
        }
    }

    fn validate(&self, spec: &LatticeSpec) -> Result<()> {
        spec.validate()?;
        let (lo, hi) = self.family.bounds();
        if !(spec.sigma_min <= lo && lo < hi && hi <= spec.sigma_max) || self.family.dim() == 0 {
            return Err(Error::InvalidArgument(format!(
                "family range [{lo}, {hi}] must be a nonempty subinterval of [sigma_min, sigma_max]"
            )));
        }
        if self.constraints.is_empty() {
            return Err(Error::InvalidArgument("at least one constraint is needed".into()));
        }
        if self.constraints.iter().any(|c| !(0.0..=1.0).contains(&c.maturity)) {
            return Err(Error::InvalidArgument("maturities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibResult {
    pub theta_star: Vec<f64>,
    pub sigma_star: SigmaField,
    /// Tree entropy at `θ*`.
    pub entropy: f64,
    pub entropy_per_step: f64,
    /// `E[F_i(X_{t_i})]` at `θ*`.
    pub moments: Vec<f64>,
    /// `max_i |E[F_i] − target_i|`.
    pub slack: f64,
    pub evaluations: u64,
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    objective: f64,
    entropy: f64,
    slack: f64,
    /// Signed residual of each constraint, the first two kept.
    signs: [f64; 2],
}

struct Evaluator<'a> {
    problem: &'a CalibProblem,
    spec: LatticeSpec,
    surface0: VolSurface,
    eps: f64,
    count: AtomicU64,
}

impl Evaluator<'_> {
    fn eval(&self, theta: &[f64]) -> Result<(Eval, Vec<f64>)> {
        self.count.fetch_add(1, Ordering::Relaxed);
        let field = self.problem.family.field(theta);
        let surface = VolSurface::from_field(&self.spec, &field);
        let tree = build_tree(&surface, &self.spec)?;
        let entropy = chain_on_tree(&tree, &self.surface0)?;
        let objective = match self.problem.objective {
            Objective::TreeEntropy => entropy,
            Objective::IRate => self.spec.n as f64 * i_rate(&field, &self.problem.sigma0, &self.spec, self.spec.n)?,
        };
        let mut moments = Vec::with_capacity(self.problem.constraints.len());
        let mut signs = [0.0; 2];
        let mut slack: f64 = 0.0;
        for (i, c) in self.problem.constraints.iter().enumerate() {
            let k = (c.maturity * self.spec.n as f64).round() as usize;
            let v = expectation(&tree, |x| c.payoff.eval(x), k)?;
            if i < 2 {
                signs[i] = v - c.target;
            }
            slack = slack.max((v - c.target).abs());
            moments.push(v);
        }
        Ok((
            Eval {
                objective,
                entropy,
                slack,
                signs,
            },
            moments,
        ))
    }

    fn feasible(&self, e: &Eval) -> bool {
        e.slack <= self.eps + FEAS_TOL
    }
}

/// Best feasible point seen so far.
struct Best {
    theta: Vec<f64>,
    eval: Eval,
}

fn consider(best: &mut Option<Best>, ev: &Evaluator, theta: Vec<f64>, e: Eval) {
    if !ev.feasible(&e) {
        return;
    }
    let better = match best {
        None => true,
        Some(b) => e.objective < b.eval.objective || (e.objective == b.eval.objective && theta < b.theta),
    };
    if better {
        *best = Some(Best { theta, eval: e });
    }
}

/// Line search along coordinate `i` of `base` over `[lo, hi]`.
fn line_search(ev: &Evaluator, base: &[f64], i: usize, best: &mut Option<Best>) -> Result<()> {
    let (lo, hi) = ev.problem.family.bounds();
    let at = |x: f64| {
        let mut t = base.to_vec();
        t[i] = x;
        t
    };
    let f = |x: f64| -> Result<Eval> { ev.eval(&at(x)).map(|r| r.0) };

    let grid: Vec<f64> = (0..SWEEP_POINTS)
        .map(|g| lo + (hi - lo) * g as f64 / (SWEEP_POINTS - 1) as f64)
        .collect();
    let evals: Vec<Eval> = grid.par_iter().map(|x| f(*x)).collect::<Result<_>>()?;
    for (x, e) in grid.iter().zip(&evals) {
        consider(best, ev, at(*x), *e);
    }

    // Feasible intervals as (left, right) pairs, ends refined by bisection.
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let feas: Vec<bool> = evals.iter().map(|e| ev.feasible(e)).collect();
    let bisect = |mut inside: f64, mut outside: f64| -> Result<f64> {
        while (inside - outside).abs() > BOUNDARY_TOL {
            let mid = 0.5 * (inside + outside);
            if ev.feasible(&f(mid)?) {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        Ok(inside)
    };
    let mut g = 0;
    while g < grid.len() {
        if feas[g] {
            let start = g;
            while g + 1 < grid.len() && feas[g + 1] {
                g += 1;
            }
            let l = if start > 0 {
                bisect(grid[start], grid[start - 1])?
            } else {
                grid[start]
            };
            let r = if g + 1 < grid.len() {
                bisect(grid[g], grid[g + 1])?
            } else {
                grid[g]
            };
            intervals.push((l, r));
        }
        g += 1;
    }
    // Narrow feasible pockets between two infeasible grid points: look where
    // a residual changes sign or the slack has a local minimum.
    for g in 0..grid.len() - 1 {
        if feas[g] || feas[g + 1] {
            continue;
        }
        let (a, b) = (&evals[g], &evals[g + 1]);
        let crossing = a.signs.iter().zip(&b.signs).any(|(x, y)| x * y < 0.0);
        let local_min =
            (g == 0 || evals[g - 1].slack >= a.slack) && b.slack <= evals.get(g + 2).map_or(f64::INFINITY, |c| c.slack);
        if !(crossing || local_min) {
            continue;
        }
        let (x, e) = golden(grid[g], grid[g + 1], BOUNDARY_TOL, |x| f(x).map(|e| e.slack))?;
        if e <= ev.eps + FEAS_TOL {
            let l = bisect(x, grid[g])?;
            let r = bisect(x, grid[g + 1])?;
            intervals.push((l, r));
        }
    }

    for (l, r) in intervals {
        for x in [l, r] {
            consider(best, ev, at(x), f(x)?);
        }
        if r - l > THETA_TOL {
            let (x, _) = golden(l, r, THETA_TOL, |x| f(x).map(|e| e.objective))?;
            consider(best, ev, at(x), f(x)?);
        }
    }
    Ok(())
}

/// Golden-section minimization of `g` on `[a, b]` to width `tol`.
fn golden(mut a: f64, mut b: f64, tol: f64, g: impl Fn(f64) -> Result<f64>) -> Result<(f64, f64)> {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut gc, mut gd) = (g(c)?, g(d)?);
    while b - a > tol {
        if gc <= gd {
            b = d;
            d = c;
            gd = gc;
            c = b - r * (b - a);
            gc = g(c)?;
        } else {
            a = c;
            c = d;
            gc = gd;
            d = a + r * (b - a);
            gd = g(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, g(x)?))
}

/// Minimum-entropy member of the family within the moment band `ε`.
pub fn calibrate(problem: &CalibProblem, spec: &LatticeSpec, epsilon: f64) -> Result<CalibResult> {
    problem.validate(spec)?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be nonnegative, got {epsilon}"
        )));
    }
    let ev = Evaluator {
        problem,
        spec: *spec,
        surface0: VolSurface::from_field(spec, &problem.sigma0),
        eps: epsilon,
        count: Default::default(),
    };
    let p = problem.family.dim();
    let mut best: Option<Best> = None;

    // Constant start, then coordinate sweeps for piecewise families.
    let (lo, hi) = problem.family.bounds();
    if p == 1 {
        line_search(&ev, &[lo], 0, &mut best)?;
    } else {
        let diagonal = CalibProblem {
            family: Family::Constant { lo, hi },
            ..problem.clone()
        };
        let dev = Evaluator {
            problem: &diagonal,
            spec: *spec,
            surface0: ev.surface0.clone(),
            eps: epsilon,
            count: Default::default(),
        };
        let mut start: Option<Best> = None;
        line_search(&dev, &[lo], 0, &mut start)?;
        ev.count.fetch_add(dev.count.load(Ordering::Relaxed), Ordering::Relaxed);
        if let Some(s) = start {
            let theta = vec![s.theta[0]; p];
            let e = ev.eval(&theta)?.0;
            consider(&mut best, &ev, theta, e);
        }
        for _ in 0..MAX_SWEEPS {
            let Some(before) = best.as_ref().map(|b| b.theta.clone()) else {
                break;
            };
            for i in 0..p {
                let base = best.as_ref().expect("kept").theta.clone();
                line_search(&ev, &base, i, &mut best)?;
            }
            let after = &best.as_ref().expect("kept").theta;
            if before.iter().zip(after).all(|(a, b)| (a - b).abs() < THETA_TOL) {
                break;
            }
        }
    }

    let best = best.ok_or_else(|| Error::Infeasible {
        reason: format!(
            "no member of the family meets the band epsilon = {epsilon} at n = {}",
            spec.n
        ),
        certificate: Vec::new(),
    })?;
    let (e, moments) = ev.eval(&best.theta)?;
    Ok(CalibResult {
        sigma_star: problem.family.field(&best.theta),
        theta_star: best.theta,
        entropy: e.entropy,
        entropy_per_step: e.entropy / spec.n as f64,
        moments,
        slack: e.slack,
        evaluations: ev.count.load(Ordering::Relaxed),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub points: usize,
    pub feasible: usize,
    /// Feasible points with entropy below the calibrated value by more than
    /// 1e-9.
    pub improvements: usize,
    pub best_feasible_entropy: Option<f64>,
    pub ok: bool,
}

/// Re-evaluates `points` parameters (a uniform grid for one parameter, a
/// Halton sequence in the box otherwise) and counts feasible ones that beat
/// the calibrated entropy.
pub fn audit(
    problem: &CalibProblem,
    spec: &LatticeSpec,
    epsilon: f64,
    result: &CalibResult,
    points: usize,
) -> Result<AuditReport> {
    problem.validate(spec)?;
    let ev = Evaluator {
        problem,
        spec: *spec,
        surface0: VolSurface::from_field(spec, &problem.sigma0),
        eps: epsilon,
        count: Default::default(),
    };
    let (lo, hi) = problem.family.bounds();
    let p = problem.family.dim();
    let thetas: Vec<Vec<f64>> = (0..points)
        .map(|i| {
            if p == 1 {
                vec![lo + (hi - lo) * i as f64 / (points.max(2) - 1) as f64]
            } else {
                (0..p)
                    .map(|d| lo + (hi - lo) * halton(i + 1, PRIMES[d % PRIMES.len()]))
                    .collect()
            }
        })
        .collect();
    let evals: Vec<Eval> = thetas
        .par_iter()
        .map(|t| ev.eval(t).map(|r| r.0))
        .collect::<Result<_>>()?;
    let feasible: Vec<&Eval> = evals.iter().filter(|e| ev.feasible(e)).collect();
    let improvements = feasible.iter().filter(|e| e.entropy < result.entropy - 1e-9).count();
    Ok(AuditReport {
        points,
        feasible: feasible.len(),
        improvements,
        best_feasible_entropy: feasible.iter().map(|e| e.entropy).reduce(f64::min),
        ok: improvements == 0,
    })
}

const PRIMES: [usize; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

fn halton(mut i: usize, base: usize) -> f64 {
    let (mut f, mut r) = (1.0, 0.0);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// `min(|E^n_{σ*,b0}[F(X_1)] − 1| + 1/n, s)`.
pub fn epsilon0(sigma_star: &VolSurface, spec: &LatticeSpec, payoff: &Payoff) -> Result<f64> {
    let tree = build_tree(sigma_star, spec)?;
    let v = expectation(&tree, |x| payoff.eval(x), spec.n)?;
    Ok(((v - 1.0).abs() + 1.0 / spec.n as f64).min(spec.s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize) -> LatticeSpec {
        LatticeSpec::new(n, 2.0, 0.5, 1.5, 0.1, 0.05).unwrap()
    }

    fn square_payoff(spec: &LatticeSpec, sigma: f64) -> Payoff {
        let tree = build_tree(&VolSurface::constant(spec, sigma, spec.b0), spec).unwrap();
        let v = expectation(&tree, |x| x * x, spec.n).unwrap();
        Payoff::Power {
            exponent: 2,
            scale: 1.0 / v,
        }
    }

    #[test]
    fn self_calibration() {
        let s = spec(32);
        let payoff = square_payoff(&s, 1.0);
        let problem = CalibProblem::terminal(SigmaField::constant(1.0), payoff, Family::Constant { lo: 0.6, hi: 1.4 });
        for eps in [0.0, 0.05] {
            let r = calibrate(&problem, &s, eps).unwrap();
            assert!((r.theta_star[0] - 1.0).abs() < 1e-6, "{r:?}");
            assert!(r.entropy < 1e-10);
        }
    }

    #[test]
    fn forward_then_invert() {
        let s = spec(64);
        let payoff = square_payoff(&s, 1.1);
        let problem = CalibProblem::terminal(
            SigmaField::constant(1.2),
            payoff,
            Family::Constant { lo: 0.6, hi: 1.45 },
        );
        let r = calibrate(&problem, &s, 1e-3).unwrap();
        assert!((r.theta_star[0] - 1.1).abs() < 0.05, "{r:?}");
        assert!(r.slack <= 1e-3 + 1e-10);
        let a = audit(&problem, &s, 1e-3, &r, 200).unwrap();
        assert!(a.ok, "{a:?}");
    }

    #[test]
    fn piecewise_family_improves_on_constant() {
        let s = spec(16);
        let payoff = square_payoff(&s, 1.1);
        let sigma0 = SigmaField::PiecewiseTime { values: vec![1.0, 1.3] };
        let constant = calibrate(
            &CalibProblem::terminal(sigma0.clone(), payoff, Family::Constant { lo: 0.6, hi: 1.45 }),
            &s,
            0.01,
        )
        .unwrap();
        let pw = CalibProblem::terminal(
            sigma0,
            payoff,
            Family::PiecewiseTime {
                pieces: 2,
                lo: 0.6,
                hi: 1.45,
            },
        );
        let r = calibrate(&pw, &s, 0.01).unwrap();
        assert!(r.entropy <= constant.entropy + 1e-12);
        assert!(r.slack <= 0.01 + 1e-10);
        assert!(audit(&pw, &s, 0.01, &r, 200).unwrap().ok);
    }

    #[test]
    fn infeasible_band() {
        let s = spec(16);
        let payoff = Payoff::Power {
            exponent: 2,
            scale: 100.0,
        };
        let problem = CalibProblem::terminal(SigmaField::constant(1.0), payoff, Family::Constant { lo: 0.6, hi: 1.4 });
        assert!(matches!(calibrate(&problem, &s, 0.01), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn epsilon0_examples() {
        let s = LatticeSpec::new(100, 2.0, 0.5, 1.5, 0.3, 0.25).unwrap();
        let surf = VolSurface::constant(&s, 1.0, 0.3);
        let tree = build_tree(&surf, &s).unwrap();
        let v = expectation(&tree, |x| x * x, 100).unwrap();
        let exact = Payoff::Power {
            exponent: 2,
            scale: 1.0 / v,
        };
        assert!((epsilon0(&surf, &s, &exact).unwrap() - 0.01).abs() < 1e-12);
        let off = Payoff::Power {
            exponent: 2,
            scale: 1.02 / v,
        };
        assert!((epsilon0(&surf, &s, &off).unwrap() - 0.03).abs() < 1e-12);
        let far = Payoff::Power {
            exponent: 2,
            scale: 3.0 / v,
        };
        assert_eq!(epsilon0(&surf, &s, &far).unwrap(), 0.25);
    }
}
