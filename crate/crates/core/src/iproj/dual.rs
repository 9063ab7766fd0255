//! The convex dual of the moment-constrained entropy minimization.
//!
//! Point targets minimize `Λ(λ) − ⟨λ, x₀⟩` by damped Newton. Box targets
//! minimize `Λ(λ) − inf_{y∈K}⟨λ, y⟩`, which is piecewise smooth: a
//! subgradient phase finds the sign pattern of `λ` (which coordinates sit on
//! which face of the box), Newton polishes on that face, and the KKT
//! conditions are checked. If the pattern guess fails KKT, every pattern is
//! tried in turn; any KKT point is optimal by convexity.

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, DVector};

use super::{covariance, moment, tilted_weights, MomentProblem, Target, TiltedSolution};
use crate::error::{Error, Result};

/// Newton stops once `‖∇Λ(λ) − x₀‖₂` falls below this.
pub const DUAL_GRADIENT_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 200;
const SUBGRADIENT_STEPS: usize = 400;
/// The target must sit this far inside the relative interior (in the weight
/// margin of [`relative_interior_margin`]).
const INTERIOR_TOL: f64 = 1e-10;
/// Slack for the KKT check on box faces.
const KKT_TOL: f64 = 1e-9;

/// Largest `t` such that some `w` with all `w_i ≥ t`, `Σ w_i = 1` (over the
/// support of `α`) has `Σ w_i F_i ∈ K`. Positive exactly when `K` meets the
/// relative interior of the convex hull of the `F`-values; `None` when `K`
/// misses the hull altogether.
pub fn relative_interior_margin(problem: &MomentProblem) -> Option<f64> {
    let support: Vec<usize> = (0..problem.alpha().len())
        .filter(|&i| problem.alpha().weights()[i] > 0.0)
        .collect();
    let f = problem.moment_map();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let t = lp.add_var(1.0, (0.0, 1.0));
    let w: Vec<_> = support.iter().map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    for &wi in &w {
        lp.add_constraint([(wi, 1.0), (t, -1.0)], ComparisonOp::Ge, 0.0);
    }
    let ones: Vec<_> = w.iter().map(|&wi| (wi, 1.0)).collect();
    lp.add_constraint(&ones, ComparisonOp::Eq, 1.0);
    for j in 0..problem.dim() {
        let row: Vec<_> = w.iter().zip(&support).map(|(&wi, &i)| (wi, f[i][j])).collect();
        match problem.target() {
            Target::Point(x) => lp.add_constraint(&row, ComparisonOp::Eq, x[j]),
            Target::Box { lo, hi } => {
                lp.add_constraint(&row, ComparisonOp::Ge, lo[j]);
                lp.add_constraint(&row, ComparisonOp::Le, hi[j]);
            }
        }
    }
    lp.solve().ok().map(|s| s.objective())
}

/// I-projection of `α` onto the moment constraint set.
pub fn solve_dual(problem: &MomentProblem) -> Result<TiltedSolution> {
    match relative_interior_margin(problem) {
        None => {
            return Err(infeasible(
                problem,
                "target set misses the convex hull of the moment values",
            ))
        }
        Some(t) if t <= INTERIOR_TOL => {
            return Err(infeasible(
                problem,
                "target set touches the hull of the moment values only on its relative boundary",
            ))
        }
        Some(_) => {}
    }
    let alpha = problem.alpha().weights();
    let f = problem.moment_map();
    match problem.target() {
        Target::Point(x0) => match newton(alpha, f, x0, vec![0.0; x0.len()]) {
            Ok((lambda, it)) => TiltedSolution::from_lambda(problem, lambda, it),
            Err(e) => Err(e),
        },
        Target::Box { lo, hi } => {
            let base = moment(f, alpha, problem.dim());
            if problem.target().contains(&base, 0.0) {
                return TiltedSolution::from_lambda(problem, vec![0.0; problem.dim()], 0);
            }
            let (guess, sub_it) = subgradient(alpha, f, lo, hi);
            let first = pattern_of(&guess, lo, hi);
            if let Some((lambda, it)) = solve_face(alpha, f, lo, hi, &first) {
                return TiltedSolution::from_lambda(problem, lambda, sub_it + it);
            }
            for pattern in all_patterns(lo, hi) {
                if pattern == first {
                    continue;
                }
                if let Some((lambda, it)) = solve_face(alpha, f, lo, hi, &pattern) {
                    return TiltedSolution::from_lambda(problem, lambda, sub_it + it);
                }
            }
            Err(Error::NotConverged {
                iterations: sub_it,
                residual: f64::NAN,
            })
        }
    }
}

/// `Λ(λ) − ⟨λ, x₀⟩` with gradient and Hessian.
fn point_objective(alpha: &[f64], f: &[Vec<f64>], x0: &[f64], lambda: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let (w, value) = tilted_weights(alpha, f, lambda);
    let m = moment(f, &w, x0.len());
    let h = covariance(f, &w, &m);
    let dot: f64 = lambda.iter().zip(x0).map(|(a, b)| a * b).sum();
    let g = m.iter().zip(x0).map(|(a, b)| a - b).collect();
    (value - dot, g, h)
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Damped Newton with Armijo backtracking. The Hessian may be singular when
/// the moment values span a proper affine subspace; the step then uses the
/// pseudo-inverse, which moves only within that subspace.
fn newton(alpha: &[f64], f: &[Vec<f64>], x0: &[f64], mut lambda: Vec<f64>) -> Result<(Vec<f64>, usize)> {
    let d = x0.len();
    let (mut val, mut g, mut h) = point_objective(alpha, f, x0, &lambda);
    for it in 0..MAX_NEWTON {
        let gn = norm2(&g);
        if gn <= DUAL_GRADIENT_TOL {
            return Ok((lambda, it));
        }
        let hm = DMatrix::from_fn(d, d, |a, b| h[a][b]);
        let scale = hm.amax().max(1e-300);
        let gv = DVector::from_column_slice(&g);
        let mut step: Vec<f64> = match hm.svd(true, true).solve(&gv, 1e-13 * scale) {
            Ok(s) => s.iter().map(|v| -v).collect(),
            Err(_) => g.iter().map(|v| -v).collect(),
        };
        let mut slope: f64 = step.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            step = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = lambda.iter().zip(&step).map(|(l, s)| l + t * s).collect();
            let (tv, tg, th) = point_objective(alpha, f, x0, &trial);
            // Near the optimum the decrease is below rounding; accept any step
            // that shrinks the gradient instead.
            if tv <= val + 1e-4 * t * slope || (tv <= val + 1e-15 * val.abs().max(1.0) && norm2(&tg) < gn) {
                lambda = trial;
                val = tv;
                g = tg;
                h = th;
                break;
            }
            t *= 0.5;
            if t < 1e-20 {
                return Err(Error::NotConverged {
                    iterations: it,
                    residual: gn,
                });
            }
        }
    }
    let gn = norm2(&g);
    if gn <= DUAL_GRADIENT_TOL {
        Ok((lambda, MAX_NEWTON))
    } else {
        Err(Error::NotConverged {
            iterations: MAX_NEWTON,
            residual: gn,
        })
    }
}

/// `Λ(λ) − inf_{y∈K}⟨λ, y⟩` and one subgradient.
fn box_objective(alpha: &[f64], f: &[Vec<f64>], lo: &[f64], hi: &[f64], lambda: &[f64]) -> (f64, Vec<f64>) {
    let (w, value) = tilted_weights(alpha, f, lambda);
    let m = moment(f, &w, lo.len());
    let mut inf = 0.0;
    let mut g = vec![0.0; lo.len()];
    for j in 0..lo.len() {
        let y = if lambda[j] > 0.0 {
            lo[j]
        } else if lambda[j] < 0.0 {
            hi[j]
        } else {
            m[j].clamp(lo[j], hi[j])
        };
        inf += lambda[j] * y;
        g[j] = m[j] - y;
    }
    (value - inf, g)
}

/// Subgradient descent with a Polyak step against a running target
/// `best − δ`; `δ` halves whenever progress stalls.
fn subgradient(alpha: &[f64], f: &[Vec<f64>], lo: &[f64], hi: &[f64]) -> (Vec<f64>, usize) {
    let d = lo.len();
    let mut lambda = vec![0.0; d];
    let (mut best_val, _) = box_objective(alpha, f, lo, hi, &lambda);
    let mut best = lambda.clone();
    let mut delta = 0.1 * (1.0 + best_val.abs());
    let mut stall = 0;
    for it in 0..SUBGRADIENT_STEPS {
        let (val, g) = box_objective(alpha, f, lo, hi, &lambda);
        if val < best_val {
            best_val = val;
            best = lambda.clone();
            stall = 0;
        } else {
            stall += 1;
            if stall >= 10 {
                delta *= 0.5;
                stall = 0;
            }
        }
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg <= DUAL_GRADIENT_TOL * DUAL_GRADIENT_TOL {
            return (lambda, it);
        }
        let step = (val - best_val + delta) / gg;
        for (l, gi) in lambda.iter_mut().zip(&g) {
            *l -= step * gi;
        }
    }
    (best, SUBGRADIENT_STEPS)
}

/// Which face of the box each coordinate of the optimal moment sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Face {
    Free,
    Lo,
    Hi,
    /// `lo = hi`: pinned without a sign condition.
    Fixed,
}

fn pattern_of(lambda: &[f64], lo: &[f64], hi: &[f64]) -> Vec<Face> {
    let scale = 1e-6 * (1.0 + lambda.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    (0..lo.len())
        .map(|j| {
            if lo[j] == hi[j] {
                Face::Fixed
            } else if lambda[j] > scale {
                Face::Lo
            } else if lambda[j] < -scale {
                Face::Hi
            } else {
                Face::Free
            }
        })
        .collect()
}

/// Every face pattern, fewest pinned coordinates first.
fn all_patterns(lo: &[f64], hi: &[f64]) -> Vec<Vec<Face>> {
    let mut out: Vec<Vec<Face>> = vec![Vec::new()];
    for j in 0..lo.len() {
        let options: &[Face] = if lo[j] == hi[j] {
            &[Face::Fixed]
        } else {
            &[Face::Free, Face::Lo, Face::Hi]
        };
        out = out
            .into_iter()
            .flat_map(|p| {
                options.iter().map(move |o| {
                    let mut q = p.clone();
                    q.push(*o);
                    q
                })
            })
            .collect();
    }
    out.sort_by_key(|p| p.iter().filter(|f| **f != Face::Free).count());
    out
}

/// Newton on the face given by `pattern`, returning the full multiplier when
/// the result satisfies the KKT conditions.
fn solve_face(alpha: &[f64], f: &[Vec<f64>], lo: &[f64], hi: &[f64], pattern: &[Face]) -> Option<(Vec<f64>, usize)> {
    let pinned: Vec<usize> = (0..pattern.len()).filter(|&j| pattern[j] != Face::Free).collect();
    let (lambda, it) = if pinned.is_empty() {
        (vec![0.0; lo.len()], 0)
    } else {
        let reduced: Vec<Vec<f64>> = f.iter().map(|r| pinned.iter().map(|&j| r[j]).collect()).collect();
        let x0: Vec<f64> = pinned
            .iter()
            .map(|&j| if pattern[j] == Face::Hi { hi[j] } else { lo[j] })
            .collect();
        let (sub, it) = newton(alpha, &reduced, &x0, vec![0.0; pinned.len()]).ok()?;
        let mut full = vec![0.0; lo.len()];
        for (k, &j) in pinned.iter().enumerate() {
            full[j] = sub[k];
        }
        (full, it)
    };
    let (w, _) = tilted_weights(alpha, f, &lambda);
    let m = moment(f, &w, lo.len());
    let ok = (0..lo.len()).all(|j| match pattern[j] {
        Face::Free => m[j] >= lo[j] - KKT_TOL && m[j] <= hi[j] + KKT_TOL,
        Face::Lo => lambda[j] >= -KKT_TOL,
        Face::Hi => lambda[j] <= KKT_TOL,
        Face::Fixed => true,
    });
    ok.then_some((lambda, it))
}

/// Runs normalized descent on the dual objective, which has no minimizer
/// when the target is not reachable; the multiplier drifts off to infinity
/// along a separating direction, returned normalized.
fn infeasible(problem: &MomentProblem, reason: &str) -> Error {
    let alpha = problem.alpha().weights();
    let f = problem.moment_map();
    let d = problem.dim();
    let mut lambda = vec![0.0; d];
    for _ in 0..500 {
        let g = match problem.target() {
            Target::Point(x0) => point_objective(alpha, f, x0, &lambda).1,
            Target::Box { lo, hi } => box_objective(alpha, f, lo, hi, &lambda).1,
        };
        let n = norm2(&g);
        if n == 0.0 {
            break;
        }
        for (l, gi) in lambda.iter_mut().zip(&g) {
            *l -= gi / n;
        }
    }
    let n = norm2(&lambda);
    let certificate = if n > 0.0 {
        lambda.iter().map(|v| v / n).collect()
    } else {
        lambda
    };
    Error::Infeasible {
        reason: reason.to_string(),
        certificate,
    }
}
