//! Distances between probability measures on a finite metric space.
//!
//! * total variation, full-mass convention `Σ|ν₁ − ν₂|` (range `[0, 2]`);
//! * Fortet-Mourier, the dual bounded-Lipschitz norm, computed exactly as a
//!   linear program over the values of the test function at the points;
//! * Prohorov, by exhaustive subset scan up to [`PROHOROV_EXACT_MAX`] points.

use minilp::{ComparisonOp, OptimizationDirection, Problem};

use super::FiniteMeasure;
use crate::error::{Error, Result};

/// Largest support for which the Prohorov distance is computed exactly.
pub const PROHOROV_EXACT_MAX: usize = 20;

/// `Σ|ν₁_i − ν₂_i|`.
pub fn tv_distance(nu1: &FiniteMeasure, nu2: &FiniteMeasure) -> Result<f64> {
    nu1.ensure_same_support(nu2)?;
    Ok(nu1
        .weights()
        .iter()
        .zip(nu2.weights())
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// `sup ∫f d(ν₁ − ν₂)` over `‖f‖_∞ + ‖f‖_Lip ≤ 1`.
///
/// The program has variables `f_i`, the sup-norm bound `a` and the Lipschitz
/// bound `L`, with `|f_i| ≤ a`, `|f_i − f_j| ≤ L·d(i,j)` and `a + L ≤ 1`.
pub fn fm_distance(nu1: &FiniteMeasure, nu2: &FiniteMeasure) -> Result<f64> {
    nu1.ensure_same_support(nu2)?;
    let space = nu1.space();
    let m = nu1.len();
    let diff: Vec<f64> = nu1.weights().iter().zip(nu2.weights()).map(|(a, b)| a - b).collect();
    if diff.iter().all(|d| *d == 0.0) {
        return Ok(0.0);
    }

    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let f: Vec<_> = diff.iter().map(|&c| lp.add_var(c, (-1.0, 1.0))).collect();
    let a = lp.add_var(0.0, (0.0, 1.0));
    let lip = lp.add_var(0.0, (0.0, 1.0));
    lp.add_constraint([(a, 1.0), (lip, 1.0)], ComparisonOp::Le, 1.0);
    for &fi in &f {
        lp.add_constraint([(fi, 1.0), (a, -1.0)], ComparisonOp::Le, 0.0);
        lp.add_constraint([(fi, -1.0), (a, -1.0)], ComparisonOp::Le, 0.0);
    }
    for i in 0..m {
        for j in 0..m {
            if i != j {
                let d = space.dist(i, j);
                lp.add_constraint([(f[i], 1.0), (f[j], -1.0), (lip, -d)], ComparisonOp::Le, 0.0);
            }
        }
    }
    let solution = lp
        .solve()
        .map_err(|e| Error::InvalidArgument(format!("Fortet-Mourier program failed: {e}")))?;
    Ok(solution.objective().max(0.0))
}

/// `φ(u) = 2u²/(2+u)`, the lower comparison function between Prohorov and
/// Fortet-Mourier distances.
pub fn prohorov_fm_lower(u: f64) -> f64 {
    2.0 * u * u / (2.0 + u)
}

/// Result of [`prohorov_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prohorov {
    /// Exact value, or a greedy lower estimate when `exact` is false.
    pub value: f64,
    /// Upper bracket: equals `value` when exact, otherwise `min(tv/2, 1)`.
    pub upper: f64,
    pub exact: bool,
}

/// `inf{a > 0 : ν₁(A) ≤ ν₂(A^a) + a for all A}` with `A^a` the closed
/// `a`-enlargement, symmetrized over both orderings.
pub fn prohorov_distance(nu1: &FiniteMeasure, nu2: &FiniteMeasure) -> Result<Prohorov> {
    nu1.ensure_same_support(nu2)?;
    let upper = (0.5 * tv_distance(nu1, nu2)?).min(1.0);
    if nu1.len() <= PROHOROV_EXACT_MAX {
        let v = one_sided_exact(nu1, nu2).max(one_sided_exact(nu2, nu1));
        Ok(Prohorov {
            value: v,
            upper: v,
            exact: true,
        })
    } else {
        let v = one_sided_greedy(nu1, nu2).max(one_sided_greedy(nu2, nu1));
        Ok(Prohorov {
            value: v.min(upper),
            upper,
            exact: false,
        })
    }
}

/// Distinct enlargement radii at which `A^a` can change, starting at 0.
fn radius_breakpoints(nu: &FiniteMeasure) -> Vec<f64> {
    let space = nu.space();
    let mut r = vec![0.0];
    for i in 0..space.len() {
        for j in (i + 1)..space.len() {
            r.push(space.dist(i, j));
        }
    }
    r.sort_by(f64::total_cmp);
    r.dedup();
    r
}

/// On `[r_k, r_{k+1})` the worst-set excess `g` is constant, so the infimum of
/// feasible `a` is `min_k max(r_k, g_k)`.
fn inf_feasible_radius(radii: &[f64], mut excess: impl FnMut(f64) -> f64) -> f64 {
    let mut best = f64::INFINITY;
    for &r in radii {
        if r >= best {
            break;
        }
        let g = excess(r);
        best = best.min(r.max(g));
    }
    best.min(1.0)
}

fn one_sided_exact(nu1: &FiniteMeasure, nu2: &FiniteMeasure) -> f64 {
    let space = nu1.space();
    // Only subsets of supp(ν₁) matter: extra points only grow A^a.
    let support: Vec<usize> = (0..nu1.len()).filter(|&i| nu1.weights()[i] > 0.0).collect();
    let s = support.len();
    let m = space.len();
    let w2 = nu2.weights();
    let w1 = nu1.weights();

    // ν₂ mass of every subset of the full space, indexed by bitmask.
    let mut mass2 = vec![0.0f64; 1usize << m];
    for mask in 1usize..(1 << m) {
        let low = mask.trailing_zeros() as usize;
        mass2[mask] = mass2[mask & (mask - 1)] + w2[low];
    }
    let mut mass1 = vec![0.0f64; 1usize << s];
    for mask in 1usize..(1 << s) {
        let low = mask.trailing_zeros() as usize;
        mass1[mask] = mass1[mask & (mask - 1)] + w1[support[low]];
    }

    let radii = radius_breakpoints(nu1);
    let mut union = vec![0u64; 1usize << s];
    inf_feasible_radius(&radii, |r| {
        let balls = space.ball_masks(r);
        let mut worst = 0.0f64;
        for mask in 1usize..(1 << s) {
            let low = mask.trailing_zeros() as usize;
            union[mask] = union[mask & (mask - 1)] | balls[support[low]];
            worst = worst.max(mass1[mask] - mass2[union[mask] as usize]);
        }
        worst
    })
}

fn one_sided_greedy(nu1: &FiniteMeasure, nu2: &FiniteMeasure) -> f64 {
    let space = nu1.space();
    let m = space.len();
    let w1 = nu1.weights();
    let w2 = nu2.weights();
    let radii = radius_breakpoints(nu1);
    inf_feasible_radius(&radii, |r| {
        let mut in_set = vec![false; m];
        let mut covered = vec![false; m];
        let (mut m1, mut m2) = (0.0, 0.0);
        let mut worst = 0.0f64;
        loop {
            let mut pick = None;
            let mut pick_val = f64::NEG_INFINITY;
            for x in 0..m {
                if in_set[x] || w1[x] == 0.0 {
                    continue;
                }
                let add2: f64 = (0..m)
                    .filter(|&y| !covered[y] && space.dist(x, y) <= r)
                    .map(|y| w2[y])
                    .sum();
                let val = m1 + w1[x] - (m2 + add2);
                if val > pick_val {
                    pick_val = val;
                    pick = Some(x);
                }
            }
            let Some(x) = pick else { break };
            in_set[x] = true;
            m1 += w1[x];
            for y in 0..m {
                if !covered[y] && space.dist(x, y) <= r {
                    covered[y] = true;
                    m2 += w2[y];
                }
            }
            worst = worst.max(m1 - m2);
        }
        worst
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::measures::MetricSpace;

    fn two_points(d: f64) -> Arc<MetricSpace> {
        Arc::new(MetricSpace::line(&[0.0, d]).unwrap())
    }

    #[test]
    fn tv_examples() {
        let s = two_points(1.0);
        let d0 = FiniteMeasure::dirac(s.clone(), 0).unwrap();
        let d1 = FiniteMeasure::dirac(s.clone(), 1).unwrap();
        let u = FiniteMeasure::uniform(s);
        assert_eq!(tv_distance(&d0, &d0).unwrap(), 0.0);
        assert_eq!(tv_distance(&d0, &d1).unwrap(), 2.0);
        assert!((tv_distance(&d0, &u).unwrap() - 1.0).abs() < 1e-15);
        assert!((2.0 * std::f64::consts::LN_2).sqrt() >= 1.0);
    }

    #[test]
    fn fm_diracs_at_unit_distance() {
        let s = two_points(1.0);
        let d0 = FiniteMeasure::dirac(s.clone(), 0).unwrap();
        let d1 = FiniteMeasure::dirac(s, 1).unwrap();
        assert!((fm_distance(&d0, &d1).unwrap() - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(fm_distance(&d0, &d0).unwrap(), 0.0);
    }

    // Two points at distance d with mass gap t: optimum a = d/(2+d), value t·2d/(2+d).
    #[test]
    fn fm_two_point_closed_form() {
        for &(d, p, q) in &[(0.3, 0.9, 0.2), (2.5, 0.4, 0.45), (1.0, 0.0, 1.0)] {
            let s = two_points(d);
            let a = FiniteMeasure::new(s.clone(), vec![p, 1.0 - p]).unwrap();
            let b = FiniteMeasure::new(s, vec![q, 1.0 - q]).unwrap();
            let expect = (p - q).abs() * 2.0 * d / (2.0 + d);
            assert!((fm_distance(&a, &b).unwrap() - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn prohorov_diracs_at_unit_distance() {
        let s = two_points(1.0);
        let d0 = FiniteMeasure::dirac(s.clone(), 0).unwrap();
        let d1 = FiniteMeasure::dirac(s, 1).unwrap();
        let p = prohorov_distance(&d0, &d1).unwrap();
        assert!(p.exact);
        assert!((p.value - 1.0).abs() < 1e-15);
        let fm = fm_distance(&d0, &d1).unwrap();
        assert!(prohorov_fm_lower(p.value) <= fm + 1e-9);
        assert!(fm <= 2.0 * p.value + 1e-9);
        assert_eq!(prohorov_distance(&d0, &d0).unwrap().value, 0.0);
    }

    #[test]
    fn prohorov_small_shift() {
        // Moving mass 0.3 over distance 0.1 costs max(0.1, ...) = 0.1.
        let s = two_points(0.1);
        let a = FiniteMeasure::new(s.clone(), vec![0.7, 0.3]).unwrap();
        let b = FiniteMeasure::new(s, vec![0.4, 0.6]).unwrap();
        assert!((prohorov_distance(&a, &b).unwrap().value - 0.1).abs() < 1e-15);
    }

    #[test]
    fn prohorov_greedy_on_large_support_is_bracketed() {
        let pts: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let s = Arc::new(MetricSpace::line(&pts).unwrap());
        let a = FiniteMeasure::from_unnormalized(s.clone(), (0..30).map(|i| 1.0 + i as f64).collect()).unwrap();
        let b = FiniteMeasure::uniform(s);
        let p = prohorov_distance(&a, &b).unwrap();
        assert!(!p.exact);
        assert!(p.value <= p.upper + 1e-15);
        assert!(p.value > 0.0);
    }
}
