use super::{MomentProblem, Target};
use crate::error::{Error, Result};
use crate::measures::FiniteMeasure;

/// Exhaustive scan of the simplex on the lattice `{c/K : Σc = K}`,
/// `K = round(1/grid_step)`, returning the feasible lattice measure of least
/// entropy relative to `α`.
///
/// Lattice moments rarely hit a point target exactly, so membership first
/// uses a `1e-9` tolerance; if no lattice point qualifies, the tolerance is
/// widened to half a grid step times the spread of each moment coordinate.
pub fn brute_force_projection(problem: &MomentProblem, grid_step: f64) -> Result<(FiniteMeasure, f64)> {
    let m = problem.alpha().len();
    if m == 0 || m > 4 {
        return Err(Error::InvalidArgument(format!(
            "brute force needs 1..=4 points, got {m}"
        )));
    }
    if !(1e-3..=1.0).contains(&grid_step) {
        return Err(Error::InvalidArgument(format!(
            "grid step {grid_step} outside [1e-3, 1]"
        )));
    }
    let k = (1.0 / grid_step).round() as usize;
    let kf = k as f64;
    let d = problem.dim();
    let f = problem.moment_map();
    let alpha = problem.alpha().weights();
    let spread: Vec<f64> = (0..d)
        .map(|j| {
            let (lo, hi) = f.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
                (a.min(r[j]), b.max(r[j]))
            });
            hi - lo
        })
        .collect();
    let ln: Vec<f64> = (0..=k).map(|c| if c == 0 { 0.0 } else { (c as f64).ln() }).collect();
    let ln_alpha: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();

    let distance_to_target = |mom: &[f64]| -> Vec<f64> {
        match problem.target() {
            Target::Point(x) => mom.iter().zip(x).map(|(a, b)| (a - b).abs()).collect(),
            Target::Box { lo, hi } => (0..d).map(|j| (lo[j] - mom[j]).max(mom[j] - hi[j]).max(0.0)).collect(),
        }
    };

    // (entropy, counts) for the tight and the widened tolerance.
    let mut best_tight: Option<(f64, Vec<usize>)> = None;
    let mut best_wide: Option<(f64, Vec<usize>)> = None;
    let mut counts = vec![0usize; m];
    let mut mom = vec![0.0; d];
    let mut visit = |c: &[usize]| {
        let mut h = 0.0;
        for i in 0..m {
            if c[i] > 0 {
                if alpha[i] == 0.0 {
                    return;
                }
                h += c[i] as f64 * (ln[c[i]] - ln[k] - ln_alpha[i]);
            }
        }
        h /= kf;
        mom.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            if c[i] > 0 {
                for j in 0..d {
                    mom[j] += c[i] as f64 * f[i][j];
                }
            }
        }
        mom.iter_mut().for_each(|v| *v /= kf);
        let gap = distance_to_target(&mom);
        if gap.iter().all(|g| *g <= 1e-9) && best_tight.as_ref().map_or(true, |b| h < b.0) {
            best_tight = Some((h, c.to_vec()));
        }
        if gap.iter().zip(&spread).all(|(g, s)| *g <= 1e-9 + 0.5 * grid_step * s)
            && best_wide.as_ref().map_or(true, |b| h < b.0)
        {
            best_wide = Some((h, c.to_vec()));
        }
    };
    compositions(k, m, &mut counts, 0, &mut visit);

    let (h, c) = best_tight.or(best_wide).ok_or_else(|| Error::Infeasible {
        reason: "no feasible lattice measure".into(),
        certificate: Vec::new(),
    })?;
    let w = c.iter().map(|&x| x as f64 / kf).collect();
    Ok((
        FiniteMeasure::from_unnormalized(problem.alpha().space().clone(), w)?,
        h.max(0.0),
    ))
}

fn compositions(left: usize, m: usize, counts: &mut [usize], pos: usize, visit: &mut impl FnMut(&[usize])) {
    if pos == m - 1 {
        counts[pos] = left;
        visit(counts);
        return;
    }
    for c in 0..=left {
        counts[pos] = c;
        compositions(left - c, m, counts, pos + 1, visit);
    }
}
