//! Rejection sampling of the conditional law.

use std::sync::Arc;

use rand::Rng;

use super::{ConditionalEstimate, ConditioningEvent};
use crate::error::{Error, Result};
use crate::measures::FiniteMeasure;
use crate::rng::run_partitioned;

/// Draws a symbol by inversion of the cumulative table.
pub(crate) fn draw(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|c| *c <= u).min(cdf.len() - 1)
}

pub(crate) fn cdf_of(alpha: &FiniteMeasure) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = alpha
        .weights()
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect();
    // Guard the top against rounding, skipping trailing zero-mass points.
    if let Some(last) = alpha.weights().iter().rposition(|w| *w > 0.0) {
        cdf[last..].iter_mut().for_each(|c| *c = f64::INFINITY);
    }
    cdf
}

/// Monte Carlo estimate of the law of the first `k` coordinates given
/// `L_n ∈ event`: `trials` blocks are drawn, accepted blocks contribute their
/// first `k` coordinates. Reproducible for fixed `(seed, workers)`.
#[allow(clippy::too_many_arguments)]
pub fn run_conditional_mc(
    alpha: &FiniteMeasure,
    n: u64,
    event: &ConditioningEvent,
    k: usize,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<ConditionalEstimate> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".into()));
    }
    if k == 0 || k as u64 > n {
        return Err(Error::InvalidArgument(format!("window k = {k} must be in 1..=n")));
    }
    event.check_support(alpha)?;
    let m = alpha.len();
    let cells = m.pow(k as u32);
    let cdf = cdf_of(alpha);

    let parts = run_partitioned(seed, trials, workers, |rng, chunk| -> Result<(u64, Vec<u64>)> {
        let mut hist = vec![0u64; cells];
        let mut accepted = 0u64;
        let mut counts = vec![0u64; m];
        for _ in 0..chunk {
            counts.iter_mut().for_each(|c| *c = 0);
            let mut cell = 0usize;
            for t in 0..n {
                let s = draw(&cdf, rng);
                counts[s] += 1;
                if (t as usize) < k {
                    cell = cell * m + s;
                }
            }
            if event.contains_counts(&counts, n)? {
                accepted += 1;
                hist[cell] += 1;
            }
        }
        Ok((accepted, hist))
    });

    let mut accepted = 0u64;
    let mut hist = vec![0u64; cells];
    for part in parts {
        let (a, h) = part?;
        accepted += a;
        for (x, y) in hist.iter_mut().zip(h) {
            *x += y;
        }
    }
    if accepted == 0 {
        return Err(Error::ZeroAcceptance {
            trials,
            upper_bound: 3.0 / trials as f64,
        });
    }
    let af = accepted as f64;
    let law: Vec<f64> = hist.iter().map(|h| *h as f64 / af).collect();
    let std_errors = law.iter().map(|p| (p * (1.0 - p) / af).sqrt()).collect();
    let space = Arc::new(alpha.space().power_labels(k));
    Ok(ConditionalEstimate {
        k,
        law: FiniteMeasure::from_unnormalized(space, law)?,
        acceptance_rate: af / trials as f64,
        n_trials: trials,
        accepted,
        exact: false,
        log_event_probability: None,
        std_errors: Some(std_errors),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::{exact_conditional, exact_event_probability};
    use crate::iproj::Norm;

    #[test]
    fn whole_space_accepts_everything() {
        let a = FiniteMeasure::bernoulli(0.3).unwrap();
        let est = run_conditional_mc(&a, 10, &ConditioningEvent::Whole, 1, 20_000, 1, 4).unwrap();
        assert_eq!(est.acceptance_rate, 1.0);
        assert!((est.law.weights()[1] - 0.3).abs() < 4.0 * est.std_errors.as_ref().unwrap()[1]);
    }

    #[test]
    fn agrees_with_enumeration() {
        let a = FiniteMeasure::bernoulli(0.5).unwrap();
        let e = ConditioningEvent::moment_band(vec![vec![0.0], vec![1.0]], vec![0.7], 0.0458, Norm::Sup).unwrap();
        let exact = exact_conditional(&a, 32, &e, 1).unwrap();
        let p = exact_event_probability(&a, 32, &e).unwrap();
        let trials = 200_000;
        let mc = run_conditional_mc(&a, 32, &e, 1, trials, 11, 3).unwrap();
        let se = mc.std_errors.as_ref().unwrap()[1];
        assert!((mc.law.weights()[1] - exact.law.weights()[1]).abs() < 3.0 * se);
        let rate_se = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((mc.acceptance_rate - p).abs() < 3.0 * rate_se);
    }

    #[test]
    fn reproducible_for_fixed_seed_and_workers() {
        let a = FiniteMeasure::bernoulli(0.5).unwrap();
        let e = ConditioningEvent::moment_band(vec![vec![0.0], vec![1.0]], vec![0.7], 0.1, Norm::Sup).unwrap();
        let x = run_conditional_mc(&a, 16, &e, 2, 5_000, 99, 3).unwrap();
        let y = run_conditional_mc(&a, 16, &e, 2, 5_000, 99, 3).unwrap();
        assert_eq!(x.law.weights(), y.law.weights());
        assert_eq!(x.accepted, y.accepted);
    }

    #[test]
    fn zero_acceptance_reports_rule_of_three() {
        let a = FiniteMeasure::bernoulli(0.5).unwrap();
        let e = ConditioningEvent::moment_band(vec![vec![0.0], vec![1.0]], vec![2.0], 0.1, Norm::Sup).unwrap();
        match run_conditional_mc(&a, 8, &e, 1, 300, 1, 2) {
            Err(Error::ZeroAcceptance { trials, upper_bound }) => {
                assert_eq!(trials, 300);
                assert!((upper_bound - 0.01).abs() < 1e-15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
