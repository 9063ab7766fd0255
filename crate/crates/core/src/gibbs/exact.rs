//! Exact conditional laws by enumerating type classes.
//!
//! The law of an i.i.d. block given `L_n ∈ A` depends on the sample only
//! through its type (count vector). Within a type class `c`, the first `k`
//! coordinates equal `(s_1, …, s_k)` with probability
//! `Π_s c_s^{(r_s)} / n^{(k)}` (falling factorials, `r_s` the multiplicity
//! of `s` in the tuple).

use super::{ConditionalEstimate, ConditioningEvent};
use crate::error::{Error, Result};
use crate::measures::FiniteMeasure;

/// Largest number of type classes enumerated.
pub const TYPE_CLASS_BUDGET: f64 = 2e6;
/// Largest `m^k` for a conditional `k`-law.
pub const TUPLE_BUDGET: usize = 1 << 20;

/// `ln i!` for `i = 0..=n`.
pub(crate) fn ln_factorials(n: u64) -> Vec<f64> {
    let mut t = Vec::with_capacity(n as usize + 1);
    t.push(0.0);
    let mut acc = 0.0;
    for i in 1..=n {
        acc += (i as f64).ln();
        t.push(acc);
    }
    t
}

/// Number of compositions of `n` into `m` parts, `C(n+m−1, m−1)`, in floating
/// point.
pub fn type_class_count(n: u64, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let lf = ln_factorials(n + m as u64);
    (lf[(n + m as u64 - 1) as usize] - lf[n as usize] - lf[m - 1])
        .exp()
        .round()
}

fn check_budget(n: u64, m: usize) -> Result<()> {
    let needed = type_class_count(n, m);
    if needed > TYPE_CLASS_BUDGET {
        return Err(Error::BudgetExceeded {
            needed,
            budget: TYPE_CLASS_BUDGET,
        });
    }
    Ok(())
}

/// Calls `visit(counts, ln P(type))` for every type class of `n` draws from
/// `alpha` with positive probability.
fn for_each_type(alpha: &FiniteMeasure, n: u64, mut visit: impl FnMut(&[u64], f64) -> Result<()>) -> Result<()> {
    let m = alpha.len();
    let lf = ln_factorials(n);
    let ln_alpha: Vec<f64> = alpha.weights().iter().map(|a| a.ln()).collect();
    let mut counts = vec![0u64; m];

    fn rec(
        pos: usize,
        left: u64,
        acc: f64,
        counts: &mut [u64],
        lf: &[f64],
        ln_alpha: &[f64],
        visit: &mut dyn FnMut(&[u64], f64) -> Result<()>,
    ) -> Result<()> {
        let m = counts.len();
        let term = |c: u64| -> Option<f64> {
            if c == 0 {
                Some(0.0)
            } else if ln_alpha[pos] == f64::NEG_INFINITY {
                None
            } else {
                Some(c as f64 * ln_alpha[pos] - lf[c as usize])
            }
        };
        if pos == m - 1 {
            counts[pos] = left;
            if let Some(t) = term(left) {
                visit(counts, acc + t)?;
            }
            return Ok(());
        }
        for c in 0..=left {
            counts[pos] = c;
            if let Some(t) = term(c) {
                rec(pos + 1, left - c, acc + t, counts, lf, ln_alpha, visit)?;
            }
        }
        Ok(())
    }

    if m == 0 {
        return Err(Error::InvalidMeasure("empty support".into()));
    }
    rec(0, n, lf[n as usize], &mut counts, &lf, &ln_alpha, &mut visit)
}

/// `ln α^⊗n(L_n ∈ event)`, `−∞` when the event has probability zero.
pub fn exact_event_log_probability(alpha: &FiniteMeasure, n: u64, event: &ConditioningEvent) -> Result<f64> {
    event.check_support(alpha)?;
    check_budget(n, alpha.len())?;
    let mut accepted = Vec::new();
    for_each_type(alpha, n, |c, lw| {
        if event.contains_counts(c, n)? {
            accepted.push(lw);
        }
        Ok(())
    })?;
    // Rounding in the multinomial weights can overshoot 1 slightly.
    Ok(log_sum_exp(&accepted).min(0.0))
}

/// `α^⊗n(L_n ∈ event)`.
pub fn exact_event_probability(alpha: &FiniteMeasure, n: u64, event: &ConditioningEvent) -> Result<f64> {
    Ok(exact_event_log_probability(alpha, n, event)?.exp())
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let shift = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return shift;
    }
    shift + x.iter().map(|v| (v - shift).exp()).sum::<f64>().ln()
}

/// Law of the first `k` coordinates within the type class `counts`, indexed
/// with the first coordinate slowest.
pub(crate) fn within_class_law(counts: &[u64], n: u64, k: usize, out: &mut [f64]) {
    let m = counts.len();
    let mut used = vec![0u64; m];
    let mut digits = vec![0usize; k];
    for (idx, slot) in out.iter_mut().enumerate() {
        let mut rest = idx;
        for t in (0..k).rev() {
            digits[t] = rest % m;
            rest /= m;
        }
        used.iter_mut().for_each(|u| *u = 0);
        let mut p = 1.0;
        for (t, &s) in digits.iter().enumerate() {
            if used[s] >= counts[s] {
                p = 0.0;
                break;
            }
            p *= (counts[s] - used[s]) as f64 / (n - t as u64) as f64;
            used[s] += 1;
        }
        *slot = p;
    }
}

/// Exact law of the first `k` coordinates given `L_n ∈ event`.
pub fn exact_conditional(
    alpha: &FiniteMeasure,
    n: u64,
    event: &ConditioningEvent,
    k: usize,
) -> Result<ConditionalEstimate> {
    if k == 0 || k as u64 > n {
        return Err(Error::InvalidArgument(format!("window k = {k} must be in 1..=n")));
    }
    event.check_support(alpha)?;
    check_budget(n, alpha.len())?;
    let m = alpha.len();
    let cells = m
        .checked_pow(k as u32)
        .filter(|c| *c <= TUPLE_BUDGET)
        .ok_or(Error::BudgetExceeded {
            needed: (m as f64).powi(k as i32),
            budget: TUPLE_BUDGET as f64,
        })?;

    let mut accepted: Vec<(Vec<u64>, f64)> = Vec::new();
    let mut classes = 0u64;
    for_each_type(alpha, n, |c, lw| {
        classes += 1;
        if event.contains_counts(c, n)? {
            accepted.push((c.to_vec(), lw));
        }
        Ok(())
    })?;
    if accepted.is_empty() {
        return Err(Error::ZeroProbability);
    }
    let shift = accepted.iter().map(|a| a.1).fold(f64::NEG_INFINITY, f64::max);
    let mut law = vec![0.0; cells];
    let mut within = vec![0.0; cells];
    let mut total = 0.0;
    for (c, lw) in &accepted {
        let w = (lw - shift).exp();
        total += w;
        within_class_law(c, n, k, &mut within);
        for (l, x) in law.iter_mut().zip(&within) {
            *l += w * x;
        }
    }
    let log_p = (shift + total.ln()).min(0.0);
    let space = std::sync::Arc::new(alpha.space().power_labels(k));
    Ok(ConditionalEstimate {
        k,
        law: FiniteMeasure::from_unnormalized(space, law)?,
        acceptance_rate: log_p.exp(),
        n_trials: classes,
        accepted: accepted.len() as u64,
        exact: true,
        log_event_probability: Some(log_p),
        std_errors: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iproj::Norm;
    use crate::measures::tv_distance;

    fn sum_band(n: u64, sum: f64) -> ConditioningEvent {
        ConditioningEvent::moment_band(vec![vec![0.0], vec![1.0]], vec![sum / n as f64], 0.0, Norm::Sup).unwrap()
    }

    #[test]
    fn counting() {
        assert_eq!(type_class_count(4, 2), 5.0);
        assert_eq!(type_class_count(10, 3), 66.0);
    }

    #[test]
    fn whole_space_gives_product_law() {
        let a = FiniteMeasure::new(
            std::sync::Arc::new(crate::measures::MetricSpace::line(&[0.0, 1.0, 2.0]).unwrap()),
            vec![0.2, 0.3, 0.5],
        )
        .unwrap();
        let est = exact_conditional(&a, 6, &ConditioningEvent::Whole, 2).unwrap();
        assert!(tv_distance(&est.law, &a.power(2)).unwrap() < 1e-14);
        assert!((est.acceptance_rate - 1.0).abs() < 1e-13);
    }

    #[test]
    fn fixed_sum_bernoulli() {
        let a = FiniteMeasure::bernoulli(0.5).unwrap();
        let e = sum_band(4, 3.0);
        assert!((exact_event_probability(&a, 4, &e).unwrap() - 0.25).abs() < 1e-15);
        let est = exact_conditional(&a, 4, &e, 1).unwrap();
        assert!((est.law.weights()[1] - 0.75).abs() < 1e-15);
        // Two coordinates from {1,1,1,0}: P(1,1) = 3/4·2/3.
        let est2 = exact_conditional(&a, 4, &e, 2).unwrap();
        assert!((est2.law.weights()[3] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn empty_band_has_zero_probability() {
        let a = FiniteMeasure::bernoulli(0.5).unwrap();
        let e = sum_band(4, 2.5);
        assert_eq!(exact_event_probability(&a, 4, &e).unwrap(), 0.0);
        assert!(matches!(exact_conditional(&a, 4, &e, 1), Err(Error::ZeroProbability)));
    }

    #[test]
    fn marginals_of_pair_law_match_single_law() {
        let a = FiniteMeasure::bernoulli(0.3).unwrap();
        let e = ConditioningEvent::moment_band(vec![vec![0.0], vec![1.0]], vec![0.6], 0.1, Norm::Sup).unwrap();
        let one = exact_conditional(&a, 20, &e, 1).unwrap();
        let two = exact_conditional(&a, 20, &e, 2).unwrap();
        let w = two.law.weights();
        let first = [w[0] + w[1], w[2] + w[3]];
        let second = [w[0] + w[2], w[1] + w[3]];
        for s in 0..2 {
            assert!((first[s] - one.law.weights()[s]).abs() < 1e-12);
            assert!((second[s] - one.law.weights()[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let s = std::sync::Arc::new(
            crate::measures::MetricSpace::line(&(0..10).map(|i| i as f64).collect::<Vec<_>>()).unwrap(),
        );
        let a = FiniteMeasure::uniform(s);
        assert!(matches!(
            exact_event_probability(&a, 100, &ConditioningEvent::Whole),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
