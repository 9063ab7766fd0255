//! Property tests for the invariants that hold for every input.

use std::sync::Arc;

use proptest::prelude::*;
use thinsets::bridge::{bridge_entropy, bridge_measure, gaussian_reference, sinkhorn, BridgeProblem};
use thinsets::iproj::{log_laplace, pythagoras_gap, solve_dual, MomentProblem, Target};
use thinsets::measures::{
    covering_number, fm_distance, luxemburg_norm, pinsker_excess, prohorov_distance, prohorov_fm_lower,
    relative_entropy, tau_integral, tv_distance, variational_entropy_lower, CoverMethod,
};
use thinsets::tritree::{
    build_tree, kernel, min_level_n0, q_rate, recover_coefficients, LatticeSpec, TwoTimeMarginals, VolSurface,
};
use thinsets::{FiniteMeasure, MetricSpace};

const SLACK: f64 = 1e-9;

/// Points in the unit square and two weight vectors on them.
fn measure_pair() -> impl Strategy<Value = (Arc<MetricSpace>, Vec<f64>, Vec<f64>)> {
    (2usize..=8).prop_flat_map(|m| {
        (
            prop::collection::vec((0.0..1.0f64, 0.0..1.0f64), m),
            prop::collection::vec(0.01..1.0f64, m),
            prop::collection::vec(0.01..1.0f64, m),
        )
            .prop_map(|(pts, a, b)| {
                let labels = (0..pts.len()).map(|i| format!("p{i}")).collect();
                let coords = pts.into_iter().map(|(x, y)| vec![x, y]).collect();
                (Arc::new(MetricSpace::euclidean(labels, coords).unwrap()), a, b)
            })
    })
}

fn measures(space: &Arc<MetricSpace>, a: Vec<f64>, b: Vec<f64>) -> (FiniteMeasure, FiniteMeasure) {
    (
        FiniteMeasure::from_unnormalized(space.clone(), a).unwrap(),
        FiniteMeasure::from_unnormalized(space.clone(), b).unwrap(),
    )
}

proptest! {
    #[test]
    fn metric_comparisons((space, a, b) in measure_pair()) {
        let (x, y) = measures(&space, a, b);
        let tv = tv_distance(&x, &y).unwrap();
        let fm = fm_distance(&x, &y).unwrap();
        let dp = prohorov_distance(&x, &y).unwrap().value;
        prop_assert!(fm <= tv + SLACK);
        prop_assert!(dp <= tv / 2.0 + SLACK);
        prop_assert!(prohorov_fm_lower(dp) <= fm + SLACK);
        prop_assert!(fm <= 2.0 * dp + SLACK);
        prop_assert!(pinsker_excess(&x, &y).unwrap() <= SLACK);
    }

    #[test]
    fn variational_bound((space, a, b) in measure_pair(), phi in prop::collection::vec(-3.0..3.0f64, 8)) {
        let (x, y) = measures(&space, a, b);
        let h = relative_entropy(&x, &y).unwrap();
        let phi: Vec<f64> = phi[..x.len()].to_vec();
        prop_assert!(variational_entropy_lower(&x, &y, std::slice::from_ref(&phi)).unwrap() <= h + 1e-12);
        let log_density: Vec<f64> = x.weights().iter().zip(y.weights()).map(|(p, q)| (p / q).ln()).collect();
        let v = variational_entropy_lower(&x, &y, &[phi, log_density]).unwrap();
        prop_assert!((v - h).abs() < 1e-9);
    }

    #[test]
    fn luxemburg_normalizes(g in prop::collection::vec(-4.0..4.0f64, 2..8), w in prop::collection::vec(0.05..1.0f64, 8)) {
        prop_assume!(g.iter().any(|x| x.abs() > 1e-3));
        let space = Arc::new(MetricSpace::discrete((0..g.len()).map(|i| i.to_string()).collect()));
        let alpha = FiniteMeasure::from_unnormalized(space, w[..g.len()].to_vec()).unwrap();
        let s = luxemburg_norm(&g, &alpha).unwrap();
        prop_assert!((tau_integral(&g, &alpha, s) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exact_covers_are_minimal((space, _, _) in measure_pair(), eps in 0.05..0.8f64) {
        let cover = covering_number(&space, eps).unwrap();
        prop_assert_eq!(cover.method, CoverMethod::Exact);
        prop_assert!(cover.covers(&space));
        for drop in 0..cover.center_indices.len() {
            let rest: Vec<usize> = cover.center_indices.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, c)| *c).collect();
            let covered = (0..space.len()).all(|y| rest.iter().any(|&c| space.dist(c, y) < eps));
            prop_assert!(!covered);
        }
    }

    /// Targets are moments of a random measure, so they are feasible; the
    /// same measure is then a competitor for the Pythagoras inequality.
    #[test]
    fn projection_consistency(
        base in prop::collection::vec(0.05..1.0f64, 3..6),
        nu in prop::collection::vec(0.05..1.0f64, 6),
        values in prop::collection::vec(-2.0..2.0f64, 6),
    ) {
        let m = base.len();
        let space = Arc::new(MetricSpace::discrete((0..m).map(|i| i.to_string()).collect()));
        let alpha = FiniteMeasure::from_unnormalized(space.clone(), base).unwrap();
        let nu = FiniteMeasure::from_unnormalized(space, nu[..m].to_vec()).unwrap();
        let f: Vec<f64> = values[..m].to_vec();
        prop_assume!(f.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b)) - f.iter().fold(f64::INFINITY, |a, b| a.min(*b)) > 0.1);
        let target = nu.integrate(&f);
        let problem = MomentProblem::scalar(alpha.clone(), &f, Target::Point(vec![target])).unwrap();
        let sol = solve_dual(&problem).unwrap();
        prop_assert!((sol.entropy - relative_entropy(&sol.alpha_star, &alpha).unwrap()).abs() < 1e-9);
        prop_assert!((sol.moment[0] - target).abs() < 1e-8);
        prop_assert!(pythagoras_gap(&nu, &alpha, &sol.alpha_star).unwrap() >= -1e-8);
    }

    #[test]
    fn log_laplace_gradient(lambda in prop::collection::vec(-1.5..1.5f64, 2)) {
        let space = Arc::new(MetricSpace::discrete((0..4).map(|i| i.to_string()).collect()));
        let alpha = FiniteMeasure::from_unnormalized(space, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let f = vec![vec![0.0, 1.0], vec![1.0, -0.5], vec![2.0, 0.3], vec![-1.0, 2.0]];
        let problem = MomentProblem::new(alpha, f, Target::Point(vec![0.5, 0.5])).unwrap();
        let ll = log_laplace(&problem, &lambda).unwrap();
        let h = 1e-5;
        for a in 0..2 {
            let mut up = lambda.clone();
            let mut dn = lambda.clone();
            up[a] += h;
            dn[a] -= h;
            let fd = (log_laplace(&problem, &up).unwrap().value - log_laplace(&problem, &dn).unwrap().value) / (2.0 * h);
            prop_assert!((fd - ll.gradient[a]).abs() <= 1e-6 * ll.gradient[a].abs().max(1.0));
        }
    }

    #[test]
    fn tree_recovers_its_surface(extra in 0usize..10, seed in any::<u64>()) {
        let spec = LatticeSpec::new(1, 2.0, 0.5, 1.5, 0.1, 0.05).unwrap();
        let n = min_level_n0(&spec) + extra;
        let spec = spec.with_n(n);
        let mut state = seed;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let surface = VolSurface::from_fn(&spec, |_, _| (0.5 + next(), 0.05 + 0.1 * next()));
        let tree = build_tree(&surface, &spec).unwrap();
        let (f, g) = recover_coefficients(&TwoTimeMarginals::from_tree(&tree), &spec).unwrap();
        for k in 0..n {
            for i in 0..2 * k + 1 {
                prop_assert!((f[k][i] - surface.b[k][i]).abs() < 1e-9);
                prop_assert!((g[k][i] - surface.sigma[k][i].powi(2)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_positive_above_n0(alpha in 1.6..4.0f64, smin in 0.2..0.9f64, b0 in 0.05..1.0f64, frac in 0.0..0.99f64) {
        let spec = LatticeSpec::new(1, alpha, smin, 1.5, b0, frac * b0).unwrap();
        let spec = spec.with_n(min_level_n0(&spec));
        // the rectangle's extremes are its corners
        for y in [spec.sigma_min, spec.sigma_max] {
            for z in [spec.b0 - spec.s, spec.b0 + spec.s] {
                let (m, r, d) = kernel(y, z, &spec).unwrap();
                prop_assert!(m > 0.0 && r > 0.0 && d > 0.0);
                prop_assert!((m + r + d - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn rate_is_a_divergence(x in 0.01..3.99f64, y in 0.01..3.99f64) {
        let spec = LatticeSpec::new(4, 2.0, 0.5, 1.5, 0.1, 0.05).unwrap();
        let q = q_rate(x, y, &spec).unwrap();
        prop_assert!(q >= -1e-15);
        if (x - y).abs() > 1e-6 {
            prop_assert!(q > 0.0);
        }
    }
}

/// Targets of a bridge problem, as weights over the references' supports.
fn with_targets(p: &BridgeProblem, a: &[f64], b: &[f64]) -> BridgeProblem {
    let nu0 = FiniteMeasure::from_unnormalized(p.mu0().space().clone(), a.to_vec()).unwrap();
    let nu1 = FiniteMeasure::from_unnormalized(p.mu1().space().clone(), b.to_vec()).unwrap();
    p.with_targets(nu0, nu1).unwrap()
}

fn permuted(p: &BridgeProblem, su: &[usize], sv: &[usize]) -> BridgeProblem {
    let relabel = |nu: &FiniteMeasure, s: &[usize], space: &Arc<MetricSpace>| {
        FiniteMeasure::new(space.clone(), s.iter().map(|&i| nu.weights()[i]).collect()).unwrap()
    };
    let s0 = Arc::new(MetricSpace::discrete((0..su.len()).map(|i| format!("u{i}")).collect()));
    let s1 = Arc::new(MetricSpace::discrete((0..sv.len()).map(|i| format!("v{i}")).collect()));
    let density = su
        .iter()
        .map(|&u| sv.iter().map(|&v| p.density()[u][v]).collect())
        .collect();
    BridgeProblem::new(
        relabel(p.mu0(), su, &s0),
        relabel(p.mu1(), sv, &s1),
        density,
        relabel(p.nu0(), su, &s0),
        relabel(p.nu1(), sv, &s1),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bridge_is_equivariant(
        a in prop::collection::vec(0.05..1.0f64, 7),
        b in prop::collection::vec(0.05..1.0f64, 7),
        su in Just((0..7).collect::<Vec<usize>>()).prop_shuffle(),
        sv in Just((0..7).collect::<Vec<usize>>()).prop_shuffle(),
    ) {
        let grid: Vec<f64> = (0..7).map(|i| -1.0 + i as f64 / 3.0).collect();
        let space = Arc::new(MetricSpace::line(&grid).unwrap());
        let mu0 = FiniteMeasure::uniform(space);
        let p = with_targets(&gaussian_reference(&grid, 0.5, &mu0).unwrap(), &a, &b);
        let q = permuted(&p, &su, &sv);
        let pp = sinkhorn(&p, 1e-12, 5000).unwrap();
        let pq = sinkhorn(&q, 1e-12, 5000).unwrap();
        for (i, &u) in su.iter().enumerate() {
            prop_assert!((pq.f[i] - pp.f[u]).abs() <= 1e-8 * pp.f[u].abs().max(1.0));
        }
        for (i, &v) in sv.iter().enumerate() {
            prop_assert!((pq.g[i] - pp.g[v]).abs() <= 1e-8 * pp.g[v].abs().max(1.0));
        }
        // entropy and marginals at the solution
        let e = bridge_entropy(&p, &pp).unwrap();
        prop_assert!((e.direct - e.potentials).abs() <= 10.0 * pp.residual.max(1e-13));
        let joint = bridge_measure(&p, &pp).unwrap();
        let (m0, m1) = p.marginals(&joint);
        let tv0: f64 = m0.iter().zip(p.nu0().weights()).map(|(x, y)| (x - y).abs()).sum();
        let tv1: f64 = m1.iter().zip(p.nu1().weights()).map(|(x, y)| (x - y).abs()).sum();
        prop_assert!(tv0.max(tv1) <= 7.0 * pp.residual + 1e-15);
        prop_assert!(pp.history.windows(2).all(|w| w[1] <= w[0]));
    }
}
