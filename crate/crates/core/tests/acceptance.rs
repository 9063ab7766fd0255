//! Acceptance suite: one line per criterion, `PASS` or `FAIL`, with the
//! measured values. Exits nonzero when any criterion fails.
//!
//! Run with `cargo test -p thinsets --test acceptance`.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thinsets::bridge::{
    bridge_entropy, bridge_measure, fit_coupling, gaussian_reference, marginal_schedule_check, random_positive_matrix,
    sinkhorn, MarginalMetric,
};
use thinsets::gibbs::{
    band_around, conditional_tv_curve, csiszar_bound_check, exact_event_log_probability, run_conditional_mc,
    ConditioningEvent,
};
use thinsets::iproj::{
    brute_force_projection, enlargement_berry_esseen, solve_dual, MomentProblem, Norm, Schedule, Target, BE_MARGIN,
};
use thinsets::measures::{
    fm_distance, prohorov_distance, prohorov_fm_lower, relative_entropy, tv_distance, MetricSpace,
};
use thinsets::tritree::{
    audit, build_tree, calibrate, dl_gap, expectation, gibbs_tree_mc, q_rate, tree_entropy_chain, tree_entropy_paths,
    CalibProblem, Family, LatticeSpec, Membership, Modulus, Payoff, SigmaField, VolSurface, DEFAULT_REL_TOL,
};
use thinsets::{FiniteMeasure, Result};

// Pinned tolerances.
const LAMBDA_TOL: f64 = 1e-8;
const BERN_ENTROPY: f64 = 0.082282;
const BERN_ENTROPY_TOL: f64 = 1e-6;
const BRUTE_STEP: f64 = 1e-3;
const BRUTE_TOL: f64 = 1e-3;
const TV_CEILING: f64 = 0.1;
const CSISZAR_SLACK: f64 = 1e-9;
const METRIC_SLACK: f64 = 1e-9;
const METRIC_PAIRS: usize = 1000;
const SINKHORN_TOL: f64 = 1e-10;
const SINKHORN_MAX_ITER: usize = 500;
const PYTHAGORAS_SLACK: f64 = 1e-8;
const CHAIN_TOL: f64 = 1e-10;
const GAMMA_TOL: f64 = 0.01;
const DL_BAND: f64 = 5.0;
const CALIB_TOL: f64 = 0.05;
const CALIB_EPS: f64 = 1e-3;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn bernoulli_problem(target: Target) -> MomentProblem {
    MomentProblem::scalar(FiniteMeasure::bernoulli(0.5).unwrap(), &[0.0, 1.0], target).unwrap()
}

fn bernoulli_projection() -> Result<Outcome> {
    let p = bernoulli_problem(Target::Point(vec![0.7]));
    let s = solve_dual(&p)?;
    let lambda = s.lambda_star[0];
    let (_, brute) = brute_force_projection(&p, BRUTE_STEP)?;
    let pass = (lambda - (7.0f64 / 3.0).ln()).abs() <= LAMBDA_TOL
        && (s.entropy - BERN_ENTROPY).abs() <= BERN_ENTROPY_TOL
        && (brute - s.entropy).abs() <= BRUTE_TOL;
    outcome(
        pass,
        format!("lambda*={lambda:.10} H={:.8} brute={brute:.8}", s.entropy),
    )
}

fn exact_gibbs() -> Result<Outcome> {
    let p = bernoulli_problem(Target::Point(vec![0.7]));
    let s = solve_dual(&p)?;
    let rows = conditional_tv_curve(&p, &s, Schedule::SqrtN { a: 1.0 }, Norm::Sup, &[8, 32], 1)?;
    let (t8, t32) = (rows[0].tv_k, rows[1].tv_k);
    outcome(
        t32 < t8 && t32 < TV_CEILING,
        format!("tv(n=8)={t8:.6} tv(n=32)={t32:.6}"),
    )
}

fn csiszar() -> Result<Outcome> {
    let alpha = FiniteMeasure::bernoulli(0.5).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut count = 0;
    let mut violations = 0;
    for eps in [0.05, 0.15] {
        let boxed = bernoulli_problem(Target::Box {
            lo: vec![0.7 - eps],
            hi: vec![0.7 + eps],
        });
        let proj = solve_dual(&boxed)?;
        let event = ConditioningEvent::moment_band(vec![vec![0.0], vec![1.0]], vec![0.7], eps, Norm::Sup)?;
        for n in [8, 16, 32] {
            for k in [1, 2] {
                let c = csiszar_bound_check(&alpha, n, &event, k, &proj.alpha_star, proj.entropy)?;
                count += 1;
                worst = worst.max(c.lhs - c.rhs);
                if c.lhs > c.rhs + CSISZAR_SLACK {
                    violations += 1;
                }
            }
        }
    }
    outcome(
        count == 12 && violations == 0,
        format!("{count} instances, {violations} violations, max(lhs-rhs)={worst:.3e}"),
    )
}

/// Random metric: shortest-path closure of random positive edge weights, or
/// points in the plane.
fn random_space(rng: &mut ChaCha8Rng) -> Arc<MetricSpace> {
    let m = rng.random_range(2..=8);
    let labels: Vec<String> = (0..m).map(|i| format!("x{i}")).collect();
    if rng.random_bool(0.5) {
        let coords = (0..m)
            .map(|_| vec![rng.random_range(0.0..1.5), rng.random_range(0.0..1.5)])
            .collect();
        return Arc::new(MetricSpace::euclidean(labels, coords).unwrap());
    }
    let mut d = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i + 1..m {
            let w = rng.random_range(0.05..2.0);
            d[i][j] = w;
            d[j][i] = w;
        }
    }
    for k in 0..m {
        for i in 0..m {
            for j in 0..m {
                d[i][j] = f64::min(d[i][j], d[i][k] + d[k][j]);
            }
        }
    }
    Arc::new(MetricSpace::from_table(labels, d).unwrap())
}

fn random_measure(space: &Arc<MetricSpace>, rng: &mut ChaCha8Rng) -> FiniteMeasure {
    let w = (0..space.len())
        .map(|_| {
            if rng.random_bool(0.1) {
                0.0
            } else {
                rng.random_range(0.0..1.0)
            }
        })
        .collect::<Vec<f64>>();
    FiniteMeasure::from_unnormalized(space.clone(), w).unwrap_or_else(|_| FiniteMeasure::uniform(space.clone()))
}

fn metric_suite() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = [0usize; 5];
    for _ in 0..METRIC_PAIRS {
        let space = random_space(&mut rng);
        let (x, y) = (random_measure(&space, &mut rng), random_measure(&space, &mut rng));
        let tv = tv_distance(&x, &y)?;
        let fm = fm_distance(&x, &y)?;
        let dp = prohorov_distance(&x, &y)?.value;
        let h = relative_entropy(&x, &y)?;
        let checks = [
            fm <= tv + METRIC_SLACK,
            dp <= tv / 2.0 + METRIC_SLACK,
            prohorov_fm_lower(dp) <= fm + METRIC_SLACK,
            fm <= 2.0 * dp + METRIC_SLACK,
            !h.is_finite() || tv <= (2.0 * h).sqrt() + METRIC_SLACK,
        ];
        for (v, ok) in violations.iter_mut().zip(checks) {
            *v += usize::from(!ok);
        }
    }
    outcome(
        violations.iter().all(|v| *v == 0),
        format!(
            "{METRIC_PAIRS} pairs; violations fm<=tv {} dP<=tv/2 {} phi(dP)<=fm {} fm<=2dP {} pinsker {}",
            violations[0], violations[1], violations[2], violations[3], violations[4]
        ),
    )
}

fn sinkhorn_bridge() -> Result<Outcome> {
    let grid: Vec<f64> = (0..50).map(|i| -2.0 + 4.0 * i as f64 / 49.0).collect();
    let space = Arc::new(MetricSpace::line(&grid)?);
    let mu0 = FiniteMeasure::uniform(space.clone());
    let reference = gaussian_reference(&grid, 1.0, &mu0)?;
    let bump = |c: f64, w: f64, s: &Arc<MetricSpace>| {
        FiniteMeasure::from_unnormalized(s.clone(), grid.iter().map(|x| (-(x - c).powi(2) / w).exp()).collect())
    };
    let problem = reference.with_targets(
        bump(-0.5, 1.0, reference.mu0().space())?,
        bump(0.6, 0.8, reference.mu1().space())?,
    )?;
    let pot = sinkhorn(&problem, SINKHORN_TOL, SINKHORN_MAX_ITER)?;
    let e = bridge_entropy(&problem, &pot)?;
    let star = bridge_measure(&problem, &pot)?;
    let joint_ref = problem.reference_joint()?;
    let h_star = relative_entropy(&star, &joint_ref)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let m = random_positive_matrix(50, 50, &mut rng);
        let c = fit_coupling(m, problem.nu0().weights(), problem.nu1().weights(), 1e-14, 100_000)?;
        let pi = FiniteMeasure::from_unnormalized(joint_ref.space().clone(), c.into_iter().flatten().collect())?;
        let gap = relative_entropy(&pi, &joint_ref)? - h_star - relative_entropy(&pi, &star)?;
        worst = worst.min(gap);
    }
    let consistent = (e.direct - e.potentials).abs() <= 10.0 * pot.residual;
    outcome(
        pot.residual < SINKHORN_TOL && consistent && worst >= -PYTHAGORAS_SLACK,
        format!(
            "residual={:.2e} after {} iterations, |H_direct-H_pot|={:.2e}, min Pythagoras gap={worst:.3e}",
            pot.residual,
            pot.iterations,
            (e.direct - e.potentials).abs()
        ),
    )
}

fn lattice(n: usize) -> LatticeSpec {
    LatticeSpec::new(n, 2.0, 0.5, 1.5, 0.1, 0.05).unwrap()
}

fn chain_rule() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut identical_zero = true;
    for case in 0..50 {
        let spec = lattice(2 + case % 7);
        let mut draw = |spec: &LatticeSpec| {
            VolSurface::from_fn(spec, |_, _| {
                (
                    rng.random_range(spec.sigma_min..spec.sigma_max),
                    rng.random_range(spec.b0 - spec.s..spec.b0 + spec.s),
                )
            })
        };
        let (a, b) = (draw(&spec), draw(&spec));
        worst = worst.max((tree_entropy_chain(&a, &b, &spec)? - tree_entropy_paths(&a, &b, &spec)?).abs());
        identical_zero &= tree_entropy_chain(&a, &a, &spec)? == 0.0;
    }
    outcome(
        worst <= CHAIN_TOL && identical_zero,
        format!("50 surfaces, max |chain-paths|={worst:.3e}, identical->0: {identical_zero}"),
    )
}

fn gamma_benchmark() -> Result<Outcome> {
    let q = q_rate(1.0, 1.44, &lattice(1))?;
    let mut gaps = Vec::new();
    let mut scaled = Vec::new();
    for n in [32, 64, 128, 256] {
        let spec = lattice(n);
        let (a, b) = (
            VolSurface::constant(&spec, 1.0, 0.1),
            VolSurface::constant(&spec, 1.2, 0.1),
        );
        gaps.push((tree_entropy_chain(&a, &b, &spec)? / n as f64 - q).abs());
        scaled.push(dl_gap(&a, &b, &spec)?.n_times_gap);
    }
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let (lo, hi) = scaled
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    outcome(
        gaps[3] <= GAMMA_TOL && decreasing && hi / lo <= DL_BAND,
        format!("q(1,1.44)={q:.9}; |H/n-q| = {gaps:?}; n*dl_gap = {scaled:.5?}"),
    )
}

fn calibration() -> Result<Outcome> {
    let spec = lattice(64);
    let tree = build_tree(&VolSurface::constant(&spec, 1.1, spec.b0), &spec)?;
    let target = expectation(&tree, |x| x * x, spec.n)?;
    let payoff = Payoff::Power {
        exponent: 2,
        scale: 1.0 / target,
    };
    let problem = CalibProblem::terminal(
        SigmaField::constant(1.0),
        payoff,
        Family::Constant { lo: 0.6, hi: 1.45 },
    );
    let r = calibrate(&problem, &spec, CALIB_EPS)?;
    let a = audit(&problem, &spec, CALIB_EPS, &r, 200)?;
    let theta = r.theta_star[0];
    outcome(
        (theta - 1.1).abs() <= CALIB_TOL && a.ok,
        format!(
            "theta*={theta:.8} H={:.3e} slack={:.2e}; audit: {} feasible of 200, {} improvements",
            r.entropy, r.slack, a.feasible, a.improvements
        ),
    )
}

fn schedule_sanity() -> Result<Outcome> {
    let p = bernoulli_problem(Target::Point(vec![0.7]));
    let s = solve_dual(&p)?;
    let centered = |n: u64| -> Result<(f64, f64)> {
        let eps = enlargement_berry_esseen(&s, n, BE_MARGIN)?;
        let event = band_around(&p, &s.moment, eps, Norm::Sup)?;
        let lp = exact_event_log_probability(p.alpha(), n, &event)?;
        Ok((lp / n as f64, lp / n as f64 + s.entropy))
    };
    let (raw64, c64) = centered(64)?;
    let (raw512, c512) = centered(512)?;
    outcome(
        c512.abs() < c64.abs(),
        format!("(1/n)log P + H: n=64 {c64:.5}, n=512 {c512:.5} (raw (1/n)log P: {raw64:.5}, {raw512:.5})"),
    )
}

fn determinism() -> Result<Outcome> {
    let alpha = FiniteMeasure::bernoulli(0.5).unwrap();
    let event = ConditioningEvent::moment_band(vec![vec![0.0], vec![1.0]], vec![0.7], 0.1, Norm::Sup)?;
    let mc = || -> Result<String> {
        let e = run_conditional_mc(&alpha, 20, &event, 2, 20_000, 11, 4)?;
        Ok(format!("{:?} {} {:?}", e.law.weights(), e.accepted, e.std_errors))
    };
    let space = Arc::new(MetricSpace::line(&[0.0, 0.5, 1.0, 2.0])?);
    let nu = FiniteMeasure::from_unnormalized(space, vec![0.1, 0.4, 0.3, 0.2])?;
    let sched = || -> Result<String> {
        let rows = marginal_schedule_check(
            &nu,
            MarginalMetric::Fm,
            &|n| 1.0 / (n as f64).sqrt(),
            &[16, 64],
            500,
            3,
            4,
        )?;
        Ok(serde_json::to_string(&rows).unwrap())
    };
    let spec = lattice(2);
    let surf = VolSurface::constant(&spec, 1.0, 0.1);
    let tree = build_tree(&surf, &spec)?;
    let mem = Membership {
        epsilon: 0.5,
        min_mass: 0.0,
        modulus: Modulus::Unbounded,
        rel_tol: DEFAULT_REL_TOL,
        payoff: Payoff::Power {
            exponent: 2,
            scale: 1.0,
        },
    };
    let tree_mc = || -> Result<String> {
        Ok(serde_json::to_string(&gibbs_tree_mc(&spec, &surf, &tree, &mem, 200, 500, 9, 4)?).unwrap())
    };
    let same = mc()? == mc()? && sched()? == sched()? && tree_mc()? == tree_mc()?;
    outcome(
        same,
        "conditional MC, schedule MC and tree MC tables byte-identical on re-run (4 workers)".into(),
    )
}

fn main() -> ExitCode {
    type Check = fn() -> Result<Outcome>;
    let criteria: [(&str, f64, Check); 10] = [
        ("Bernoulli I-projection", 1.0, bernoulli_projection),
        ("exact Gibbs conditioning", 1.0, exact_gibbs),
        ("Csiszar bound", 5.0, csiszar),
        ("metric inequality suite", 30.0, metric_suite),
        ("Sinkhorn bridge", 10.0, sinkhorn_bridge),
        ("tree entropy chain rule", 20.0, chain_rule),
        ("Gamma-convergence benchmark", 60.0, gamma_benchmark),
        ("calibration round-trip", 60.0, calibration),
        ("schedule sanity", 10.0, schedule_sanity),
        ("determinism", 60.0, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match result {
            Ok(o) => (o.pass && secs < *budget, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "criterion {:>2} {} {name} ({secs:.2}s / {budget}s): {detail}",
            i + 1,
            if pass { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
