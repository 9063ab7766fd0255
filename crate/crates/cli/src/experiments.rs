//! Experiment drivers. Each returns its tables; the column lists here are
//! the documented output format.

use std::cell::RefCell;
use std::collections::HashMap;

use thinsets::bridge::{bridge_entropy, bridge_measure, marginal_schedule_check, sinkhorn};
use thinsets::gibbs::{exact_conditional, run_conditional_mc, sanov_sandwich, ConditioningEvent};
use thinsets::iproj::{brute_force_projection, solve_dual, MomentProblem, Norm, Target};
use thinsets::measures::{
    covering_bound_measures, covering_number, epsilon_schedule_metric, tv_distance, MeasureMetric,
};
use thinsets::tritree::{
    audit, build_tree, calibrate, epsilon0, gibbs_tree_mc, i_rate, tree_entropy_chain, Membership, VolSurface,
};
use thinsets::{FiniteMeasure, MetricSpace};

use crate::config::{
    BridgeParams, CalibrateParams, CoveringParams, EventCfg, ExperimentConfig, GammaParams, GibbsParams, IprojParams,
    Method, Params, SchedulesParams, Shrink,
};
use crate::error::CliError;
use crate::table::{Cell, Table};

type Tables = Result<Vec<Table>, CliError>;

pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Tables {
    match &cfg.params {
        Params::Iproj(p) => iproj(p),
        Params::Gibbs(p) => gibbs(p, cfg.seed, workers),
        Params::Bridge(p) => bridge(p),
        Params::Calibrate(p) => calibration(p, cfg.seed, workers),
        Params::Gamma(p) => gamma(p),
        Params::Covering(p) => covering(p),
        Params::Schedules(p) => schedules(p, cfg.seed, workers),
    }
}

fn opt(v: Option<f64>) -> Cell {
    v.map_or(Cell::Text(String::new()), Cell::Real)
}

fn label(space: &MetricSpace, i: usize) -> Cell {
    Cell::Text(space.labels()[i].clone())
}

/// Tables `summary`, `alpha_star` and, with a Sanov sweep, `sanov`.
fn iproj(p: &IprojParams) -> Tables {
    let problem = p.problem()?;
    let sol = solve_dual(&problem)?;
    let mut summary = Table::summary();
    for (i, l) in sol.lambda_star.iter().enumerate() {
        summary.kv(format!("lambda_star_{i}"), *l);
    }
    for (i, m) in sol.moment.iter().enumerate() {
        summary.kv(format!("moment_{i}"), *m);
    }
    summary.kv("entropy", sol.entropy);
    summary.kv("log_z", sol.log_z);
    summary.kv("variance", sol.variance);
    summary.kv("iterations", sol.iterations);
    if let Some(step) = p.brute_step {
        let (_, h) = brute_force_projection(&problem, step)?;
        summary.kv("brute_entropy", h);
    }

    let alpha = problem.alpha();
    let mut law = Table::new("alpha_star", &["index", "label", "alpha", "alpha_star"]);
    for i in 0..alpha.len() {
        law.push(vec![
            i.into(),
            label(alpha.space(), i),
            alpha.weights()[i].into(),
            sol.alpha_star.weights()[i].into(),
        ]);
    }
    let mut tables = vec![summary, law];

    if let Some(s) = &p.sanov {
        let schedule = |n: u64| s.schedule.epsilon(&sol, n);
        let rows = sanov_sandwich(&problem, &sol, &schedule, s.norm, &s.n_list)?;
        let mut t = Table::new(
            "sanov",
            &[
                "n",
                "epsilon",
                "p_event",
                "log_p_over_n",
                "neg_entropy",
                "centered",
                "upper",
                "centering_bound",
                "dst_bound",
                "ok",
            ],
        );
        for r in rows {
            t.push(vec![
                r.n.into(),
                r.epsilon.into(),
                r.p_event.into(),
                r.log_p_over_n.into(),
                r.neg_entropy.into(),
                r.centered.into(),
                opt(r.upper),
                opt(r.centering_bound),
                opt(r.dst_bound),
                r.ok.into(),
            ]);
        }
        tables.push(t);
    }
    Ok(tables)
}

/// Law that the conditional `k`-law is compared with: the explicit
/// reference, else `α` for the whole space, the I-projection onto a band,
/// or the center of a ball.
fn gibbs_reference(p: &GibbsParams, alpha: &FiniteMeasure) -> Result<FiniteMeasure, CliError> {
    let space = alpha.space().clone();
    Ok(match (&p.reference, &p.event) {
        (Some(w), _) => FiniteMeasure::new(space, w.clone())?,
        (None, EventCfg::Whole) => alpha.clone(),
        (None, EventCfg::Ball { target, .. }) => FiniteMeasure::new(space, target.clone())?,
        (
            None,
            EventCfg::Band {
                f,
                center,
                radius,
                norm,
            },
        ) => {
            // A shrinking band concentrates on its center; a fixed sup-norm
            // band is the box around it.
            let target = if p.shrink == Shrink::SqrtN || *norm == Norm::Euclidean || *radius == 0.0 {
                Target::Point(center.clone())
            } else {
                Target::Box {
                    lo: center.iter().map(|c| c - radius).collect(),
                    hi: center.iter().map(|c| c + radius).collect(),
                }
            };
            solve_dual(&MomentProblem::new(alpha.clone(), f.clone(), target)?)?.alpha_star
        }
    })
}

fn event_at(event: &EventCfg, alpha: &FiniteMeasure, radius: f64) -> Result<ConditioningEvent, CliError> {
    Ok(match event {
        EventCfg::Whole => ConditioningEvent::Whole,
        EventCfg::Band { f, center, norm, .. } => {
            ConditioningEvent::moment_band(f.clone(), center.clone(), radius, *norm)?
        }
        EventCfg::Ball { target, metric, .. } => ConditioningEvent::metric_ball(
            FiniteMeasure::new(alpha.space().clone(), target.clone())?,
            *metric,
            radius,
        )?,
    })
}

/// Tables `curve` (one row per `n`) and `law` (the conditional `k`-law per
/// `n`). Monte Carlo rows use the stream `seed + row index`.
fn gibbs(p: &GibbsParams, seed: u64, workers: usize) -> Tables {
    let alpha = p.alpha.build()?;
    let product = gibbs_reference(p, &alpha)?.power(p.k);
    let base_radius = match &p.event {
        EventCfg::Whole => f64::INFINITY,
        EventCfg::Band { radius, .. } | EventCfg::Ball { radius, .. } => *radius,
    };
    let mut curve = Table::new(
        "curve",
        &["n", "k", "radius", "p_event", "log_p_event", "accepted", "trials", "tv"],
    );
    let mut law = Table::new("law", &["n", "cell", "label", "conditional", "reference", "std_error"]);
    for (row, &n) in p.n_list.iter().enumerate() {
        let radius = match p.shrink {
            Shrink::None => base_radius,
            Shrink::SqrtN => base_radius / (n as f64).sqrt(),
        };
        let event = event_at(&p.event, &alpha, radius)?;
        let est = match p.method {
            Method::Exact => exact_conditional(&alpha, n, &event, p.k)?,
            Method::Mc => run_conditional_mc(&alpha, n, &event, p.k, p.trials, seed.wrapping_add(row as u64), workers)?,
        };
        let tv = tv_distance(&est.law, &product)?;
        curve.push(vec![
            n.into(),
            p.k.into(),
            radius.into(),
            est.acceptance_rate.into(),
            opt(est.log_event_probability),
            est.accepted.into(),
            est.n_trials.into(),
            tv.into(),
        ]);
        for c in 0..est.law.len() {
            law.push(vec![
                n.into(),
                c.into(),
                label(est.law.space(), c),
                est.law.weights()[c].into(),
                product.weights()[c].into(),
                opt(est.std_errors.as_ref().map(|s| s[c])),
            ]);
        }
    }
    Ok(vec![curve, law])
}

/// Tables `summary`, `potentials`, `coupling` and `history`.
fn bridge(p: &BridgeParams) -> Tables {
    let problem = p.problem()?;
    let pot = sinkhorn(&problem, p.tol, p.max_iter)?;
    let e = bridge_entropy(&problem, &pot)?;
    let joint = bridge_measure(&problem, &pot)?;

    let mut summary = Table::summary();
    summary.kv("residual", pot.residual);
    summary.kv("iterations", pot.iterations);
    summary.kv("h_direct", e.direct);
    summary.kv("h_potentials", e.potentials);
    summary.kv("entropy_gap", (e.direct - e.potentials).abs());

    let (su, sv) = (problem.mu0().space(), problem.mu1().space());
    let mut potentials = Table::new("potentials", &["side", "index", "label", "value"]);
    for (i, f) in pot.f.iter().enumerate() {
        potentials.push(vec!["f".into(), i.into(), label(su, i), (*f).into()]);
    }
    for (j, g) in pot.g.iter().enumerate() {
        potentials.push(vec!["g".into(), j.into(), label(sv, j), (*g).into()]);
    }
    let nv = sv.len();
    let mut coupling = Table::new("coupling", &["u", "v", "weight"]);
    for (c, w) in joint.weights().iter().enumerate() {
        coupling.push(vec![(c / nv).into(), (c % nv).into(), (*w).into()]);
    }
    let mut history = Table::new("history", &["iteration", "residual"]);
    for (i, r) in pot.history.iter().enumerate() {
        history.push(vec![(i + 1).into(), (*r).into()]);
    }
    Ok(vec![summary, potentials, coupling, history])
}

/// Tables `summary`, `constraints` and, with `tree_mc`, `terminal`.
fn calibration(p: &CalibrateParams, seed: u64, workers: usize) -> Tables {
    let n = p
        .lattice
        .n
        .ok_or_else(|| thinsets::Error::InvalidArgument("calibration needs a lattice level".into()))?;
    let spec = p.lattice.at(n)?;
    spec.check_level()?;
    let r = calibrate(&p.problem, &spec, p.epsilon)?;
    let a = audit(&p.problem, &spec, p.epsilon, &r, p.audit_points)?;
    let star = VolSurface::from_field(&spec, &r.sigma_star);
    let first = p.problem.constraints[0];
    // The certificate radius is stated for payoffs normalized to target 1.
    let normalized = if first.target != 0.0 {
        first.payoff.scaled(1.0 / first.target)
    } else {
        first.payoff
    };
    let e0 = epsilon0(&star, &spec, &normalized)?;

    let mut summary = Table::summary();
    for (i, t) in r.theta_star.iter().enumerate() {
        summary.kv(format!("theta_star_{i}"), *t);
    }
    summary.kv("entropy", r.entropy);
    summary.kv("entropy_per_step", r.entropy_per_step);
    summary.kv("slack", r.slack);
    summary.kv("epsilon0", e0);
    summary.kv("evaluations", r.evaluations);
    summary.kv("audit_points", a.points);
    summary.kv("audit_feasible", a.feasible);
    summary.kv("audit_improvements", a.improvements);
    summary.kv("audit_best_feasible_entropy", opt(a.best_feasible_entropy));
    summary.kv("audit_ok", a.ok);

    let mut constraints = Table::new("constraints", &["index", "maturity", "target", "moment", "residual"]);
    for (i, (c, m)) in p.problem.constraints.iter().zip(&r.moments).enumerate() {
        constraints.push(vec![
            i.into(),
            c.maturity.into(),
            c.target.into(),
            (*m).into(),
            (m - c.target).into(),
        ]);
    }
    let mut tables = vec![summary, constraints];

    if let Some(t) = &p.tree_mc {
        let membership = Membership {
            epsilon: t.epsilon,
            min_mass: t.min_mass,
            modulus: t.modulus.clone(),
            rel_tol: t.rel_tol,
            payoff: normalized,
        };
        let sigma0 = VolSurface::from_field(&spec, &p.problem.sigma0);
        let reference = build_tree(&star, &spec)?;
        let rep = gibbs_tree_mc(&spec, &sigma0, &reference, &membership, t.m, t.trials, seed, workers)?;
        tables[0].kv("tree_mc_trials", rep.trials);
        tables[0].kv("tree_mc_accepted", rep.accepted);
        tables[0].kv("tree_mc_acceptance_rate", rep.acceptance_rate);
        tables[0].kv("tree_mc_fm_to_reference", rep.fm_to_reference);
        let mut terminal = Table::new("terminal", &["j", "x", "mass", "reference_mass"]);
        for (i, m) in rep.terminal.iter().enumerate() {
            let j = i as i64 - n as i64;
            terminal.push(vec![
                j.into(),
                spec.x(j).into(),
                (*m).into(),
                reference.node_prob[n][i].into(),
            ]);
        }
        tables.push(terminal);
    }
    Ok(tables)
}

/// Table `gamma`: `H/n` along the sweep against `I` at the rate level.
fn gamma(p: &GammaParams) -> Tables {
    let top = p.n_list.iter().copied().max().unwrap_or(1);
    let level = p.rate_level.unwrap_or(top.max(1024));
    let rate = i_rate(&p.sigma, &p.sigma0, &p.lattice.at(level)?, level)?;
    let mut t = Table::new("gamma", &["n", "H_over_n", "I_rate", "gap", "n_times_gap"]);
    for &n in &p.n_list {
        let spec = p.lattice.at(n)?;
        spec.check_level()?;
        let h = tree_entropy_chain(
            &VolSurface::from_field(&spec, &p.sigma),
            &VolSurface::from_field(&spec, &p.sigma0),
            &spec,
        )?;
        let h_over_n = h / n as f64;
        let gap = (h_over_n - rate).abs();
        t.push(vec![
            n.into(),
            h_over_n.into(),
            rate.into(),
            gap.into(),
            (n as f64 * gap).into(),
        ]);
    }
    Ok(vec![t])
}

/// Table `covering`: `N(ε)` and the induced bounds on covers of the
/// measure space (Prohorov uses `N(ε)`, Fortet-Mourier `N(ε/2)`).
fn covering(p: &CoveringParams) -> Tables {
    let space = p.space.build()?;
    let mut t = Table::new(
        "covering",
        &["epsilon", "count", "method", "centers", "bound_prohorov", "bound_fm"],
    );
    for &eps in &p.epsilons {
        let r = covering_number(&space, eps)?;
        let half = covering_number(&space, eps / 2.0)?;
        let method = match r.method {
            thinsets::measures::CoverMethod::Exact => "exact",
            thinsets::measures::CoverMethod::Greedy => "greedy",
        };
        t.push(vec![
            eps.into(),
            r.count.into(),
            method.into(),
            r.centers.join(";").into(),
            covering_bound_measures(r.count, eps, MeasureMetric::Prohorov)?.into(),
            covering_bound_measures(half.count, eps, MeasureMetric::FortetMourier)?.into(),
        ]);
    }
    Ok(vec![t])
}

/// Table `schedules`: Monte Carlo probability that `L_n` is within
/// `c·n^(−power)` of the measure, next to the covering-number schedule.
fn schedules(p: &SchedulesParams, seed: u64, workers: usize) -> Tables {
    let nu = p.measure.build()?;
    let (c, power) = (p.c, p.power);
    let eps = move |n: u64| c * (n as f64).powf(-power);
    let rows = marginal_schedule_check(&nu, p.metric, &eps, &p.n_list, p.trials, seed, workers)?;

    // N(ε) only changes where ε crosses a pairwise distance; cache by that.
    let space = nu.space();
    let mut dists: Vec<f64> = (0..space.len())
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| space.dist(i, j))
        .collect();
    dists.sort_by(f64::total_cmp);
    let cache: RefCell<HashMap<usize, f64>> = RefCell::default();
    let cover = |e: f64| {
        let key = dists.partition_point(|d| *d < e);
        *cache
            .borrow_mut()
            .entry(key)
            .or_insert_with(|| covering_number(space, e).map_or(f64::INFINITY, |r| r.count as f64))
    };

    let mut t = Table::new(
        "schedules",
        &[
            "n",
            "epsilon",
            "probability",
            "metric_epsilon",
            "metric_criterion",
            "metric_warning",
        ],
    );
    for r in rows {
        let ms = epsilon_schedule_metric(cover, r.n);
        t.push(vec![
            r.n.into(),
            r.epsilon.into(),
            r.probability.into(),
            ms.epsilon.into(),
            ms.criterion.into(),
            ms.warning.into(),
        ]);
    }
    Ok(vec![t])
}
