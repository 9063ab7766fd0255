//! Recovering coefficients from two-time marginals, membership in the
//! calibration neighbourhood, and rejection sampling of tree paths.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::entropy::step_of;
use super::{build_tree, LatticeSpec, Payoff, TrinomialTree, VolSurface};
use crate::error::{Error, Result};
use crate::gibbs::{cdf_of, draw};
use crate::measures::{fm_distance, FiniteMeasure, MetricSpace};
use crate::rng::run_partitioned;

/// Default relaxation of the membership inequalities for sampled laws.
pub const DEFAULT_REL_TOL: f64 = 0.05;

/// Node masses `node[k][j + k]` (`k = 0..=n`) and one-step joint masses
/// `joint[k][j + k] = [up, stay, down]` (`k = 0..n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoTimeMarginals {
    pub n: usize,
    pub node: Vec<Vec<f64>>,
    pub joint: Vec<Vec<[f64; 3]>>,
}

impl TwoTimeMarginals {
    pub(crate) fn zeros(n: usize) -> Self {
        Self {
            n,
            node: (0..=n).map(|k| vec![0.0; 2 * k + 1]).collect(),
            joint: (0..n).map(|k| vec![[0.0; 3]; 2 * k + 1]).collect(),
        }
    }

    pub fn from_tree(tree: &TrinomialTree) -> Self {
        let n = tree.spec.n;
        let joint = (0..n)
            .map(|k| {
                tree.node_prob[k]
                    .iter()
                    .zip(&tree.transitions[k])
                    .map(|(p, (m, r, d))| [p * m, p * r, p * d])
                    .collect()
            })
            .collect();
        Self {
            n,
            node: tree.node_prob.clone(),
            joint,
        }
    }

    fn add(&mut self, other: &Self) {
        for (a, b) in self.node.iter_mut().zip(&other.node) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        for (a, b) in self.joint.iter_mut().zip(&other.joint) {
            for (x, y) in a.iter_mut().zip(b) {
                (0..3).for_each(|s| x[s] += y[s]);
            }
        }
    }

    fn scale(&mut self, f: f64) {
        self.node.iter_mut().flatten().for_each(|x| *x *= f);
        self.joint
            .iter_mut()
            .flatten()
            .for_each(|x| x.iter_mut().for_each(|v| *v *= f));
    }
}

/// `F[k][j + k] = α√n·(up − down)/mass` (implied drift) and
/// `G[k][j + k] = α²·(up + down)/mass` (implied variance) for `k = 0..n`.
/// Every node on levels `0..n` must carry mass.
#[allow(clippy::type_complexity)]
pub fn recover_coefficients(tt: &TwoTimeMarginals, spec: &LatticeSpec) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    if tt.n != spec.n {
        return Err(Error::InvalidArgument(
            "marginals and spec have different levels".into(),
        ));
    }
    let (a, sn) = (spec.alpha, (spec.n as f64).sqrt());
    let mut f = Vec::with_capacity(spec.n);
    let mut g = Vec::with_capacity(spec.n);
    for k in 0..spec.n {
        let mut fr = Vec::with_capacity(2 * k + 1);
        let mut gr = Vec::with_capacity(2 * k + 1);
        for (i, (mass, [up, _, down])) in tt.node[k].iter().zip(&tt.joint[k]).enumerate() {
            if *mass <= 0.0 {
                return Err(Error::ZeroNodeMass {
                    k,
                    j: i as i64 - k as i64,
                });
            }
            fr.push(a * sn * (up - down) / mass);
            gr.push(a * a * (up + down) / mass);
        }
        f.push(fr);
        g.push(gr);
    }
    Ok((f, g))
}

/// Bound `Δ(d)` on `|√G − √G'|/2` between nodes at lattice distance
/// `d = |k−p|/n + α|j−q|/√n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Modulus {
    /// No modulus constraint.
    Unbounded,
    /// `Δ(d) = L·d`.
    Lipschitz { constant: f64 },
    /// Step function: `Δ(d)` is the largest value whose distance is `≤ d`.
    /// Entries sorted by distance with nondecreasing values.
    Table { points: Vec<(f64, f64)> },
}

impl Modulus {
    pub fn at(&self, d: f64) -> f64 {
        match self {
            Modulus::Unbounded => f64::INFINITY,
            Modulus::Lipschitz { constant } => constant * d,
            Modulus::Table { points } => {
                let i = points.partition_point(|(x, _)| *x <= d + 1e-12);
                if i == 0 {
                    0.0
                } else {
                    points[i - 1].1
                }
            }
        }
    }
}

/// Modulus of continuity of a surface's volatility on the lattice:
/// `Δ(d) = max |σ(a) − σ(b)|` over node pairs (levels `0..n`) at distance
/// `≤ d`.
pub fn lattice_modulus(surface: &VolSurface, spec: &LatticeSpec) -> Modulus {
    let mut nodes = Vec::new();
    for k in 0..spec.n {
        for (i, s) in surface.sigma[k].iter().enumerate() {
            nodes.push((spec.t(k), spec.x(i as i64 - k as i64), *s));
        }
    }
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for (a, na) in nodes.iter().enumerate() {
        for nb in &nodes[a + 1..] {
            pairs.push(((na.0 - nb.0).abs() + (na.1 - nb.1).abs(), (na.2 - nb.2).abs()));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut points: Vec<(f64, f64)> = Vec::new();
    let mut best = 0.0f64;
    for (d, v) in pairs {
        best = best.max(v);
        match points.last_mut() {
            Some(last) if (last.0 - d).abs() <= 1e-12 => last.1 = best,
            _ => points.push((d, best)),
        }
    }
    Modulus::Table { points }
}

/// Membership test for the calibration neighbourhood at level `n`:
/// every node on levels `0..n` has mass `> min_mass`, implied drift in
/// `(b0 − ε, b0 + ε)`, implied variance in `(σ_min², σ_max²)`, and
/// `|√G(a) − √G(b)| < 2Δ(d(a, b))`; plus the moment band
/// `|E[F(X_1)] − 1| < ε`. With `rel_tol = δ > 0` the ranges widen by the
/// factor `1 + δ` and the modulus inequality gains `δ·σ_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub epsilon: f64,
    pub min_mass: f64,
    pub modulus: Modulus,
    pub rel_tol: f64,
    pub payoff: Payoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub ok: bool,
    pub moment: f64,
    /// First failed clause, if any.
    pub failure: Option<String>,
}

impl Membership {
    pub fn check(&self, tt: &TwoTimeMarginals, spec: &LatticeSpec) -> MembershipReport {
        let mut moment = 0.0;
        for (i, p) in tt.node[spec.n].iter().enumerate() {
            if *p > 0.0 {
                moment += p * self.payoff.eval(spec.x(i as i64 - spec.n as i64));
            }
        }
        let fail = |why: String| MembershipReport {
            ok: false,
            moment,
            failure: Some(why),
        };
        let widen = 1.0 + self.rel_tol;
        for k in 0..spec.n {
            for (i, mass) in tt.node[k].iter().enumerate() {
                if *mass <= self.min_mass {
                    return fail(format!(
                        "node ({k}, {}) mass {mass} <= {}",
                        i as i64 - k as i64,
                        self.min_mass
                    ));
                }
            }
        }
        let (f, g) = match recover_coefficients(tt, spec) {
            Ok(x) => x,
            Err(e) => return fail(e.to_string()),
        };
        let half_b = self.epsilon * widen;
        let (glo, ghi) = (spec.sigma_min.powi(2) / widen, spec.sigma_max.powi(2) * widen);
        let mut roots = Vec::new();
        for k in 0..spec.n {
            for (i, (fv, gv)) in f[k].iter().zip(&g[k]).enumerate() {
                let j = i as i64 - k as i64;
                if (fv - spec.b0).abs() >= half_b {
                    return fail(format!("implied drift {fv} at ({k}, {j}) outside the band"));
                }
                if !(*gv > glo && *gv < ghi) {
                    return fail(format!("implied variance {gv} at ({k}, {j}) out of range"));
                }
                roots.push((spec.t(k), spec.x(j), gv.sqrt()));
            }
        }
        if self.modulus != Modulus::Unbounded {
            let slack = self.rel_tol * spec.sigma_max;
            for (a, ra) in roots.iter().enumerate() {
                for rb in &roots[a + 1..] {
                    let d = (ra.0 - rb.0).abs() + (ra.1 - rb.1).abs();
                    if (ra.2 - rb.2).abs() >= 2.0 * self.modulus.at(d) + slack && (ra.2 - rb.2).abs() > 0.0 {
                        return fail(format!("modulus violated at distance {d}"));
                    }
                }
            }
        }
        if (moment - 1.0).abs() >= self.epsilon * widen {
            return fail(format!("moment {moment} outside the band"));
        }
        MembershipReport {
            ok: true,
            moment,
            failure: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsTreeReport {
    pub n: usize,
    pub m: usize,
    pub trials: u64,
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub rel_tol: f64,
    /// Time-1 marginal of the averaged accepted empirical measures.
    pub terminal: Vec<f64>,
    /// Fortet-Mourier distance from `terminal` to the reference tree's time-1
    /// marginal.
    pub fm_to_reference: f64,
}

/// Draws `m` paths from the `sigma0` tree per trial; accepts when the
/// empirical path law passes `membership`; averages accepted empirical
/// two-time marginals and compares the time-1 marginal with `reference`.
#[allow(clippy::too_many_arguments)]
pub fn gibbs_tree_mc(
    spec: &LatticeSpec,
    sigma0: &VolSurface,
    reference: &TrinomialTree,
    membership: &Membership,
    m: usize,
    trials: u64,
    seed: u64,
    workers: usize,
) -> Result<GibbsTreeReport> {
    if m == 0 || trials == 0 {
        return Err(Error::InvalidArgument("m and trials must be positive".into()));
    }
    let n = spec.n;
    let tree = build_tree(sigma0, spec)?;
    // per-node cumulative tables over (up, stay, down)
    let cdfs: Vec<Vec<Vec<f64>>> = tree
        .transitions
        .iter()
        .map(|row| {
            row.iter()
                .map(|(u, r, d)| {
                    let w = FiniteMeasure::from_unnormalized(
                        Arc::new(MetricSpace::line(&[1.0, 0.0, -1.0]).expect("three points")),
                        vec![*u, *r, *d],
                    )
                    .expect("kernel rows are probability vectors");
                    cdf_of(&w)
                })
                .collect()
        })
        .collect();

    let parts = run_partitioned(seed, trials, workers, |rng, count| {
        let mut sum = TwoTimeMarginals::zeros(n);
        let mut accepted = 0u64;
        for _ in 0..count {
            let emp = sample_empirical(&cdfs, n, m, rng);
            if membership.check(&emp, spec).ok {
                sum.add(&emp);
                accepted += 1;
            }
        }
        (sum, accepted)
    });
    let mut total = TwoTimeMarginals::zeros(n);
    let mut accepted = 0;
    for (s, a) in &parts {
        total.add(s);
        accepted += a;
    }
    if accepted == 0 {
        return Err(Error::ZeroAcceptance {
            trials,
            upper_bound: 3.0 / trials as f64,
        });
    }
    total.scale(1.0 / accepted as f64);
    let space = Arc::new(MetricSpace::line(
        &(-(n as i64)..=n as i64).map(|j| spec.x(j)).collect::<Vec<_>>(),
    )?);
    let r = FiniteMeasure::from_unnormalized(space.clone(), total.node[n].clone())?;
    let q = FiniteMeasure::from_unnormalized(space, reference.node_prob[n].clone())?;
    Ok(GibbsTreeReport {
        n,
        m,
        trials,
        accepted,
        acceptance_rate: accepted as f64 / trials as f64,
        rel_tol: membership.rel_tol,
        terminal: r.weights().to_vec(),
        fm_to_reference: fm_distance(&r, &q)?,
    })
}

fn sample_empirical(cdfs: &[Vec<Vec<f64>>], n: usize, m: usize, rng: &mut impl Rng) -> TwoTimeMarginals {
    let mut tt = TwoTimeMarginals::zeros(n);
    let w = 1.0 / m as f64;
    for _ in 0..m {
        let mut j = 0i64;
        for k in 0..n {
            let i = (j + k as i64) as usize;
            let digit = draw(&cdfs[k][i], rng);
            tt.node[k][i] += w;
            tt.joint[k][i][digit] += w;
            j += step_of(digit);
        }
        tt.node[n][(j + n as i64) as usize] += w;
    }
    tt
}
