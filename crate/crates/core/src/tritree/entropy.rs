//! Relative entropy between tree measures: the chain rule, path
//! enumeration, and the continuous-time rate `q`.

use serde::{Deserialize, Serialize};

use super::{build_tree, kernel, LatticeSpec, SigmaField, TrinomialTree, TwoTimeMarginals, VolSurface};
use crate::error::{Error, Result};

/// Largest level for which paths are enumerated (3¹⁰ = 59049 paths).
pub const MAX_PATH_LEVEL: usize = 10;

fn triple_kl(p: (f64, f64, f64), q: (f64, f64, f64)) -> f64 {
    let term = |a: f64, b: f64| if a > 0.0 { a * (a / b).ln() } else { 0.0 };
    term(p.0, q.0) + term(p.1, q.1) + term(p.2, q.2)
}

/// One-step relative entropy `H(Π_{σ,b} | Π_{σ0,b0})` at level `spec.n`.
pub fn local_entropy(sigma: f64, b: f64, sigma0: f64, b0: f64, spec: &LatticeSpec) -> Result<f64> {
    let p = kernel(sigma, b, spec)?;
    let q = kernel(sigma0, b0, spec)?;
    if (q.0 == 0.0 || q.2 == 0.0) && ((q.0 == 0.0 && p.0 > 0.0) || (q.2 == 0.0 && p.2 > 0.0)) {
        return Ok(f64::INFINITY);
    }
    Ok(triple_kl(p, q))
}

/// `H(Q^n_{σ,b} | Q^n_{σ0,b0})` as `Σ_k E[h(k, X_k)]` over the node marginals
/// of the `(σ, b)` tree.
pub fn tree_entropy_chain(surface: &VolSurface, surface0: &VolSurface, spec: &LatticeSpec) -> Result<f64> {
    let tree = build_tree(surface, spec)?;
    chain_on_tree(&tree, surface0)
}

pub(crate) fn chain_on_tree(tree: &TrinomialTree, surface0: &VolSurface) -> Result<f64> {
    let spec = &tree.spec;
    if surface0.n != spec.n {
        return Err(Error::InvalidArgument("reference surface has a different level".into()));
    }
    let mut total = 0.0;
    for k in 0..spec.n {
        for (i, p) in tree.node_prob[k].iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let q = kernel(surface0.sigma[k][i], surface0.b[k][i], spec)?;
            total += p * triple_kl(tree.transitions[k][i], q);
        }
    }
    Ok(total)
}

/// Same quantity by summing `Q(path)·ln(dQ/dQ0)(path)` over all `3ⁿ` paths.
pub fn tree_entropy_paths(surface: &VolSurface, surface0: &VolSurface, spec: &LatticeSpec) -> Result<f64> {
    let q = PathMeasure::from_tree(&build_tree(surface, spec)?)?;
    let q0 = PathMeasure::from_tree(&build_tree(surface0, spec)?)?;
    Ok(q.relative_entropy(&q0))
}

/// A law on the `3ⁿ` paths of a level-`n` lattice. Path codes are base 3,
/// first step most significant; digit 0 is up, 1 stay, 2 down.
#[derive(Debug, Clone, PartialEq)]
pub struct PathMeasure {
    pub spec: LatticeSpec,
    pub weights: Vec<f64>,
}

pub(crate) fn step_of(digit: usize) -> i64 {
    1 - digit as i64
}

impl PathMeasure {
    pub fn from_weights(spec: &LatticeSpec, weights: Vec<f64>) -> Result<Self> {
        check_level(spec.n)?;
        if weights.len() != 3usize.pow(spec.n as u32) {
            return Err(Error::InvalidArgument(format!(
                "need 3^{} path weights, got {}",
                spec.n,
                weights.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidMeasure(
                "path weights must be nonnegative with positive total".into(),
            ));
        }
        Ok(Self {
            spec: *spec,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// Law of the tree's paths.
    pub fn from_tree(tree: &TrinomialTree) -> Result<Self> {
        let n = tree.spec.n;
        check_level(n)?;
        // Breadth-first over prefixes: `probs[c]` for prefix code `c` of
        // length `k`, ending at `ends[c]`.
        let mut probs = vec![1.0];
        let mut ends = vec![0i64];
        for k in 0..n {
            let mut np = Vec::with_capacity(probs.len() * 3);
            let mut ne = Vec::with_capacity(probs.len() * 3);
            for (p, j) in probs.iter().zip(&ends) {
                let (m, r, d) = tree.transition(k, *j);
                for (digit, t) in [m, r, d].into_iter().enumerate() {
                    np.push(p * t);
                    ne.push(j + step_of(digit));
                }
            }
            probs = np;
            ends = ne;
        }
        Ok(Self {
            spec: tree.spec,
            weights: probs,
        })
    }

    /// Node positions `j_0 = 0, j_1, …, j_n` of path `code`.
    pub fn path(&self, code: usize) -> Vec<i64> {
        let n = self.spec.n;
        let mut out = Vec::with_capacity(n + 1);
        out.push(0);
        let mut j = 0;
        for t in (0..n).rev() {
            j += step_of((code / 3usize.pow(t as u32)) % 3);
            out.push(j);
        }
        out
    }

    /// `Σ Q ln(Q/R)`, `+∞` when `Q` charges a path `R` does not.
    pub fn relative_entropy(&self, other: &PathMeasure) -> f64 {
        let mut h = 0.0;
        for (p, q) in self.weights.iter().zip(&other.weights) {
            if *p > 0.0 {
                if *q == 0.0 {
                    return f64::INFINITY;
                }
                h += p * (p / q).ln();
            }
        }
        h
    }

    /// `P(X_{k/n} = j)` as `marginals[k][j + k]`.
    pub fn level_marginals(&self) -> Vec<Vec<f64>> {
        self.two_time().node
    }

    /// Node masses and one-step joint masses.
    pub fn two_time(&self) -> TwoTimeMarginals {
        let n = self.spec.n;
        let mut tt = TwoTimeMarginals::zeros(n);
        for (code, w) in self.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let path = self.path(code);
            for k in 0..n {
                let i = (path[k] + k as i64) as usize;
                tt.node[k][i] += w;
                let digit = (1 - (path[k + 1] - path[k])) as usize;
                tt.joint[k][i][digit] += w;
            }
            tt.node[n][(path[n] + n as i64) as usize] += w;
        }
        tt
    }

    /// The tree's path law with the last step made to depend on the node
    /// two steps back while keeping every conditional given the current
    /// node. At each level-`(n−1)` node with two charged predecessors,
    /// `c = eps·min(w_a, w_b)·min(m, d)` moves from down to up after `a` and
    /// from up to down after `b`. Needs `n ≥ 2` and `0 ≤ eps < 1`.
    pub fn history_perturbed(tree: &TrinomialTree, eps: f64) -> Result<Self> {
        let n = tree.spec.n;
        if n < 2 || !(0.0..1.0).contains(&eps) {
            return Err(Error::InvalidArgument(
                "history perturbation needs n >= 2 and eps in [0, 1)".into(),
            ));
        }
        let mut q = Self::from_tree(tree)?;
        // joint masses w[(pred, j)] of (X_{n−2}, X_{n−1})
        let mut pair = std::collections::BTreeMap::<(i64, i64), f64>::new();
        for (code, w) in q.weights.iter().enumerate() {
            let p = q.path(code);
            *pair.entry((p[n - 2], p[n - 1])).or_default() += w;
        }
        // (pred, j) -> shift applied to the conditional of the last step
        let mut shift = std::collections::BTreeMap::<(i64, i64), f64>::new();
        let last = (n - 1) as i64;
        for j in -last..=last {
            let preds: Vec<(i64, f64)> = (j - 1..=j + 1)
                .filter_map(|a| pair.get(&(a, j)).filter(|w| **w > 0.0).map(|w| (a, *w)))
                .collect();
            if preds.len() < 2 {
                continue;
            }
            let (m, _, d) = tree.transition(n - 1, j);
            let (a, wa) = preds[0];
            let (b, wb) = preds[1];
            let c = eps * wa.min(wb) * m.min(d);
            shift.insert((a, j), c / wa);
            shift.insert((b, j), -c / wb);
        }
        for code in 0..q.weights.len() {
            let p = q.path(code);
            if let Some(s) = shift.get(&(p[n - 2], p[n - 1])) {
                let (m, _, d) = tree.transition(n - 1, p[n - 1]);
                let step = p[n] - p[n - 1];
                let base = match step {
                    1 => m,
                    -1 => d,
                    _ => continue,
                };
                if base > 0.0 {
                    q.weights[code] *= (base + s * step as f64) / base;
                }
            }
        }
        Ok(q)
    }
}

fn check_level(n: usize) -> Result<()> {
    if n > MAX_PATH_LEVEL {
        return Err(Error::BudgetExceeded {
            needed: 3f64.powi(n as i32),
            budget: 3f64.powi(MAX_PATH_LEVEL as i32),
        });
    }
    Ok(())
}

/// `(H(Q|Q⁰), H(Q|Q^{σ,b}) + H(Q^{σ,b}|Q⁰))` for a path law `q` whose
/// one-step conditionals given the current node are those of the `(σ, b)`
/// tree.
pub fn entropy_decomposition_check(
    q: &PathMeasure,
    surface: &VolSurface,
    surface0: &VolSurface,
    spec: &LatticeSpec,
) -> Result<(f64, f64)> {
    let tree = build_tree(surface, spec)?;
    let tt = q.two_time();
    for k in 0..spec.n {
        for (i, mass) in tt.node[k].iter().enumerate() {
            if *mass <= 0.0 {
                continue;
            }
            let (m, r, d) = tree.transitions[k][i];
            let cond = tt.joint[k][i].map(|x| x / mass);
            let dev = (cond[0] - m).abs().max((cond[1] - r).abs()).max((cond[2] - d).abs());
            if dev > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "conditional at node ({k}, {}) differs from the tree kernel by {dev:e}",
                    i as i64 - k as i64
                )));
            }
        }
    }
    let p_sigma = PathMeasure::from_tree(&tree)?;
    let p0 = PathMeasure::from_tree(&build_tree(surface0, spec)?)?;
    let lhs = q.relative_entropy(&p0);
    let rhs = q.relative_entropy(&p_sigma) + chain_on_tree(&tree, surface0)?;
    Ok((lhs, rhs))
}

/// `q(x, y) = ln(x/y)·x/α² + ln((α²−x)/(α²−y))·(1 − x/α²)`: the `n → ∞`
/// limit of the one-step entropy for variances `x, y ∈ (0, α²)`.
pub fn q_rate(x: f64, y: f64, spec: &LatticeSpec) -> Result<f64> {
    let a2 = spec.alpha * spec.alpha;
    for v in [x, y] {
        if !(v > 0.0 && v < a2) {
            return Err(Error::InvalidArgument(format!("q argument {v} outside (0, alpha^2)")));
        }
    }
    Ok((x / y).ln() * x / a2 + ((a2 - x) / (a2 - y)).ln() * (1.0 - x / a2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlGap {
    /// `max |h(k, j) − q(σ², σ0²)|` over charged nodes.
    pub max_gap: f64,
    pub n_times_gap: f64,
}

/// Largest gap `|h − q(σ², σ0²)|` between the one-step entropy and the
/// rate, over nodes charged by the `(σ, b)` tree.
pub fn dl_gap(surface: &VolSurface, surface0: &VolSurface, spec: &LatticeSpec) -> Result<DlGap> {
    let tree = build_tree(surface, spec)?;
    let nf = spec.n as f64;
    let mut max_gap: f64 = 0.0;
    for k in 0..spec.n {
        for (i, p) in tree.node_prob[k].iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let (s, s0) = (surface.sigma[k][i], surface0.sigma[k][i]);
            let h = local_entropy(s, surface.b[k][i], s0, surface0.b[k][i], spec)?;
            max_gap = max_gap.max((h - q_rate(s * s, s0 * s0, spec)?).abs());
        }
    }
    Ok(DlGap {
        max_gap,
        n_times_gap: nf * max_gap,
    })
}

/// `E[(1/N)·Σ_i q(σ²(i/N, X_{i/N}), σ0²(i/N, X_{i/N}))]` under the level-`N`
/// `(σ, b0)` tree, a discretization of `I(σ|σ0)`.
pub fn i_rate(sigma: &SigmaField, sigma0: &SigmaField, spec: &LatticeSpec, level: usize) -> Result<f64> {
    let sn = spec.with_n(level);
    sn.validate()?;
    let tree = build_tree(&VolSurface::from_field(&sn, sigma), &sn)?;
    let mut total = 0.0;
    for k in 0..level {
        for (i, p) in tree.node_prob[k].iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            let (t, x) = (sn.t(k), sn.x(i as i64 - k as i64));
            let (a, b) = (sigma.at(t, x), sigma0.at(t, x));
            total += p * q_rate(a * a, b * b, &sn)?;
        }
    }
    Ok(total / level as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub mean: f64,
    /// `E[X_1] − b`.
    pub mean_gap: f64,
    pub variance: f64,
    /// `Var[X_1] − σ²`.
    pub variance_gap: f64,
    /// Step size `α/√n`.
    pub max_increment: f64,
}

/// Time-1 mean and variance of constant-coefficient trees against the
/// diffusion values `b` and `σ²`.
pub fn trinomial_weak_convergence_probe(
    sigma: f64,
    b: f64,
    spec: &LatticeSpec,
    n_list: &[usize],
) -> Result<Vec<ProbeRow>> {
    n_list
        .iter()
        .map(|&n| {
            let sn = spec.with_n(n);
            let tree = build_tree(&VolSurface::constant(&sn, sigma, b), &sn)?;
            let mean = super::expectation(&tree, |x| x, n)?;
            let second = super::expectation(&tree, |x| x * x, n)?;
            let variance = second - mean * mean;
            Ok(ProbeRow {
                n,
                mean,
                mean_gap: mean - b,
                variance,
                variance_gap: variance - sigma * sigma,
                max_increment: sn.alpha / (n as f64).sqrt(),
            })
        })
        .collect()
}
