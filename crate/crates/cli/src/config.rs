//! Experiment configuration: parsing, typed parameters and diagnostics.
//!
//! A config is a TOML or JSON document
//!
//! ```toml
//! experiment = "iproj"
//! seed = 7
//! [output]
//! format = "csv"      # or "json"
//! [params]
//! ...
//! ```
//!
//! The seed is mandatory; nothing is ever seeded from the clock.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thinsets::bridge::{BridgeProblem, MarginalMetric};
use thinsets::gibbs::BallMetric;
use thinsets::io::{BridgeProblemDoc, TargetDoc};
use thinsets::iproj::{MomentProblem, Norm, Schedule};
use thinsets::tritree::{min_level_n0, CalibProblem, LatticeSpec, Modulus, SigmaField, DEFAULT_REL_TOL};
use thinsets::{FiniteMeasure, MetricSpace};

pub const EXPERIMENTS: [&str; 7] = [
    "iproj",
    "gibbs",
    "bridge",
    "calibrate",
    "gamma",
    "covering",
    "schedules",
];

/// One problem found in a config. `path` points into the document, e.g.
/// `params.lattice.n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    /// Output directory; `--out` overrides it. Defaults to `out`.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

struct Seed(u64);

impl<'de> Deserialize<'de> for Seed {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        let parsed = match &v {
            Value::Number(n) => n.as_u64(),
            Value::String(s) => s.trim().parse::<u64>().ok(),
            _ => None,
        };
        parsed
            .map(Seed)
            .ok_or_else(|| serde::de::Error::custom(format!("seed must be a nonnegative 64-bit integer, got {v}")))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: String,
    seed: Seed,
    #[serde(default)]
    params: Value,
    #[serde(default)]
    output: OutputCfg,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub params: Params,
    pub output: OutputCfg,
    /// The parsed document, echoed into the run manifest.
    pub echo: Value,
}

#[derive(Debug, Clone)]
pub enum Params {
    Iproj(IprojParams),
    Gibbs(GibbsParams),
    Bridge(BridgeParams),
    Calibrate(CalibrateParams),
    Gamma(GammaParams),
    Covering(CoveringParams),
    Schedules(SchedulesParams),
}

// ---------------------------------------------------------------- building blocks

/// A finite metric space: `line` (points on ℝ), `points` + `dist` (a
/// distance table), or bare `points` (discrete metric).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceCfg {
    #[serde(default)]
    pub points: Option<Vec<String>>,
    #[serde(default)]
    pub line: Option<Vec<f64>>,
    #[serde(default)]
    pub dist: Option<Vec<Vec<f64>>>,
}

impl SpaceCfg {
    pub fn build(&self) -> thinsets::Result<MetricSpace> {
        match (&self.line, &self.points, &self.dist) {
            (Some(x), None, None) => MetricSpace::line(x),
            (None, Some(p), Some(d)) => MetricSpace::from_table(p.clone(), d.clone()),
            (None, Some(p), None) => Ok(MetricSpace::discrete(p.clone())),
            _ => Err(thinsets::Error::InvalidArgument(
                "give either `line`, or `points` with an optional `dist` table".into(),
            )),
        }
    }
}

/// A probability vector on a [`SpaceCfg`]. With `normalize = true` the
/// weights may be any nonnegative vector with positive sum.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureCfg {
    #[serde(default)]
    pub points: Option<Vec<String>>,
    #[serde(default)]
    pub line: Option<Vec<f64>>,
    #[serde(default)]
    pub dist: Option<Vec<Vec<f64>>>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub normalize: bool,
}

impl MeasureCfg {
    pub fn build(&self) -> thinsets::Result<FiniteMeasure> {
        let mut space = SpaceCfg {
            points: self.points.clone(),
            line: self.line.clone(),
            dist: self.dist.clone(),
        };
        if space.points.is_none() && space.line.is_none() {
            space.points = Some((0..self.weights.len()).map(|i| i.to_string()).collect());
        }
        let space = Arc::new(space.build()?);
        if self.normalize {
            FiniteMeasure::from_unnormalized(space, self.weights.clone())
        } else {
            FiniteMeasure::new(space, self.weights.clone())
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeCfg {
    /// Tree level; required by `calibrate`, replaced by `n_list` in `gamma`.
    #[serde(default)]
    pub n: Option<usize>,
    pub alpha: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub b0: f64,
    pub s: f64,
}

impl LatticeCfg {
    pub fn at(&self, n: usize) -> thinsets::Result<LatticeSpec> {
        LatticeSpec::new(n, self.alpha, self.sigma_min, self.sigma_max, self.b0, self.s)
    }

    fn check_level(&self, n: usize, path: &str, diags: &mut Vec<Diagnostic>) {
        match self.at(n) {
            Err(e) => diags.push(Diagnostic::new("params.lattice", e.to_string())),
            Ok(spec) => {
                let n0 = min_level_n0(&spec);
                if n < n0 {
                    diags.push(Diagnostic::new(
                        path,
                        format!(
                            "n = {n} is below the minimal level n0 = {n0} for this lattice; the kernel can go negative"
                        ),
                    ));
                }
            }
        }
    }
}

// ---------------------------------------------------------------- experiments

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SanovCfg {
    pub n_list: Vec<u64>,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub norm: Norm,
}

/// I-projection of `alpha` onto `{ν : ∫F dν ∈ target}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IprojParams {
    pub alpha: MeasureCfg,
    /// Moment vector at each point.
    #[serde(alias = "F")]
    pub f: Vec<Vec<f64>>,
    pub target: TargetDoc,
    #[serde(default)]
    pub brute_step: Option<f64>,
    #[serde(default)]
    pub sanov: Option<SanovCfg>,
}

impl IprojParams {
    pub fn problem(&self) -> thinsets::Result<MomentProblem> {
        MomentProblem::new(self.alpha.build()?, self.f.clone(), (&self.target).into())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EventCfg {
    Whole,
    Band {
        f: Vec<Vec<f64>>,
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        norm: Norm,
    },
    Ball {
        /// Weights on the support of `alpha`.
        target: Vec<f64>,
        #[serde(default)]
        metric: BallMetric,
        radius: f64,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Exact,
    Mc,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shrink {
    /// The radius is used as given at every `n`.
    #[default]
    None,
    /// The radius at `n` is `radius/√n`.
    SqrtN,
}

/// Law of the first `k` coordinates given `L_n ∈ event`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GibbsParams {
    pub alpha: MeasureCfg,
    pub event: EventCfg,
    pub n_list: Vec<u64>,
    #[serde(default = "one_usize")]
    pub k: usize,
    #[serde(default)]
    pub method: Method,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub shrink: Shrink,
    /// Law whose `k`-fold product the conditional law is compared with;
    /// defaults to the I-projection onto the event.
    #[serde(default)]
    pub reference: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianBridgeCfg {
    pub grid: Vec<f64>,
    pub t: f64,
    /// Initial law weights; uniform when absent.
    #[serde(default)]
    pub mu0: Option<Vec<f64>>,
    /// Target marginals, normalized on read.
    pub nu0: Vec<f64>,
    pub nu1: Vec<f64>,
}

/// Schrödinger system for a problem document or a Gaussian reference.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BridgeParams {
    #[serde(default)]
    pub problem: Option<BridgeProblemDoc>,
    #[serde(default)]
    pub gaussian: Option<GaussianBridgeCfg>,
    #[serde(default = "default_bridge_tol")]
    pub tol: f64,
    #[serde(default = "default_bridge_iter")]
    pub max_iter: usize,
}

impl BridgeParams {
    pub fn problem(&self) -> thinsets::Result<BridgeProblem> {
        match (&self.problem, &self.gaussian) {
            (Some(doc), None) => doc.to_problem(),
            (None, Some(g)) => {
                let space = Arc::new(MetricSpace::line(&g.grid)?);
                let mu0 = match &g.mu0 {
                    Some(w) => FiniteMeasure::from_unnormalized(space.clone(), w.clone())?,
                    None => FiniteMeasure::uniform(space.clone()),
                };
                let base = thinsets::bridge::gaussian_reference(&g.grid, g.t, &mu0)?;
                let nu0 = FiniteMeasure::from_unnormalized(space.clone(), g.nu0.clone())?;
                let nu1 = FiniteMeasure::from_unnormalized(space, g.nu1.clone())?;
                base.with_targets(nu0, nu1)
            }
            _ => Err(thinsets::Error::InvalidArgument(
                "give exactly one of `problem` or `gaussian`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeMcCfg {
    /// Moment and drift tolerance of the membership test.
    pub epsilon: f64,
    pub m: usize,
    pub trials: u64,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default)]
    pub min_mass: f64,
    #[serde(default = "unbounded")]
    pub modulus: Modulus,
}

/// Relative-entropy calibration on the lattice.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateParams {
    pub lattice: LatticeCfg,
    pub problem: CalibProblem,
    pub epsilon: f64,
    #[serde(default = "default_audit")]
    pub audit_points: usize,
    #[serde(default)]
    pub tree_mc: Option<TreeMcCfg>,
}

/// `H/n` against the rate `I` along a level sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaParams {
    pub lattice: LatticeCfg,
    pub sigma: SigmaField,
    pub sigma0: SigmaField,
    pub n_list: Vec<usize>,
    /// Level at which the rate `I` is discretized; defaults to
    /// `max(1024, max n_list)`.
    #[serde(default)]
    pub rate_level: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringParams {
    pub space: SpaceCfg,
    pub epsilons: Vec<f64>,
}

/// Monte Carlo `P(d(L_n, ν) ≤ c·n^(−power))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchedulesParams {
    pub measure: MeasureCfg,
    #[serde(default)]
    pub metric: MarginalMetric,
    pub n_list: Vec<u64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default = "one_f64")]
    pub c: f64,
    #[serde(default = "half")]
    pub power: f64,
}

fn one_usize() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_trials() -> u64 {
    10_000
}
fn default_bridge_tol() -> f64 {
    1e-10
}
fn default_bridge_iter() -> usize {
    1000
}
fn default_rel_tol() -> f64 {
    DEFAULT_REL_TOL
}
fn default_audit() -> usize {
    200
}
fn unbounded() -> Modulus {
    Modulus::Unbounded
}

// ---------------------------------------------------------------- loading

fn parse_text(path: &Path, text: &str) -> Result<Value, Diagnostic> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let json =
        || serde_json::from_str::<Value>(text).map_err(|e| Diagnostic::new("", format!("JSON parse error: {e}")));
    let toml = || toml::from_str::<Value>(text).map_err(|e| Diagnostic::new("", format!("TOML parse error: {e}")));
    match ext {
        "json" => json(),
        "toml" => toml(),
        _ => json().or_else(|_| toml()),
    }
}

fn typed<T: DeserializeOwned>(v: &Value, path: &str, diags: &mut Vec<Diagnostic>) -> Option<T> {
    match serde_json::from_value(v.clone()) {
        Ok(t) => Some(t),
        Err(e) => {
            diags.push(Diagnostic::new(path, e.to_string()));
            None
        }
    }
}

fn check<T>(r: thinsets::Result<T>, path: &str, diags: &mut Vec<Diagnostic>) -> Option<T> {
    r.map_err(|e| diags.push(Diagnostic::new(path, e.to_string()))).ok()
}

fn positive_list<T: PartialOrd + Default + Copy>(v: &[T], path: &str, diags: &mut Vec<Diagnostic>) {
    if v.is_empty() || v.iter().any(|x| *x <= T::default()) {
        diags.push(Diagnostic::new(path, "must be a nonempty list of positive values"));
    }
}

/// Parses and checks a config file. Every problem found is reported.
pub fn load(path: &Path) -> Result<ExperimentConfig, Vec<Diagnostic>> {
    let text = fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::new("", format!("cannot read {}: {e}", path.display()))])?;
    let echo = parse_text(path, &text).map_err(|d| vec![d])?;
    let raw: RawConfig = serde_json::from_value(echo.clone()).map_err(|e| vec![Diagnostic::new("", e.to_string())])?;
    let mut diags = Vec::new();
    let p = &raw.params;
    let params = match raw.experiment.as_str() {
        "iproj" => typed::<IprojParams>(p, "params", &mut diags).map(|x| {
            check_iproj(&x, &mut diags);
            Params::Iproj(x)
        }),
        "gibbs" => typed::<GibbsParams>(p, "params", &mut diags).map(|x| {
            check_gibbs(&x, &mut diags);
            Params::Gibbs(x)
        }),
        "bridge" => typed::<BridgeParams>(p, "params", &mut diags).map(|x| {
            check(x.problem(), "params", &mut diags);
            if !(x.tol > 0.0) || x.max_iter == 0 {
                diags.push(Diagnostic::new("params.tol", "tol and max_iter must be positive"));
            }
            Params::Bridge(x)
        }),
        "calibrate" => typed::<CalibrateParams>(p, "params", &mut diags).map(|x| {
            check_calibrate(&x, &mut diags);
            Params::Calibrate(x)
        }),
        "gamma" => typed::<GammaParams>(p, "params", &mut diags).map(|x| {
            check_gamma(&x, &mut diags);
            Params::Gamma(x)
        }),
        "covering" => typed::<CoveringParams>(p, "params", &mut diags).map(|x| {
            check(x.space.build(), "params.space", &mut diags);
            positive_list(&x.epsilons, "params.epsilons", &mut diags);
            Params::Covering(x)
        }),
        "schedules" => typed::<SchedulesParams>(p, "params", &mut diags).map(|x| {
            check(x.measure.build(), "params.measure", &mut diags);
            positive_list(&x.n_list, "params.n_list", &mut diags);
            if x.trials == 0 || !(x.c > 0.0) || !(x.power >= 0.0) {
                diags.push(Diagnostic::new("params", "need trials > 0, c > 0 and power >= 0"));
            }
            Params::Schedules(x)
        }),
        other => {
            diags.push(Diagnostic::new(
                "experiment",
                format!(
                    "unknown experiment {other:?}; expected one of {}",
                    EXPERIMENTS.join(", ")
                ),
            ));
            None
        }
    };
    match params {
        Some(params) if diags.is_empty() => Ok(ExperimentConfig {
            experiment: raw.experiment,
            seed: raw.seed.0,
            params,
            output: raw.output,
            echo,
        }),
        _ => Err(diags),
    }
}

/// Diagnostics for a config file; empty means runnable.
pub fn validate(path: &Path) -> Vec<Diagnostic> {
    load(path).err().unwrap_or_default()
}

fn check_iproj(x: &IprojParams, diags: &mut Vec<Diagnostic>) {
    check(x.problem(), "params", diags);
    if let Some(step) = x.brute_step {
        if !(step > 0.0 && step <= 0.5) {
            diags.push(Diagnostic::new("params.brute_step", "must lie in (0, 0.5]"));
        }
    }
    if let Some(s) = &x.sanov {
        positive_list(&s.n_list, "params.sanov.n_list", diags);
    }
}

fn check_gibbs(x: &GibbsParams, diags: &mut Vec<Diagnostic>) {
    let Some(alpha) = check(x.alpha.build(), "params.alpha", diags) else {
        return;
    };
    positive_list(&x.n_list, "params.n_list", diags);
    if x.k == 0 || x.n_list.iter().any(|n| (x.k as u64) > *n) {
        diags.push(Diagnostic::new("params.k", "need 1 <= k <= n for every n"));
    }
    if x.method == Method::Mc && x.trials == 0 {
        diags.push(Diagnostic::new("params.trials", "must be positive"));
    }
    let m = alpha.len();
    match &x.event {
        EventCfg::Whole => {}
        EventCfg::Band { f, center, radius, .. } => {
            if f.len() != m || f.iter().any(|r| r.len() != center.len()) || center.is_empty() {
                diags.push(Diagnostic::new(
                    "params.event.f",
                    "need one moment vector per point, of the center's dimension",
                ));
            }
            if !(*radius >= 0.0) {
                diags.push(Diagnostic::new("params.event.radius", "must be nonnegative"));
            }
        }
        EventCfg::Ball { target, radius, .. } => {
            check(
                FiniteMeasure::new(alpha.space().clone(), target.clone()),
                "params.event.target",
                diags,
            );
            if !(*radius >= 0.0) {
                diags.push(Diagnostic::new("params.event.radius", "must be nonnegative"));
            }
        }
    }
    if let Some(r) = &x.reference {
        check(
            FiniteMeasure::new(alpha.space().clone(), r.clone()),
            "params.reference",
            diags,
        );
    }
}

fn check_calibrate(x: &CalibrateParams, diags: &mut Vec<Diagnostic>) {
    let Some(n) = x.lattice.n else {
        diags.push(Diagnostic::new("params.lattice.n", "calibration needs a lattice level"));
        return;
    };
    x.lattice.check_level(n, "params.lattice.n", diags);
    let (lo, hi) = x.problem.family.bounds();
    if !(x.lattice.sigma_min <= lo && lo < hi && hi <= x.lattice.sigma_max) {
        diags.push(Diagnostic::new(
            "params.problem.family",
            format!("range [{lo}, {hi}] must be a nonempty subinterval of [sigma_min, sigma_max]"),
        ));
    }
    if x.problem.constraints.is_empty() {
        diags.push(Diagnostic::new(
            "params.problem.constraints",
            "at least one constraint is needed",
        ));
    }
    if !(x.epsilon >= 0.0) {
        diags.push(Diagnostic::new("params.epsilon", "must be nonnegative"));
    }
    if let Some(t) = &x.tree_mc {
        if !(t.epsilon > 0.0 && t.epsilon <= x.lattice.s) {
            diags.push(Diagnostic::new(
                "params.tree_mc.epsilon",
                format!(
                    "need 0 < epsilon <= s = {} (drift enlargement inside the lattice)",
                    x.lattice.s
                ),
            ));
        }
        if t.m == 0 || t.trials == 0 {
            diags.push(Diagnostic::new("params.tree_mc", "m and trials must be positive"));
        }
    }
}

fn check_gamma(x: &GammaParams, diags: &mut Vec<Diagnostic>) {
    if x.lattice.n.is_some() {
        diags.push(Diagnostic::new(
            "params.lattice.n",
            "gamma sweeps `n_list`; drop the lattice level",
        ));
    }
    positive_list(&x.n_list, "params.n_list", diags);
    for (i, n) in x.n_list.iter().enumerate() {
        if *n > 0 {
            x.lattice.check_level(*n, &format!("params.n_list[{i}]"), diags);
        }
    }
    if let Some(l) = x.rate_level {
        x.lattice.check_level(l.max(1), "params.rate_level", diags);
    }
}
