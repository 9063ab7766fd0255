//! Structured-text documents for spaces, measures, problems and solutions.
//!
//! Reals are written as decimal strings (shortest round-trip form), so a
//! document read back reproduces every `f64` bit for bit. Plain JSON numbers
//! are accepted on input.

use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bridge::{BridgePotentials, BridgeProblem};
use crate::error::{Error, Result};
use crate::iproj::{MomentProblem, Target, TiltedSolution};
use crate::measures::{FiniteMeasure, MetricSpace};
use crate::tritree::{LatticeSpec, VolSurface};

/// A real serialized as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dec(pub f64);

impl Serialize for Dec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:?}", self.0))
    }
}

impl<'de> Deserialize<'de> for Dec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Num(f64),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(Dec(x)),
            Raw::Str(s) => s
                .trim()
                .parse()
                .map(Dec)
                .map_err(|_| serde::de::Error::custom(format!("not a decimal: {s:?}"))),
        }
    }
}

fn dec(v: &[f64]) -> Vec<Dec> {
    v.iter().map(|x| Dec(*x)).collect()
}

fn dec2(v: &[Vec<f64>]) -> Vec<Vec<Dec>> {
    v.iter().map(|r| dec(r)).collect()
}

fn raw(v: &[Dec]) -> Vec<f64> {
    v.iter().map(|x| x.0).collect()
}

fn raw2(v: &[Vec<Dec>]) -> Vec<Vec<f64>> {
    v.iter().map(|r| raw(r)).collect()
}

/// `{points, dist}`; the distance table is always written out in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceDoc {
    pub points: Vec<String>,
    pub dist: Vec<Vec<Dec>>,
}

impl SpaceDoc {
    pub fn from_space(space: &MetricSpace) -> Self {
        Self {
            points: space.labels().to_vec(),
            dist: dec2(&space.table()),
        }
    }

    pub fn to_space(&self) -> Result<MetricSpace> {
        MetricSpace::from_table(self.points.clone(), raw2(&self.dist))
    }
}

/// `{points, dist, weights}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureDoc {
    pub points: Vec<String>,
    pub dist: Vec<Vec<Dec>>,
    pub weights: Vec<Dec>,
}

impl MeasureDoc {
    pub fn from_measure(nu: &FiniteMeasure) -> Self {
        let s = SpaceDoc::from_space(nu.space());
        Self {
            points: s.points,
            dist: s.dist,
            weights: dec(nu.weights()),
        }
    }

    pub fn to_measure(&self) -> Result<FiniteMeasure> {
        let space = SpaceDoc {
            points: self.points.clone(),
            dist: self.dist.clone(),
        }
        .to_space()?;
        FiniteMeasure::new(Arc::new(space), raw(&self.weights))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetDoc {
    Point(Vec<Dec>),
    Box { lo: Vec<Dec>, hi: Vec<Dec> },
}

impl From<&Target> for TargetDoc {
    fn from(t: &Target) -> Self {
        match t {
            Target::Point(x) => TargetDoc::Point(dec(x)),
            Target::Box { lo, hi } => TargetDoc::Box {
                lo: dec(lo),
                hi: dec(hi),
            },
        }
    }
}

impl From<&TargetDoc> for Target {
    fn from(t: &TargetDoc) -> Self {
        match t {
            TargetDoc::Point(x) => Target::Point(raw(x)),
            TargetDoc::Box { lo, hi } => Target::Box {
                lo: raw(lo),
                hi: raw(hi),
            },
        }
    }
}

/// `{alpha, F, target}`; `F[i]` is the moment vector at point `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentProblemDoc {
    pub alpha: MeasureDoc,
    #[serde(rename = "F")]
    pub f: Vec<Vec<Dec>>,
    pub target: TargetDoc,
}

impl MomentProblemDoc {
    pub fn from_problem(p: &MomentProblem) -> Self {
        Self {
            alpha: MeasureDoc::from_measure(p.alpha()),
            f: dec2(p.moment_map()),
            target: p.target().into(),
        }
    }

    pub fn to_problem(&self) -> Result<MomentProblem> {
        MomentProblem::new(self.alpha.to_measure()?, raw2(&self.f), (&self.target).into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub lambda_star: Vec<Dec>,
    pub entropy: Dec,
    pub log_z: Dec,
    pub moment: Vec<Dec>,
    pub alpha_star: Vec<Dec>,
    pub iterations: usize,
}

impl SolutionDoc {
    pub fn from_solution(s: &TiltedSolution) -> Self {
        Self {
            lambda_star: dec(&s.lambda_star),
            entropy: Dec(s.entropy),
            log_z: Dec(s.log_z),
            moment: dec(&s.moment),
            alpha_star: dec(s.alpha_star.weights()),
            iterations: s.iterations,
        }
    }
}

/// `{mu0, mu1, density, nu0, nu1}` with `density[u][v]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BridgeProblemDoc {
    pub mu0: MeasureDoc,
    pub mu1: MeasureDoc,
    pub density: Vec<Vec<Dec>>,
    pub nu0: MeasureDoc,
    pub nu1: MeasureDoc,
}

impl BridgeProblemDoc {
    pub fn from_problem(p: &BridgeProblem) -> Self {
        Self {
            mu0: MeasureDoc::from_measure(p.mu0()),
            mu1: MeasureDoc::from_measure(p.mu1()),
            density: dec2(p.density()),
            nu0: MeasureDoc::from_measure(p.nu0()),
            nu1: MeasureDoc::from_measure(p.nu1()),
        }
    }

    pub fn to_problem(&self) -> Result<BridgeProblem> {
        BridgeProblem::new(
            self.mu0.to_measure()?,
            self.mu1.to_measure()?,
            raw2(&self.density),
            self.nu0.to_measure()?,
            self.nu1.to_measure()?,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialsDoc {
    pub f: Vec<Dec>,
    pub g: Vec<Dec>,
    pub residual: Dec,
    pub iterations: usize,
    pub history: Vec<Dec>,
}

impl PotentialsDoc {
    pub fn from_potentials(p: &BridgePotentials) -> Self {
        Self {
            f: dec(&p.f),
            g: dec(&p.g),
            residual: Dec(p.residual),
            iterations: p.iterations,
            history: dec(&p.history),
        }
    }

    pub fn to_potentials(&self) -> BridgePotentials {
        BridgePotentials {
            f: raw(&self.f),
            g: raw(&self.g),
            residual: self.residual.0,
            iterations: self.iterations,
            history: raw(&self.history),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpecDoc {
    pub n: usize,
    pub alpha: Dec,
    pub sigma_min: Dec,
    pub sigma_max: Dec,
    pub b0: Dec,
    pub s: Dec,
}

impl LatticeSpecDoc {
    pub fn from_spec(s: &LatticeSpec) -> Self {
        Self {
            n: s.n,
            alpha: Dec(s.alpha),
            sigma_min: Dec(s.sigma_min),
            sigma_max: Dec(s.sigma_max),
            b0: Dec(s.b0),
            s: Dec(s.s),
        }
    }

    pub fn to_spec(&self) -> Result<LatticeSpec> {
        LatticeSpec::new(
            self.n,
            self.alpha.0,
            self.sigma_min.0,
            self.sigma_max.0,
            self.b0.0,
            self.s.0,
        )
    }
}

/// Node-indexed tables: row `k` lists nodes `j = −k..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDoc {
    pub n: usize,
    pub sigma: Vec<Vec<Dec>>,
    pub b: Vec<Vec<Dec>>,
}

impl SurfaceDoc {
    pub fn from_surface(s: &VolSurface) -> Self {
        Self {
            n: s.n,
            sigma: dec2(&s.sigma),
            b: dec2(&s.b),
        }
    }

    pub fn to_surface(&self) -> Result<VolSurface> {
        VolSurface::from_tables(self.n, raw2(&self.sigma), raw2(&self.b))
    }
}

pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    serde_json::to_string_pretty(doc).map_err(|e| Error::Document(e.to_string()))
}

pub fn from_json<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Document(e.to_string()))
}
