use thiserror::Error;

use crate::bridge::BridgePotentials;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("measures live on different supports")]
    SupportMismatch,

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid metric space: {0}")]
    InvalidSpace(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No tilt of the base measure reaches the target set. `certificate` is a
    /// dual direction along which the dual objective decreases without bound.
    #[error("infeasible target: {reason}")]
    Infeasible { reason: String, certificate: Vec<f64> },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    /// Sinkhorn stopped at `max_iter`; the last iterate and its residual
    /// history are kept.
    #[error("sinkhorn did not reach tolerance (residual {:e})", .0.residual)]
    SinkhornStalled(Box<BridgePotentials>),

    #[error("conditioning event has probability zero")]
    ZeroProbability,

    /// Rejection sampling accepted nothing; `upper_bound` is the rule-of-three
    /// bound 3/trials on the event probability.
    #[error("zero acceptances in {trials} trials (event probability <= {upper_bound:e})")]
    ZeroAcceptance { trials: u64, upper_bound: f64 },

    #[error("enumeration needs {needed} items, budget is {budget}")]
    BudgetExceeded { needed: f64, budget: f64 },

    #[error("transition kernel has a negative entry at level n={n} (sigma={sigma}, drift={drift})")]
    NegativeKernel { n: usize, sigma: f64, drift: f64 },

    #[error("zero mass at lattice node (k={k}, j={j})")]
    ZeroNodeMass { k: usize, j: i64 },

    #[error("malformed document: {0}")]
    Document(String),
}
