//! Non-asymptotic numerics for entropy minimization and Gibbs conditioning.
//!
//! The crate is organised around five subsystems:
//!
//! * [`measures`]: finite metric spaces, probability vectors on them, relative
//!   entropy, total variation / Fortet-Mourier / Prohorov distances, Orlicz
//!   (Luxemburg) norms and covering numbers.
//! * [`iproj`]: I-projections under moment constraints through the convex
//!   dual, with the enlargement schedules and tail bounds that make Gibbs
//!   conditioning work for thin constraint sets.
//! * [`gibbs`]: exact (type-class enumeration) and Monte Carlo conditional laws
//!   of i.i.d. blocks given that the empirical measure lies in an event.
//! * [`bridge`]: discrete Schrödinger systems solved by alternating marginal
//!   fitting.
//! * [`tritree`]: trinomial trees, their entropy chain rule and relative-entropy
//!   volatility calibration.
//!
//! All entropies are in nats. Total variation uses the full-mass convention
//! `Σ|ν₁ − ν₂|`, with range `[0, 2]`.

pub mod bridge;
pub mod error;
pub mod gibbs;
pub mod io;
pub mod iproj;
pub mod measures;
pub mod rng;
pub mod tritree;

pub use error::{Error, Result};
pub use measures::{FiniteMeasure, MetricSpace};

/// Chapters of the guide under `book/`, compiled here so their snippets run
/// as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/measures.md")]
    pub mod measures {}
    #[doc = include_str!("../../../book/src/iproj.md")]
    pub mod iproj {}
    #[doc = include_str!("../../../book/src/gibbs.md")]
    pub mod gibbs {}
    #[doc = include_str!("../../../book/src/bridge.md")]
    pub mod bridge {}
    #[doc = include_str!("../../../book/src/tritree.md")]
    pub mod tritree {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
