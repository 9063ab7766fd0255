//! Finite metric spaces and the probability measures that live on them.

mod covering;
mod distance;
mod entropy;
mod measure;
mod orlicz;
mod space;

pub use covering::{
    compact_truncation_bound, covering_bound_measures, covering_number, epsilon_schedule_metric, schedule_criterion,
    CoverMethod, CoveringReport, MeasureMetric, MetricSchedule, COVER_EXACT_MAX, SCHEDULE_GRID_FLOOR,
    SCHEDULE_GRID_RATIO,
};
pub use distance::{fm_distance, prohorov_distance, prohorov_fm_lower, tv_distance, Prohorov, PROHOROV_EXACT_MAX};
pub use entropy::{
    kl_weights, pinsker_excess, relative_entropy, variational_entropy_lower, weighted_tv_ratio, WeightedTv,
};
pub use measure::{FiniteMeasure, MASS_TOLERANCE};
pub use orlicz::{luxemburg_norm, tau_integral, young_tau};
pub use space::{Distance, MetricSpace};
