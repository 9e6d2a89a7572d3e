//! Per-point differential entropy and the joint/separate quality measure.

mod covariance;
mod params;
mod quality;

pub use covariance::{
    point_entropy, sample_covariance, CovarianceAccumulator, CovarianceSummary,
};
pub use params::{Aggregation, EntropyParams, DEFAULT_MIN_NEIGHBORS, DEFAULT_MIN_OVERLAP};
pub use quality::{
    coral_quality, dynamic_radius, extract_features_coral, overlap_ratio, write_per_point,
    PerPointEntropy, QualityResult, QualityStatus,
};

pub(crate) use covariance::summarize;
pub(crate) use quality::PairIndex;
