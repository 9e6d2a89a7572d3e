//! Evaluation harness: error induction, balanced datasets, cross-validation,
//! training protocols, tuning aids and synthetic scenes.

mod crossval;
mod dataset;
mod perturb;
mod protocol;
mod report;
mod synth;
mod tuning;

pub use crossval::{assign_folds, k_fold_evaluate, train_and_predict, HeldOut};
pub use dataset::{build_dataset, compute_features, pair_error, Instance};
pub use perturb::{induce_error, perturbation, ErrorSpec};
pub use protocol::{
    evaluate_features, protocol_run, report_from_features, report_from_model, sequence_features, Environment,
    Protocol, ProtocolOptions, Sequence, SequenceFeatures,
};
pub use report::{Confusion, EvaluationReport, ParameterRecord, SequenceReport};
pub use synth::{synth_scene, SceneKind, SceneSpec};
pub use tuning::{
    quality_surface, refinement_variants, sensitivity_ratio, symmetric_steps, write_surface_csv,
    SensitivityRatio, SurfaceSample,
};

use crate::cloud::PointCloud;

/// Two scans of one place, registered into a common world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanPair {
    pub cloud_a: PointCloud,
    pub cloud_b: PointCloud,
    pub sequence_id: String,
    pub pair_index: usize,
}

/// Mixes `parts` into `base` (SplitMix64 finalizer per step) so that every
/// pair, sequence and fold gets an independent, reproducible stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}
