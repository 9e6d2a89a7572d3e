use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::perturb::{induce_error, ErrorSpec};
use super::{derive_seed, ScanPair};
use crate::error::{CoralError, Result};
use crate::features::{extract_features, LabeledExample, MeasureParams, Method, Verdict};

/// One classifier instance: a pair, either as recorded or misaligned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instance {
    /// Index into the pair list the dataset was built from.
    pub pair: usize,
    pub label: Verdict,
    /// Error applied for the misaligned twin.
    pub error: Option<ErrorSpec>,
}

impl Instance {
    pub fn materialize(&self, pairs: &[ScanPair]) -> Result<ScanPair> {
        let pair = &pairs[self.pair];
        match &self.error {
            Some(spec) => induce_error(pair, spec),
            None => Ok(pair.clone()),
        }
    }
}

/// Seed of the misalignment drawn for pair `index` under `spec`.
pub fn pair_error(spec: &ErrorSpec, index: usize) -> ErrorSpec {
    spec.with_seed(derive_seed(spec.seed, &[0x5eed, index as u64]))
}

/// One aligned and one misaligned instance per pair, shuffled with the
/// error seed. Every pair draws its own error from a seeded stream.
pub fn build_dataset(pairs: &[ScanPair], spec: &ErrorSpec) -> Result<Vec<Instance>> {
    if pairs.is_empty() {
        return Err(CoralError::InvalidInput("dataset needs at least one pair".into()));
    }
    spec.validate()?;
    let mut out: Vec<Instance> = (0..pairs.len())
        .flat_map(|i| {
            [
                Instance {
                    pair: i,
                    label: Verdict::Aligned,
                    error: None,
                },
                Instance {
                    pair: i,
                    label: Verdict::Misaligned,
                    error: Some(pair_error(spec, i)),
                },
            ]
        })
        .collect();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    Ok(out)
}

/// Features of every instance, in instance order.
pub fn compute_features(
    pairs: &[ScanPair],
    instances: &[Instance],
    method: Method,
    params: &MeasureParams,
) -> Result<Vec<LabeledExample>> {
    instances
        .par_iter()
        .map(|inst| {
            let pair = inst.materialize(pairs)?;
            let f = extract_features(method, &pair.cloud_a, &pair.cloud_b, params)?;
            Ok(LabeledExample::new(f, inst.label))
        })
        .collect()
}
