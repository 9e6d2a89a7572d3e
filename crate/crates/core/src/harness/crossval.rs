use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::report::Confusion;
use crate::classify::{train, TrainConfig};
use crate::error::{CoralError, Result};
use crate::features::{LabeledExample, Verdict};

/// Held-out verdicts of a cross-validation run, aligned with the input
/// examples. `None` marks examples of skipped folds.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOut {
    pub verdicts: Vec<Option<Verdict>>,
    pub skipped_folds: usize,
}

impl HeldOut {
    pub fn confusion(&self, examples: &[LabeledExample]) -> Confusion {
        let mut c = Confusion::default();
        for (e, v) in examples.iter().zip(&self.verdicts) {
            if let Some(v) = v {
                c.record(e.label, *v);
            }
        }
        c
    }
}

/// Fold of every example. Examples sharing a group (the aligned and
/// misaligned twin of one pair) always land in the same fold; groups are
/// dealt round-robin after a seeded shuffle.
pub fn assign_folds(groups: &[usize], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(CoralError::InvalidParameter(format!("need k >= 2 folds, got {k}")));
    }
    let mut unique: Vec<usize> = groups.to_vec();
    unique.sort_unstable();
    unique.dedup();
    if unique.len() < k {
        return Err(CoralError::InvalidParameter(format!(
            "{} pairs cannot fill {k} folds",
            unique.len()
        )));
    }
    unique.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let fold_of = |g: usize| unique.iter().position(|&u| u == g).unwrap() % k;
    Ok(groups.iter().map(|&g| fold_of(g)).collect())
}

/// Trains on `train_set` and classifies `test_set`. `None` when the training
/// split is degenerate.
pub fn train_and_predict(
    train_set: &[LabeledExample],
    test_set: &[LabeledExample],
    config: &TrainConfig,
) -> Result<Option<Vec<Verdict>>> {
    let model = match train(train_set, config) {
        Ok(out) => out.model,
        Err(CoralError::DegenerateTraining(msg)) => {
            log::warn!("skipping evaluation split: {msg}");
            return Ok(None);
        }
        Err(e) => return Err(e),
    };
    test_set
        .iter()
        .map(|e| model.predict(&e.features).map(|p| p.verdict))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// k-fold cross-validation with pair-grouped folds.
pub fn k_fold_evaluate(
    examples: &[LabeledExample],
    groups: &[usize],
    k: usize,
    seed: u64,
    config: &TrainConfig,
) -> Result<HeldOut> {
    if examples.len() != groups.len() {
        return Err(CoralError::InvalidInput("one group id per example required".into()));
    }
    if examples.len() < k {
        return Err(CoralError::InvalidParameter(format!(
            "{} examples cannot fill {k} folds",
            examples.len()
        )));
    }
    let folds = assign_folds(groups, k, seed)?;
    let mut verdicts = vec![None; examples.len()];
    let mut skipped = 0;
    for fold in 0..k {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
            (0..examples.len()).partition(|&i| folds[i] == fold);
        let train_set: Vec<LabeledExample> = train_idx.iter().map(|&i| examples[i]).collect();
        let test_set: Vec<LabeledExample> = test_idx.iter().map(|&i| examples[i]).collect();
        match train_and_predict(&train_set, &test_set, config)? {
            Some(pred) => {
                for (i, v) in test_idx.into_iter().zip(pred) {
                    verdicts[i] = Some(v);
                }
            }
            None => skipped += 1,
        }
    }
    Ok(HeldOut {
        verdicts,
        skipped_folds: skipped,
    })
}
