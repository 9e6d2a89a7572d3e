//! Training/evaluation protocols over groups of scan sequences.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::crossval::{k_fold_evaluate, train_and_predict};
use super::dataset::{build_dataset, compute_features};
use super::perturb::ErrorSpec;
use super::report::{Confusion, EvaluationReport, ParameterRecord, SequenceReport};
use super::{derive_seed, ScanPair};
use crate::classify::{LogisticModel, TrainConfig};
use crate::error::{CoralError, Result};
use crate::features::{LabeledExample, MeasureParams, Method, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Environment {
    Structured,
    SemiStructured,
    Unstructured,
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Environment::Structured => "structured",
            Environment::SemiStructured => "semi-structured",
            Environment::Unstructured => "unstructured",
        })
    }
}

impl FromStr for Environment {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structured" => Ok(Environment::Structured),
            "semi" | "semi-structured" => Ok(Environment::SemiStructured),
            "unstructured" => Ok(Environment::Unstructured),
            other => Err(CoralError::Config(format!("unknown environment class '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    /// k-fold cross-validation inside each sequence.
    #[serde(rename = "separate")]
    Separate5Fold,
    /// One classifier for all sequences, k-fold over the pooled pairs.
    #[serde(rename = "joint")]
    JointTrain,
    /// Train on structured sequences, test on the rest, and vice versa.
    #[serde(rename = "generalization")]
    Generalization,
    /// No training: a previously fitted model classifies every sequence.
    #[serde(rename = "model")]
    Pretrained,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Separate5Fold => "separate",
            Protocol::JointTrain => "joint",
            Protocol::Generalization => "generalization",
            Protocol::Pretrained => "model",
        })
    }
}

impl FromStr for Protocol {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separate" => Ok(Protocol::Separate5Fold),
            "joint" => Ok(Protocol::JointTrain),
            "generalization" => Ok(Protocol::Generalization),
            other => Err(CoralError::Config(format!("unknown protocol '{other}'"))),
        }
    }
}

/// A recorded sequence of ground-truth aligned pairs from one environment.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub id: String,
    pub environment: Environment,
    /// Sensor vertical resolution (radians) overriding the configured one.
    pub alpha: Option<f64>,
    pub pairs: Vec<ScanPair>,
}

/// Precomputed classifier inputs of one sequence.
#[derive(Debug, Clone)]
pub struct SequenceFeatures {
    pub id: String,
    pub environment: Environment,
    pub pairs: usize,
    pub examples: Vec<LabeledExample>,
    /// Pair index of every example.
    pub groups: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolOptions {
    pub folds: usize,
    pub train: TrainConfig,
    /// Recorded in the report only.
    pub downsample: Option<f64>,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            train: TrainConfig::default(),
            downsample: None,
        }
    }
}

fn sequence_error(spec: &ErrorSpec, index: usize) -> ErrorSpec {
    spec.with_seed(derive_seed(spec.seed, &[0x5e9, index as u64]))
}

/// Builds the balanced dataset of every sequence and extracts features.
pub fn sequence_features(
    sequences: &[Sequence],
    method: Method,
    params: &MeasureParams,
    error: &ErrorSpec,
) -> Result<Vec<SequenceFeatures>> {
    sequences
        .iter()
        .enumerate()
        .map(|(si, seq)| {
            let mut params = *params;
            if let Some(alpha) = seq.alpha {
                params.entropy.alpha = alpha;
            }
            let instances = build_dataset(&seq.pairs, &sequence_error(error, si))?;
            let examples = compute_features(&seq.pairs, &instances, method, &params)?;
            Ok(SequenceFeatures {
                id: seq.id.clone(),
                environment: seq.environment,
                pairs: seq.pairs.len(),
                groups: instances.iter().map(|i| i.pair).collect(),
                examples,
            })
        })
        .collect()
}

fn confusion_of(examples: &[LabeledExample], verdicts: &[Option<Verdict>]) -> Confusion {
    let mut c = Confusion::default();
    for (e, v) in examples.iter().zip(verdicts) {
        if let Some(v) = v {
            c.record(e.label, *v);
        }
    }
    c
}

/// Runs `protocol` on precomputed features.
pub fn evaluate_features(
    protocol: Protocol,
    data: &[SequenceFeatures],
    seed: u64,
    options: &ProtocolOptions,
) -> Result<(Vec<Vec<Option<Verdict>>>, usize)> {
    if data.is_empty() {
        return Err(CoralError::InvalidInput("no sequences to evaluate".into()));
    }
    let mut verdicts: Vec<Vec<Option<Verdict>>> =
        data.iter().map(|s| vec![None; s.examples.len()]).collect();
    let mut skipped = 0;
    match protocol {
        Protocol::Pretrained => {
            return Err(CoralError::InvalidInput("the pretrained protocol needs a model".into()));
        }
        Protocol::Separate5Fold => {
            for (si, seq) in data.iter().enumerate() {
                let held = k_fold_evaluate(
                    &seq.examples,
                    &seq.groups,
                    options.folds,
                    derive_seed(seed, &[0xf01d, si as u64]),
                    &options.train,
                )?;
                verdicts[si] = held.verdicts;
                skipped += held.skipped_folds;
            }
        }
        Protocol::JointTrain => {
            let mut pooled = Vec::new();
            let mut groups = Vec::new();
            let mut offset = 0;
            for seq in data {
                pooled.extend_from_slice(&seq.examples);
                groups.extend(seq.groups.iter().map(|g| g + offset));
                offset += seq.pairs;
            }
            let held = k_fold_evaluate(&pooled, &groups, options.folds, derive_seed(seed, &[0xf01d]), &options.train)?;
            skipped += held.skipped_folds;
            let mut it = held.verdicts.into_iter();
            for (si, seq) in data.iter().enumerate() {
                verdicts[si] = it.by_ref().take(seq.examples.len()).collect();
            }
        }
        Protocol::Generalization => {
            let structured = |s: &SequenceFeatures| s.environment == Environment::Structured;
            let has_a = data.iter().any(structured);
            let has_b = data.iter().any(|s| !structured(s));
            if !(has_a && has_b) {
                return Err(CoralError::InvalidInput(
                    "generalization needs structured and non-structured sequences".into(),
                ));
            }
            for train_structured in [true, false] {
                let train_set: Vec<LabeledExample> = data
                    .iter()
                    .filter(|s| structured(s) == train_structured)
                    .flat_map(|s| s.examples.iter().copied())
                    .collect();
                let targets: Vec<usize> = (0..data.len())
                    .filter(|&i| structured(&data[i]) != train_structured)
                    .collect();
                let test_set: Vec<LabeledExample> = targets
                    .iter()
                    .flat_map(|&i| data[i].examples.iter().copied())
                    .collect();
                match train_and_predict(&train_set, &test_set, &options.train)? {
                    Some(pred) => {
                        let mut it = pred.into_iter();
                        for &i in &targets {
                            verdicts[i] = it.by_ref().take(data[i].examples.len()).map(Some).collect();
                        }
                    }
                    None => skipped += 1,
                }
            }
        }
    }
    Ok((verdicts, skipped))
}

/// Full pipeline: datasets, features, protocol, report.
pub fn protocol_run(
    protocol: Protocol,
    sequences: &[Sequence],
    method: Method,
    params: &MeasureParams,
    error: &ErrorSpec,
    options: &ProtocolOptions,
) -> Result<EvaluationReport> {
    if sequences.is_empty() {
        return Err(CoralError::InvalidInput("no sequences to evaluate".into()));
    }
    if protocol == Protocol::Generalization {
        let structured = sequences.iter().filter(|s| s.environment == Environment::Structured).count();
        if structured == 0 || structured == sequences.len() {
            return Err(CoralError::InvalidInput(
                "generalization needs structured and non-structured sequences".into(),
            ));
        }
    }
    let data = sequence_features(sequences, method, params, error)?;
    report_from_features(protocol, &data, method, params, error, options)
}

pub fn report_from_features(
    protocol: Protocol,
    data: &[SequenceFeatures],
    method: Method,
    params: &MeasureParams,
    error: &ErrorSpec,
    options: &ProtocolOptions,
) -> Result<EvaluationReport> {
    let (verdicts, skipped) = evaluate_features(protocol, data, error.seed, options)?;
    Ok(assemble_report(protocol, data, &verdicts, skipped, method, params, error, options))
}

/// Classifies every example of `data` with a fixed model.
pub fn report_from_model(
    model: &LogisticModel,
    data: &[SequenceFeatures],
    params: &MeasureParams,
    error: &ErrorSpec,
    options: &ProtocolOptions,
) -> Result<EvaluationReport> {
    let verdicts = data
        .iter()
        .map(|seq| {
            seq.examples
                .iter()
                .map(|e| model.predict(&e.features).map(|p| Some(p.verdict)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let options = ProtocolOptions {
        train: TrainConfig {
            threshold: model.threshold,
            ..options.train
        },
        ..*options
    };
    Ok(assemble_report(Protocol::Pretrained, data, &verdicts, 0, model.method, params, error, &options))
}

#[allow(clippy::too_many_arguments)]
fn assemble_report(
    protocol: Protocol,
    data: &[SequenceFeatures],
    verdicts: &[Vec<Option<Verdict>>],
    skipped: usize,
    method: Method,
    params: &MeasureParams,
    error: &ErrorSpec,
    options: &ProtocolOptions,
) -> EvaluationReport {
    let mut overall = Confusion::default();
    let sequences = data
        .iter()
        .zip(verdicts)
        .map(|(seq, v)| {
            let confusion = confusion_of(&seq.examples, v);
            overall.merge(&confusion);
            SequenceReport {
                id: seq.id.clone(),
                environment: seq.environment,
                pairs: seq.pairs,
                accuracy: confusion.accuracy(),
                confusion,
            }
        })
        .collect();
    EvaluationReport {
        protocol,
        method,
        sequences,
        overall_accuracy: overall.accuracy(),
        overall,
        skipped_folds: skipped,
        parameters: ParameterRecord {
            measure: *params,
            error: *error,
            folds: options.folds,
            threshold: options.train.threshold,
            downsample: options.downsample,
        },
    }
}
