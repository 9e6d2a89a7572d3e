use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::protocol::{Environment, Protocol};
use super::perturb::ErrorSpec;
use crate::error::{CoralError, Result};
use crate::features::{MeasureParams, Method, Verdict};

/// Confusion counts with `aligned` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn record(&mut self, truth: Verdict, predicted: Verdict) {
        match (truth, predicted) {
            (Verdict::Aligned, Verdict::Aligned) => self.tp += 1,
            (Verdict::Misaligned, Verdict::Aligned) => self.fp += 1,
            (Verdict::Misaligned, Verdict::Misaligned) => self.tn += 1,
            (Verdict::Aligned, Verdict::Misaligned) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `(TP + TN) / total`; zero for an empty table.
    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => (self.tp + self.tn) as f64 / n as f64,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SequenceReport {
    pub id: String,
    pub environment: Environment,
    pub pairs: usize,
    pub confusion: Confusion,
    pub accuracy: f64,
}

/// Everything needed to rerun an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterRecord {
    pub measure: MeasureParams,
    pub error: ErrorSpec,
    pub folds: usize,
    pub threshold: f64,
    pub downsample: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub protocol: Protocol,
    pub method: Method,
    pub sequences: Vec<SequenceReport>,
    pub overall: Confusion,
    pub overall_accuracy: f64,
    /// Folds skipped because their training split held a single class.
    pub skipped_folds: usize,
    pub parameters: ParameterRecord,
}

impl EvaluationReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "method,protocol,sequence,environment,pairs,tp,fp,tn,fn,accuracy")?;
        for s in &self.sequences {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{:.6}",
                self.method,
                self.protocol,
                s.id,
                s.environment,
                s.pairs,
                s.confusion.tp,
                s.confusion.fp,
                s.confusion.tn,
                s.confusion.fn_,
                s.accuracy
            )?;
        }
        let c = &self.overall;
        writeln!(
            out,
            "{},{},overall,all,{},{},{},{},{},{:.6}",
            self.method,
            self.protocol,
            self.sequences.iter().map(|s| s.pairs).sum::<usize>(),
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            self.overall_accuracy
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Writes `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| CoralError::io(dir, e))?;
        let csv = dir.join(format!("{stem}.csv"));
        let mut buf = Vec::new();
        self.write_csv(&mut buf).map_err(|e| CoralError::io(&csv, e))?;
        std::fs::write(&csv, buf).map_err(|e| CoralError::io(&csv, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, self.to_json() + "\n").map_err(|e| CoralError::io(&json, e))
    }
}
