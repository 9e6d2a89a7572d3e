//! Two-feature logistic regression alignment classifier.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CoralError, Result};
use crate::features::{FeatureVector, LabeledExample, Method, Verdict};

/// `p = σ(β₀ + β₁x₁ + β₂x₂)`, aligned iff `p ≥ threshold`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub beta0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub threshold: f64,
    pub method: Method,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// `None` when the verdict was forced by the overlap gate.
    pub probability: Option<f64>,
    pub verdict: Verdict,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn new(method: Method, beta: [f64; 3], threshold: f64) -> Result<Self> {
        let model = Self {
            beta0: beta[0],
            beta1: beta[1],
            beta2: beta[2],
            threshold,
            method,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.beta0, self.beta1, self.beta2].iter().all(|b| b.is_finite()) {
            return Err(CoralError::InvalidParameter(
                "model coefficients must be finite".into(),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(CoralError::InvalidParameter(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        self.threshold = threshold;
        self.validate()?;
        Ok(self)
    }

    pub fn logit(&self, x1: f64, x2: f64) -> f64 {
        self.beta0 + self.beta1 * x1 + self.beta2 * x2
    }

    pub fn predict(&self, f: &FeatureVector) -> Result<Prediction> {
        if f.method != self.method {
            return Err(CoralError::InvalidFeature(format!(
                "model trained on {} applied to {} features",
                self.method, f.method
            )));
        }
        if let Some(verdict) = f.bypass {
            return Ok(Prediction {
                probability: None,
                verdict,
            });
        }
        if !(f.x1.is_finite() && f.x2.is_finite()) {
            return Err(CoralError::InvalidFeature(format!(
                "non-finite features ({}, {})",
                f.x1, f.x2
            )));
        }
        let p = sigmoid(self.logit(f.x1, f.x2));
        let verdict = if p >= self.threshold {
            Verdict::Aligned
        } else {
            Verdict::Misaligned
        };
        Ok(Prediction {
            probability: Some(p),
            verdict,
        })
    }

    /// Bernoulli log-likelihood of non-bypassed examples.
    pub fn log_likelihood(&self, data: &[LabeledExample]) -> f64 {
        data.iter()
            .filter(|e| e.features.bypass.is_none())
            .map(|e| {
                let z = self.logit(e.features.x1, e.features.x2);
                e.label.as_target() * z - softplus(z)
            })
            .sum()
    }

    /// One value per line: method, β₀, β₁, β₂, threshold.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.method)?;
        for v in [self.beta0, self.beta1, self.beta2, self.threshold] {
            writeln!(out, "{v:e}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| CoralError::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| CoralError::io(path, e))
    }

    pub fn read_from<R: BufRead>(input: R, path: &Path) -> Result<Self> {
        let lines: Vec<String> = input
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| CoralError::io(path, e))?;
        let lines: Vec<&str> = lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty()).collect();
        if lines.len() != 5 {
            return Err(CoralError::Format {
                path: path.into(),
                message: format!("expected 5 non-empty lines, found {}", lines.len()),
            });
        }
        let method: Method = lines[0].parse().map_err(|_| CoralError::Parse {
            path: path.into(),
            line: 1,
            message: format!("unknown method '{}'", lines[0]),
        })?;
        let mut values = [0.0; 4];
        for (i, v) in values.iter_mut().enumerate() {
            *v = lines[i + 1].parse().map_err(|_| CoralError::Parse {
                path: path.into(),
                line: i + 2,
                message: format!("not a number: '{}'", lines[i + 1]),
            })?;
        }
        Self::new(method, [values[0], values[1], values[2]], values[3])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| CoralError::io(path, e))?;
        Self::read_from(std::io::BufReader::new(file), path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Convergence bound on the ∞-norm of the mean log-likelihood gradient.
    pub gradient_tolerance: f64,
    pub threshold: f64,
    /// Standardized coefficient norm beyond which the data is reported as
    /// (quasi-)separable.
    pub separation_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            threshold: 0.5,
            separation_norm: 1e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOutcome {
    pub model: LogisticModel,
    pub iterations: usize,
    pub converged: bool,
    /// Coefficients diverged: the classes are (almost) perfectly separable.
    pub separation_warning: bool,
    pub log_likelihood: f64,
}

/// Maximum-likelihood fit by Newton-Raphson with step halving on internally
/// standardized features.
///
/// Bypassed examples are ignored. A feature with zero variance (the fixed
/// `x2 = 0` of single-feature measures) keeps a zero coefficient.
pub fn train(data: &[LabeledExample], config: &TrainConfig) -> Result<TrainOutcome> {
    let usable: Vec<&LabeledExample> = data.iter().filter(|e| e.features.bypass.is_none()).collect();
    if usable.len() < 4 {
        return Err(CoralError::DegenerateTraining(format!(
            "need at least 4 examples, got {}",
            usable.len()
        )));
    }
    let method = usable[0].features.method;
    if usable.iter().any(|e| e.features.method != method) {
        return Err(CoralError::DegenerateTraining(
            "examples come from different measures".into(),
        ));
    }
    let positives = usable.iter().filter(|e| e.label == Verdict::Aligned).count();
    if positives == 0 || positives == usable.len() {
        return Err(CoralError::DegenerateTraining(
            "training data contains a single class".into(),
        ));
    }
    if let Some(e) = usable
        .iter()
        .find(|e| !(e.features.x1.is_finite() && e.features.x2.is_finite()))
    {
        return Err(CoralError::InvalidFeature(format!(
            "non-finite training features ({}, {})",
            e.features.x1, e.features.x2
        )));
    }

    let n = usable.len();
    let raw: [Vec<f64>; 2] = [
        usable.iter().map(|e| e.features.x1).collect(),
        usable.iter().map(|e| e.features.x2).collect(),
    ];
    // Standardization of the active (non-constant) columns.
    let mut scale: Vec<(usize, f64, f64)> = Vec::new();
    for (j, col) in raw.iter().enumerate() {
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        if sd > 1e-12 * (1.0 + mean.abs()) {
            scale.push((j, mean, sd));
        }
    }
    let dim = 1 + scale.len();
    let mut x = DMatrix::<f64>::zeros(n, dim);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for (c, &(j, mean, sd)) in scale.iter().enumerate() {
            x[(i, c + 1)] = (raw[j][i] - mean) / sd;
        }
    }
    let y = DVector::from_iterator(n, usable.iter().map(|e| e.label.as_target()));

    let loglik = |beta: &DVector<f64>| -> f64 {
        let z = &x * beta;
        z.iter().zip(y.iter()).map(|(z, y)| y * z - softplus(*z)).sum()
    };

    let mut beta = DVector::<f64>::zeros(dim);
    let mut current = loglik(&beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut separated = false;
    while iterations < config.max_iterations {
        let z = &x * &beta;
        let p = z.map(sigmoid);
        let grad = x.transpose() * (&y - &p);
        if grad.amax() / (n as f64) < config.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        let w = p.map(|p| p * (1.0 - p));
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            let row = x.row(i);
            hess += w[i] * row.transpose() * row;
        }
        let direction = match hess.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            // Flat Hessian: plain gradient ascent on the mean likelihood.
            None => &grad / n as f64,
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let candidate = &beta + &direction * step;
            let value = loglik(&candidate);
            if value >= current {
                beta = candidate;
                current = value;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent possible at machine precision.
            converged = true;
            break;
        }
        if beta.norm() > config.separation_norm {
            separated = true;
            break;
        }
    }
    if !separated && beta.norm() > config.separation_norm {
        separated = true;
    }

    // Back to raw feature units.
    let mut coef = [0.0; 3];
    coef[0] = beta[0];
    for (c, &(j, mean, sd)) in scale.iter().enumerate() {
        let b = beta[c + 1] / sd;
        coef[j + 1] = b;
        coef[0] -= b * mean;
    }
    let model = LogisticModel::new(method, coef, config.threshold)?;
    Ok(TrainOutcome {
        model,
        iterations,
        converged,
        separation_warning: separated,
        log_likelihood: model.log_likelihood(data),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn example(x1: f64, x2: f64, aligned: bool) -> LabeledExample {
        LabeledExample::new(
            FeatureVector::new(Method::Coral, x1, x2),
            if aligned { Verdict::Aligned } else { Verdict::Misaligned },
        )
    }

    fn generate(beta: [f64; 3], n: usize, seed: u64) -> Vec<LabeledExample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x1: f64 = StandardNormal.sample(&mut rng);
                let x2: f64 = StandardNormal.sample(&mut rng);
                let z = beta[0] + beta[1] * x1 + beta[2] * x2;
                let p = 1.0 / (1.0 + (-z).exp());
                example(x1, x2, rng.gen::<f64>() < p)
            })
            .collect()
    }

    #[test]
    fn zero_model_is_inclusive_at_threshold() {
        let m = LogisticModel::new(Method::Coral, [0.0; 3], 0.5).unwrap();
        let p = m.predict(&FeatureVector::new(Method::Coral, 7.0, -2.0)).unwrap();
        assert_eq!(p.probability, Some(0.5));
        assert_eq!(p.verdict, Verdict::Aligned);
    }

    #[test]
    fn cancellation() {
        let m = LogisticModel::new(Method::Coral, [0.0, 1.0, -1.0], 0.5).unwrap();
        let p = m.predict(&FeatureVector::new(Method::Coral, 2.0, 2.0)).unwrap();
        assert_eq!(p.probability, Some(0.5));
    }

    #[test]
    fn bypass_overrides_model() {
        let m = LogisticModel::new(Method::Coral, [100.0, 0.0, 0.0], 0.5).unwrap();
        let p = m.predict(&FeatureVector::forced(Method::Coral, Verdict::Misaligned)).unwrap();
        assert_eq!(p.verdict, Verdict::Misaligned);
        assert_eq!(p.probability, None);
    }

    #[test]
    fn invalid_features_and_method_mismatch() {
        let m = LogisticModel::new(Method::Coral, [0.0; 3], 0.5).unwrap();
        assert!(matches!(
            m.predict(&FeatureVector::new(Method::Coral, f64::NAN, 0.0)),
            Err(CoralError::InvalidFeature(_))
        ));
        assert!(matches!(
            m.predict(&FeatureVector::new(Method::Ndt, 0.0, 0.0)),
            Err(CoralError::InvalidFeature(_))
        ));
        assert!(LogisticModel::new(Method::Coral, [f64::INFINITY, 0.0, 0.0], 0.5).is_err());
        assert!(LogisticModel::new(Method::Coral, [0.0; 3], 1.0).is_err());
    }

    #[test]
    fn recovers_generating_coefficients() {
        let truth = [0.5, 2.0, -1.0];
        let out = train(&generate(truth, 10_000, 1), &TrainConfig::default()).unwrap();
        assert!(out.converged);
        let got = [out.model.beta0, out.model.beta1, out.model.beta2];
        for (g, t) in got.iter().zip(truth) {
            assert!((g - t).abs() < 0.1, "{got:?}");
        }
    }

    #[test]
    fn no_signal_gives_small_slopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<_> = (0..4000)
            .map(|i| {
                let x1: f64 = StandardNormal.sample(&mut rng);
                let x2: f64 = StandardNormal.sample(&mut rng);
                example(x1, x2, i % 2 == 0)
            })
            .collect();
        let out = train(&data, &TrainConfig::default()).unwrap();
        assert!(out.model.beta1.abs() < 0.1 && out.model.beta2.abs() < 0.1);
        let correct = data
            .iter()
            .filter(|e| out.model.predict(&e.features).unwrap().verdict == e.label)
            .count() as f64
            / data.len() as f64;
        assert!((correct - 0.5).abs() < 0.05);
    }

    #[test]
    fn trained_likelihood_dominates_grid() {
        let data = generate([-0.3, 1.2, 0.8], 50, 3);
        let out = train(&data, &TrainConfig::default()).unwrap();
        // Independent evaluation of the Bernoulli log-likelihood.
        let ll = |b: [f64; 3]| -> f64 {
            data.iter()
                .map(|e| {
                    let z = b[0] + b[1] * e.features.x1 + b[2] * e.features.x2;
                    let p = 1.0 / (1.0 + (-z).exp());
                    if e.label == Verdict::Aligned { p.ln() } else { (1.0 - p).ln() }
                })
                .sum()
        };
        let best = ll([out.model.beta0, out.model.beta1, out.model.beta2]);
        let grid: Vec<f64> = (-12..=12).map(|i| i as f64 * 0.25).collect();
        for &b0 in &grid {
            for &b1 in &grid {
                for &b2 in &grid {
                    assert!(best >= ll([b0, b1, b2]) - 1e-9);
                }
            }
        }
    }

    #[test]
    fn degenerate_training_sets() {
        let one_class: Vec<_> = (0..10).map(|i| example(i as f64, 0.0, true)).collect();
        assert!(matches!(train(&one_class, &TrainConfig::default()), Err(CoralError::DegenerateTraining(_))));
        let tiny = vec![example(0.0, 0.0, true), example(1.0, 0.0, false), example(2.0, 0.0, true)];
        assert!(train(&tiny, &TrainConfig::default()).is_err());
    }

    #[test]
    fn separable_data_is_flagged_and_classified() {
        let data: Vec<_> = (0..20).map(|i| example(i as f64, 0.0, i >= 10)).collect();
        let out = train(&data, &TrainConfig::default()).unwrap();
        assert!(out.separation_warning || !out.converged || out.model.beta1 > 10.0);
        for e in &data {
            assert_eq!(out.model.predict(&e.features).unwrap().verdict, e.label);
        }
        // x2 is constant: its coefficient stays exactly zero.
        assert_eq!(out.model.beta2, 0.0);
    }

    #[test]
    fn bypassed_examples_are_not_used() {
        let mut data = generate([0.0, 1.0, 1.0], 200, 4);
        let before = train(&data, &TrainConfig::default()).unwrap().model;
        data.push(LabeledExample::new(FeatureVector::forced(Method::Coral, Verdict::Misaligned), Verdict::Aligned));
        let after = train(&data, &TrainConfig::default()).unwrap().model;
        assert_eq!(before, after);
    }

    #[test]
    fn common_feature_scaling_keeps_verdicts() {
        let data = generate([0.2, -1.5, 0.7], 300, 5);
        let scaled: Vec<_> = data
            .iter()
            .map(|e| example(e.features.x1 * 37.0, e.features.x2 * 37.0, e.label == Verdict::Aligned))
            .collect();
        let m0 = train(&data, &TrainConfig::default()).unwrap().model;
        let m1 = train(&scaled, &TrainConfig::default()).unwrap().model;
        for (e, s) in data.iter().zip(&scaled) {
            assert_eq!(m0.predict(&e.features).unwrap().verdict, m1.predict(&s.features).unwrap().verdict);
        }
    }

    #[test]
    fn model_file_round_trip() {
        let m = LogisticModel::new(Method::RelNdt, [0.1 + 0.2, -1.0 / 3.0, 1e-300], 0.7).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next(), Some("rel-ndt"));
        let back = LogisticModel::read_from(&buf[..], Path::new("model.txt")).unwrap();
        assert_eq!(back, m);
        assert!(LogisticModel::read_from(&b"coral\n1\n2\n"[..], Path::new("m")).is_err());
        assert!(LogisticModel::read_from(&b"coral\n1\nx\n2\n0.5\n"[..], Path::new("m")).is_err());
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn predict_is_monotone_in_x1_and_threshold(
            b0 in -5.0f64..5.0, b1 in 0.01f64..5.0, b2 in -5.0f64..5.0,
            x1 in -10.0f64..10.0, dx in 0.0f64..5.0, x2 in -10.0f64..10.0,
            t_lo in 0.05f64..0.5, t_step in 0.0f64..0.45,
        ) {
            let m = LogisticModel::new(Method::Coral, [b0, b1, b2], t_lo).unwrap();
            let before = m.predict(&FeatureVector::new(Method::Coral, x1, x2)).unwrap();
            let after = m.predict(&FeatureVector::new(Method::Coral, x1 + dx, x2)).unwrap();
            if before.verdict == Verdict::Aligned {
                prop_assert_eq!(after.verdict, Verdict::Aligned);
            }
            // Pure function.
            prop_assert_eq!(before, m.predict(&FeatureVector::new(Method::Coral, x1, x2)).unwrap());
            let strict = m.with_threshold(t_lo + t_step).unwrap();
            if before.verdict == Verdict::Misaligned {
                prop_assert_eq!(strict.predict(&FeatureVector::new(Method::Coral, x1, x2)).unwrap().verdict, Verdict::Misaligned);
            }
        }
    }
}
