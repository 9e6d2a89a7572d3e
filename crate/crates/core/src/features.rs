//! Classifier inputs produced by each alignment measure.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{build_ndt, mme, ndt_score, NdtParams};
use crate::cloud::{join, PointCloud};
use crate::entropy::{coral_quality, extract_features_coral, Aggregation, EntropyParams};
use crate::error::{CoralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Aligned,
    Misaligned,
}

impl Verdict {
    /// Class encoding used by the classifier: aligned = 1.
    pub fn as_target(self) -> f64 {
        match self {
            Verdict::Aligned => 1.0,
            Verdict::Misaligned => 0.0,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Aligned => "aligned",
            Verdict::Misaligned => "misaligned",
        })
    }
}

/// The measure that produced a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "coral")]
    Coral,
    #[serde(rename = "coral-median")]
    CoralMedian,
    #[serde(rename = "mme")]
    Mme,
    #[serde(rename = "ndt")]
    Ndt,
    #[serde(rename = "rel-ndt")]
    RelNdt,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Coral,
        Method::CoralMedian,
        Method::Mme,
        Method::Ndt,
        Method::RelNdt,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Coral => "coral",
            Method::CoralMedian => "coral-median",
            Method::Mme => "mme",
            Method::Ndt => "ndt",
            Method::RelNdt => "rel-ndt",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| CoralError::Config(format!("unknown method '{s}'")))
    }
}

/// Two real features, or a forced verdict when the measure could not be
/// evaluated (insufficient overlap).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub method: Method,
    pub x1: f64,
    pub x2: f64,
    pub bypass: Option<Verdict>,
}

impl FeatureVector {
    pub fn new(method: Method, x1: f64, x2: f64) -> Self {
        Self {
            method,
            x1,
            x2,
            bypass: None,
        }
    }

    pub fn forced(method: Method, verdict: Verdict) -> Self {
        Self {
            method,
            x1: 0.0,
            x2: 0.0,
            bypass: Some(verdict),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: Verdict,
}

impl LabeledExample {
    pub fn new(features: FeatureVector, label: Verdict) -> Self {
        Self { features, label }
    }
}

/// Parameters shared by all measures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureParams {
    pub entropy: EntropyParams,
    pub ndt: NdtParams,
}

impl Default for MeasureParams {
    fn default() -> Self {
        Self {
            entropy: EntropyParams::eth(),
            ndt: NdtParams::with_voxel(0.6),
        }
    }
}

/// Computes the classifier inputs of `method` for the pair `(a, b)`.
///
/// Pairs that cannot provide evidence of alignment (no overlap, nothing
/// measurable) come back with a forced `Misaligned` verdict.
pub fn extract_features(
    method: Method,
    a: &PointCloud,
    b: &PointCloud,
    params: &MeasureParams,
) -> Result<FeatureVector> {
    let misaligned = FeatureVector::forced(method, Verdict::Misaligned);
    let no_data = |e: CoralError| match e {
        CoralError::InsufficientData(_) => Ok(misaligned),
        other => Err(other),
    };
    match method {
        Method::Coral | Method::CoralMedian => {
            let aggregation = if method == Method::Coral {
                Aggregation::Mean
            } else {
                Aggregation::Median
            };
            let entropy = params.entropy.with_aggregation(aggregation);
            match coral_quality(a, b, &entropy) {
                Ok(res) => Ok(match extract_features_coral(&res) {
                    Some((x1, x2)) => FeatureVector::new(method, x1, x2),
                    None => misaligned,
                }),
                Err(e) => no_data(e),
            }
        }
        Method::Mme => match mme(&join(a, b), params.entropy.r_min, params.entropy.min_neighbors) {
            Ok(v) => Ok(FeatureVector::new(method, v, 0.0)),
            Err(e) => no_data(e),
        },
        Method::Ndt | Method::RelNdt => {
            let grid = build_ndt(a, &params.ndt)?;
            if grid.is_empty() {
                return Ok(misaligned);
            }
            let s = ndt_score(&grid, b)?;
            if s.no_overlap {
                return Ok(misaligned);
            }
            let x2 = if method == Method::RelNdt {
                s.mean_cell_entropy
            } else {
                0.0
            };
            Ok(FeatureVector::new(method, s.score, x2))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{apply_transform, Point3, RigidTransform, SourceLabel};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(seed: u64, label: SourceLabel) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..3000)
            .map(|_| Point3::new(rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 2.0, rng.gen::<f64>() * 0.01))
            .collect();
        PointCloud::new(pts, Point3::new(1.0, 1.0, 1.0), label).unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("fuzzy".parse::<Method>().is_err());
    }

    #[test]
    fn single_feature_methods_fix_x2() {
        let a = plane(1, SourceLabel::A);
        let b = plane(2, SourceLabel::B);
        let params = MeasureParams::default();
        for m in [Method::Mme, Method::Ndt] {
            let f = extract_features(m, &a, &b, &params).unwrap();
            assert_eq!(f.x2, 0.0);
            assert!(f.bypass.is_none());
        }
        let f = extract_features(Method::RelNdt, &a, &b, &params).unwrap();
        assert!(f.x2 != 0.0);
        let f = extract_features(Method::Coral, &a, &b, &params).unwrap();
        assert!(f.x1.is_finite() && f.x2.is_finite());
    }

    #[test]
    fn disjoint_pairs_are_forced_misaligned() {
        let a = plane(3, SourceLabel::A);
        let b = apply_transform(
            &plane(4, SourceLabel::B),
            &RigidTransform::from_translation(Vector3::new(50.0, 0.0, 0.0)),
        )
        .unwrap();
        let params = MeasureParams::default();
        for m in [Method::Coral, Method::CoralMedian, Method::Ndt, Method::RelNdt] {
            let f = extract_features(m, &a, &b, &params).unwrap();
            assert_eq!(f.bypass, Some(Verdict::Misaligned), "{m}");
        }
    }
}
