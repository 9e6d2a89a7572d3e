//! Joint-versus-separate entropy quality of an aligned point-cloud pair.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use super::covariance::{point_entropy, CovarianceAccumulator, CovarianceSummary};
use super::params::{Aggregation, EntropyParams};
use crate::cloud::{Point3, PointCloud, SourceLabel};
use crate::error::{CoralError, Result};
use crate::spatial::SpatialIndex;

/// Neighborhood radius for `p`: `d·sin α` clamped to `[r_min, r_max]`, where
/// `d` is the range from the sensor that observed `p`.
pub fn dynamic_radius(p: &Point3, sensor_origin: &Point3, params: &EntropyParams) -> f64 {
    if params.alpha == 0.0 {
        return params.r_min;
    }
    let d = (p - sensor_origin).norm();
    (d * params.alpha.sin()).clamp(params.r_min, params.r_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QualityStatus {
    Measured,
    InsufficientOverlap,
}

/// Entropies of one overlapping point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerPointEntropy {
    /// Index into `join(a, b)`.
    pub index: usize,
    pub label: SourceLabel,
    pub point: Point3,
    /// Entropy over the point's own cloud.
    pub h_sep: f64,
    /// Entropy over the joint cloud.
    pub h_joint: f64,
    pub q: f64,
    pub valid: bool,
    /// Valid and not removed by outlier rejection.
    pub retained: bool,
    pub radius_used: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QualityResult {
    pub h_sep: f64,
    pub h_joint: f64,
    pub q: f64,
    pub overlap_ratio: f64,
    pub per_point: Vec<PerPointEntropy>,
    pub status: QualityStatus,
}

impl QualityResult {
    pub fn is_measured(&self) -> bool {
        self.status == QualityStatus::Measured
    }

    pub fn retained_count(&self) -> usize {
        self.per_point.iter().filter(|p| p.retained).count()
    }
}

/// Both clouds of a pair, indexed separately. Joint neighborhoods are the
/// concatenation of the A hits and the B hits, always in that order, so every
/// caller accumulates the same joint covariance bit for bit.
pub(crate) struct PairIndex<'a> {
    pub a: &'a PointCloud,
    pub b: &'a PointCloud,
    pub idx_a: SpatialIndex,
    pub idx_b: SpatialIndex,
}

impl<'a> PairIndex<'a> {
    pub fn build(a: &'a PointCloud, b: &'a PointCloud, cell: f64) -> Result<Self> {
        Ok(Self {
            a,
            b,
            idx_a: SpatialIndex::build(a.points(), cell)?,
            idx_b: SpatialIndex::build(b.points(), cell)?,
        })
    }

    pub fn len(&self) -> usize {
        self.a.len() + self.b.len()
    }

    /// Label, point and sensor origin of joint index `k`.
    pub fn get(&self, k: usize) -> (SourceLabel, Point3, Point3) {
        if k < self.a.len() {
            (SourceLabel::A, self.a.points()[k], self.a.sensor_origin())
        } else {
            let i = k - self.a.len();
            (SourceLabel::B, self.b.points()[i], self.b.sensor_origin())
        }
    }

    pub fn own(&self, label: SourceLabel) -> &SpatialIndex {
        match label {
            SourceLabel::A => &self.idx_a,
            SourceLabel::B => &self.idx_b,
        }
    }

    pub fn accumulate_into(index: &SpatialIndex, p: &Point3, r: f64, acc: &mut CovarianceAccumulator) {
        index.visit_within(p, r, |_, q| {
            acc.push(q);
            true
        });
    }

    pub fn joint_accumulator(&self, p: &Point3, r: f64) -> CovarianceAccumulator {
        let mut acc = CovarianceAccumulator::new();
        Self::accumulate_into(&self.idx_a, p, r, &mut acc);
        Self::accumulate_into(&self.idx_b, p, r, &mut acc);
        acc
    }
}

fn index_cell(params: &EntropyParams) -> f64 {
    params.r_max
}

fn overlap_flags(pair: &PairIndex<'_>, params: &EntropyParams) -> Vec<(bool, f64)> {
    (0..pair.len())
        .into_par_iter()
        .map(|k| {
            let (label, p, origin) = pair.get(k);
            let r = dynamic_radius(&p, &origin, params);
            (pair.own(label.other()).any_within(&p, r), r)
        })
        .collect()
}

/// Fraction of points of `a ∪ b` with at least one point of the other cloud
/// inside their neighborhood radius.
pub fn overlap_ratio(a: &PointCloud, b: &PointCloud, params: &EntropyParams) -> Result<f64> {
    a.require_non_empty("cloud a")?;
    b.require_non_empty("cloud b")?;
    params.validate()?;
    let pair = PairIndex::build(a, b, index_cell(params))?;
    let flags = overlap_flags(&pair, params);
    Ok(fraction(&flags))
}

fn fraction(flags: &[(bool, f64)]) -> f64 {
    flags.iter().filter(|(o, _)| *o).count() as f64 / flags.len() as f64
}

fn entropy_or_invalid(summary: Result<CovarianceSummary>, epsilon: f64) -> f64 {
    summary
        .and_then(|s| point_entropy(s.determinant, epsilon))
        .unwrap_or(f64::NAN)
}

fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// Computes the quality measure `Q = H_joint − H_sep` of a pair.
///
/// Steps, in order: overlap gating, restriction to overlapping points,
/// per-point separate and joint entropies at the same radius, rejection of
/// the lowest separate entropies, and mean or median aggregation.
pub fn coral_quality(a: &PointCloud, b: &PointCloud, params: &EntropyParams) -> Result<QualityResult> {
    a.require_non_empty("cloud a")?;
    b.require_non_empty("cloud b")?;
    params.validate()?;
    let pair = PairIndex::build(a, b, index_cell(params))?;
    let flags = overlap_flags(&pair, params);
    let overlap = fraction(&flags);
    if overlap < params.min_overlap {
        return Ok(QualityResult {
            h_sep: f64::NAN,
            h_joint: f64::NAN,
            q: f64::NAN,
            overlap_ratio: overlap,
            per_point: Vec::new(),
            status: QualityStatus::InsufficientOverlap,
        });
    }

    let overlapping: Vec<(usize, f64)> = flags
        .iter()
        .enumerate()
        .filter(|(_, (o, _))| *o)
        .map(|(k, (_, r))| (k, *r))
        .collect();

    let mut per_point: Vec<PerPointEntropy> = overlapping
        .par_iter()
        .map(|&(k, r)| {
            let (label, p, _) = pair.get(k);
            let mut own = CovarianceAccumulator::new();
            PairIndex::accumulate_into(pair.own(label), &p, r, &mut own);
            let joint = pair.joint_accumulator(&p, r);
            let enough = own.count() >= params.min_neighbors;
            let (h_sep, h_joint) = if enough {
                (
                    entropy_or_invalid(own.finish(), params.epsilon),
                    entropy_or_invalid(joint.finish(), params.epsilon),
                )
            } else {
                (f64::NAN, f64::NAN)
            };
            let valid = enough && h_sep.is_finite() && h_joint.is_finite();
            PerPointEntropy {
                index: k,
                label,
                point: p,
                h_sep,
                h_joint,
                q: h_joint - h_sep,
                valid,
                retained: valid,
                radius_used: r,
            }
        })
        .collect();

    // Outlier rejection on the separate entropy, ties by joint index.
    let mut ranked: Vec<usize> = (0..per_point.len()).filter(|&i| per_point[i].valid).collect();
    let reject = (params.e_reject * ranked.len() as f64).floor() as usize;
    ranked.sort_by(|&i, &j| {
        per_point[i]
            .h_sep
            .total_cmp(&per_point[j].h_sep)
            .then(per_point[i].index.cmp(&per_point[j].index))
    });
    for &i in &ranked[..reject] {
        per_point[i].retained = false;
    }

    let retained: Vec<&PerPointEntropy> = per_point.iter().filter(|p| p.retained).collect();
    if retained.is_empty() {
        return Err(CoralError::InsufficientData(
            "no valid overlapping points remain".into(),
        ));
    }
    let (h_sep, h_joint) = match params.aggregation {
        Aggregation::Mean => {
            let n = retained.len() as f64;
            let (s, j) = retained
                .iter()
                .fold((0.0, 0.0), |(s, j), p| (s + p.h_sep, j + p.h_joint));
            (s / n, j / n)
        }
        Aggregation::Median => {
            let mut s: Vec<f64> = retained.iter().map(|p| p.h_sep).collect();
            let mut j: Vec<f64> = retained.iter().map(|p| p.h_joint).collect();
            (lower_median(&mut s), lower_median(&mut j))
        }
    };
    Ok(QualityResult {
        h_sep,
        h_joint,
        q: h_joint - h_sep,
        overlap_ratio: overlap,
        per_point,
        status: QualityStatus::Measured,
    })
}

/// Classifier inputs `(x1, x2) = (H_joint, H_sep)`. `None` when the pair was
/// not measured; such pairs are declared misaligned without a model.
pub fn extract_features_coral(result: &QualityResult) -> Option<(f64, f64)> {
    result.is_measured().then_some((result.h_joint, result.h_sep))
}

/// Writes `x y z q valid` per overlapping point, fixed 6 decimals. Points
/// that are invalid or rejected carry `valid = 0` and `q = 0`.
pub fn write_per_point<W: Write>(result: &QualityResult, mut out: W) -> std::io::Result<()> {
    for p in &result.per_point {
        let q = if p.retained { p.q } else { 0.0 };
        writeln!(
            out,
            "{:.6} {:.6} {:.6} {:.6} {}",
            p.point.x,
            p.point.y,
            p.point.z,
            q,
            u8::from(p.retained)
        )?;
    }
    Ok(())
}
