//! Parameter tuning aids: the misaligned/aligned quality ratio and
//! quality surfaces over pose offsets.

use std::io::Write;

use nalgebra::Vector3;
use serde::Serialize;

use super::perturb::{induce_error, ErrorSpec};
use super::ScanPair;
use crate::cloud::{apply_transform, RigidTransform};
use crate::entropy::{coral_quality, EntropyParams};
use crate::error::{CoralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SensitivityRatio {
    pub q_aligned: f64,
    pub q_misaligned: f64,
    pub ratio: f64,
}

/// `Q(misaligned) / Q(aligned)` for one pair. Larger means the measure
/// separates the two cases better.
pub fn sensitivity_ratio(pair: &ScanPair, spec: &ErrorSpec, params: &EntropyParams) -> Result<SensitivityRatio> {
    let aligned = coral_quality(&pair.cloud_a, &pair.cloud_b, params)?;
    let perturbed = induce_error(pair, spec)?;
    let misaligned = coral_quality(&perturbed.cloud_a, &perturbed.cloud_b, params)?;
    if !(aligned.is_measured() && misaligned.is_measured()) {
        return Err(CoralError::InsufficientData(
            "sensitivity ratio needs both pairs measured".into(),
        ));
    }
    ratio(aligned.q, misaligned.q)
}

fn ratio(q_aligned: f64, q_misaligned: f64) -> Result<SensitivityRatio> {
    if q_aligned == 0.0 {
        return Err(CoralError::UndefinedRatio { q_aligned, q_misaligned });
    }
    Ok(SensitivityRatio {
        q_aligned,
        q_misaligned,
        ratio: q_misaligned / q_aligned,
    })
}

/// The cumulative refinement sequence: fixed radius, then range-dependent
/// radius, then the entropy floor, then outlier rejection. Values that are
/// disabled in a stage are taken as their neutral setting.
pub fn refinement_variants(full: &EntropyParams) -> Vec<(&'static str, EntropyParams)> {
    let fixed = EntropyParams {
        r_max: full.r_min,
        alpha: 0.0,
        epsilon: 0.0,
        e_reject: 0.0,
        ..*full
    };
    let dynamic = EntropyParams {
        r_max: full.r_max,
        alpha: full.alpha,
        ..fixed
    };
    let floored = EntropyParams {
        epsilon: full.epsilon,
        ..dynamic
    };
    let rejecting = EntropyParams {
        e_reject: full.e_reject,
        ..floored
    };
    vec![
        ("fixed-radius", fixed),
        ("dynamic-radius", dynamic),
        ("epsilon", floored),
        ("reject", rejecting),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceSample {
    pub dx: f64,
    pub dy: f64,
    pub dtheta: f64,
    pub q: f64,
}

/// `Q` with `cloud_b` rotated by each `dtheta` about its sensor's vertical
/// axis and shifted by each `(dx, dy)`. Unmeasured offsets yield `NaN`.
pub fn quality_surface(
    pair: &ScanPair,
    params: &EntropyParams,
    dxs: &[f64],
    dys: &[f64],
    dthetas: &[f64],
) -> Result<Vec<SurfaceSample>> {
    let origin = pair.cloud_b.sensor_origin();
    let mut out = Vec::with_capacity(dxs.len() * dys.len() * dthetas.len());
    for &dtheta in dthetas {
        for &dy in dys {
            for &dx in dxs {
                let t = RigidTransform::from_translation(Vector3::new(dx, dy, 0.0))
                    .compose(&RigidTransform::rotation_about_vertical(&origin, dtheta));
                let b = apply_transform(&pair.cloud_b, &t)?;
                let q = match coral_quality(&pair.cloud_a, &b, params) {
                    Ok(r) if r.is_measured() => r.q,
                    Ok(_) | Err(CoralError::InsufficientData(_)) => f64::NAN,
                    Err(e) => return Err(e),
                };
                out.push(SurfaceSample { dx, dy, dtheta, q });
            }
        }
    }
    Ok(out)
}

/// `n` evenly spaced values over `[-half, half]`.
pub fn symmetric_steps(half: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n)
            .map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

pub fn write_surface_csv<W: Write>(samples: &[SurfaceSample], mut out: W) -> std::io::Result<()> {
    writeln!(out, "dx,dy,dtheta,Q")?;
    for s in samples {
        writeln!(out, "{:.6},{:.6},{:.6},{:.9}", s.dx, s.dy, s.dtheta, s.q)?;
    }
    Ok(())
}
