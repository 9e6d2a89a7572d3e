use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ScanPair;
use crate::cloud::{apply_transform, RigidTransform};
use crate::error::{CoralError, Result};

/// Magnitude of the pose error injected into the second scan of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSpec {
    /// Horizontal translation, meters.
    pub e_d: f64,
    /// Rotation about the sensor's vertical axis, radians.
    pub e_theta: f64,
    pub seed: u64,
}

impl Default for ErrorSpec {
    fn default() -> Self {
        Self {
            e_d: 0.1,
            e_theta: 0.57f64.to_radians(),
            seed: 0,
        }
    }
}

impl ErrorSpec {
    pub fn new(e_d: f64, e_theta: f64, seed: u64) -> Self {
        Self { e_d, e_theta, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_d >= 0.0 && self.e_d.is_finite() && self.e_theta >= 0.0 && self.e_theta.is_finite()) {
            return Err(CoralError::InvalidParameter(format!(
                "error magnitudes must be finite and >= 0, got e_d={} e_theta={}",
                self.e_d, self.e_theta
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// The rigid motion applied to a scan observed from `sensor_origin`:
/// a rotation of `±e_theta` about the vertical through the sensor, then a
/// horizontal shift of length `e_d` in a uniformly drawn direction.
pub fn perturbation(spec: &ErrorSpec, sensor_origin: &crate::cloud::Point3) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let rotation = RigidTransform::rotation_about_vertical(sensor_origin, sign * spec.e_theta);
    let shift = RigidTransform::from_translation(Vector3::new(
        spec.e_d * phi.cos(),
        spec.e_d * phi.sin(),
        0.0,
    ));
    shift.compose(&rotation)
}

/// Misaligns `cloud_b` of the pair; `cloud_a` is untouched.
pub fn induce_error(pair: &ScanPair, spec: &ErrorSpec) -> Result<ScanPair> {
    spec.validate()?;
    let t = perturbation(spec, &pair.cloud_b.sensor_origin());
    Ok(ScanPair {
        cloud_a: pair.cloud_a.clone(),
        cloud_b: apply_transform(&pair.cloud_b, &t)?,
        sequence_id: pair.sequence_id.clone(),
        pair_index: pair.pair_index,
    })
}
