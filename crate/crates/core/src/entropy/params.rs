use serde::{Deserialize, Serialize};

use crate::error::{CoralError, Result};

/// How per-point entropies are reduced to `H_sep` / `H_joint`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Mean,
    /// Lower median for even counts.
    Median,
}

/// Tuning knobs for the entropy-based quality measure.
///
/// Fixed-radius operation is `r_min == r_max` with `alpha == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyParams {
    /// Lower radius bound, meters.
    pub r_min: f64,
    /// Upper radius bound, meters.
    pub r_max: f64,
    /// Vertical angular resolution of the sensor, radians. Zero disables the
    /// range-dependent radius.
    pub alpha: f64,
    /// Additive floor inside the entropy logarithm.
    pub epsilon: f64,
    /// Fraction of valid points with the lowest separate entropy to discard.
    pub e_reject: f64,
    /// Pairs whose overlap ratio falls below this are not measured.
    pub min_overlap: f64,
    pub aggregation: Aggregation,
    /// Minimum neighborhood size (in the point's own cloud) for a point to
    /// contribute.
    pub min_neighbors: usize,
}

pub const DEFAULT_MIN_NEIGHBORS: usize = 5;
pub const DEFAULT_MIN_OVERLAP: f64 = 0.10;

impl Default for EntropyParams {
    fn default() -> Self {
        Self::eth()
    }
}

impl EntropyParams {
    pub fn fixed_radius(r: f64) -> Self {
        Self {
            r_min: r,
            r_max: r,
            alpha: 0.0,
            epsilon: 0.0,
            e_reject: 0.0,
            min_overlap: DEFAULT_MIN_OVERLAP,
            aggregation: Aggregation::Mean,
            min_neighbors: DEFAULT_MIN_NEIGHBORS,
        }
    }

    /// Survey-scanner profile: fixed 0.3 m radius, 20 % rejection, no floor.
    pub fn eth() -> Self {
        Self {
            e_reject: 0.2,
            ..Self::fixed_radius(0.3)
        }
    }

    /// Spinning-lidar profile: range-dependent radius in [0.2, 1.0] m from a
    /// 0.92° vertical resolution, 20 % rejection, 1e-8 floor.
    pub fn spinning_lidar() -> Self {
        Self {
            r_min: 0.2,
            r_max: 1.0,
            alpha: 0.92f64.to_radians(),
            epsilon: 1e-8,
            e_reject: 0.2,
            min_overlap: DEFAULT_MIN_OVERLAP,
            aggregation: Aggregation::Mean,
            min_neighbors: DEFAULT_MIN_NEIGHBORS,
        }
    }

    pub fn with_aggregation(mut self, aggregation: Aggregation) -> Self {
        self.aggregation = aggregation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoralError::InvalidParameter(msg));
        let all_finite = [
            self.r_min,
            self.r_max,
            self.alpha,
            self.epsilon,
            self.e_reject,
            self.min_overlap,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return bad("entropy parameters must be finite".into());
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max) {
            return bad(format!(
                "need 0 < r_min <= r_max, got r_min={} r_max={}",
                self.r_min, self.r_max
            ));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, pi/2), got {}", self.alpha));
        }
        if self.epsilon < 0.0 {
            return bad(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.e_reject) {
            return bad(format!("e_reject must lie in [0, 1), got {}", self.e_reject));
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return bad(format!(
                "min_overlap must lie in [0, 1], got {}",
                self.min_overlap
            ));
        }
        if self.min_neighbors < 4 {
            return bad(format!(
                "min_neighbors must be >= 4, got {}",
                self.min_neighbors
            ));
        }
        Ok(())
    }
}
