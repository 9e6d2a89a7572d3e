use nalgebra::{Matrix3, Vector3};

use crate::cloud::Point3;
use crate::error::{CoralError, Result};

/// Sample covariance of a neighborhood and its spectral summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSummary {
    pub covariance: Matrix3<f64>,
    /// Product of the (clamped) eigenvalues.
    pub determinant: f64,
    /// Descending, clamped to be non-negative.
    pub eigenvalues: [f64; 3],
    pub neighbor_count: usize,
}

/// Single-pass accumulator for the unbiased sample covariance.
///
/// Coordinates are shifted by the first point pushed, which keeps the
/// second-moment sums well conditioned for neighborhoods far from the origin.
#[derive(Debug, Clone)]
pub struct CovarianceAccumulator {
    n: usize,
    shift: Vector3<f64>,
    sum: Vector3<f64>,
    sum_outer: Matrix3<f64>,
}

impl Default for CovarianceAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

impl CovarianceAccumulator {
    pub fn new() -> Self {
        Self {
            n: 0,
            shift: Vector3::zeros(),
            sum: Vector3::zeros(),
            sum_outer: Matrix3::zeros(),
        }
    }

    pub fn push(&mut self, p: &Point3) {
        if self.n == 0 {
            self.shift = p.coords;
        }
        let d = p.coords - self.shift;
        self.n += 1;
        self.sum += d;
        self.sum_outer += d * d.transpose();
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn finish(&self) -> Result<CovarianceSummary> {
        if self.n < 2 {
            return Err(CoralError::DegenerateNeighborhood {
                count: self.n,
                required: 2,
            });
        }
        let n = self.n as f64;
        let mut cov = (self.sum_outer - self.sum * self.sum.transpose() / n) / (n - 1.0);
        // Enforce exact symmetry.
        for i in 0..3 {
            for j in (i + 1)..3 {
                let m = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = m;
                cov[(j, i)] = m;
            }
        }
        Ok(summarize(cov, self.n))
    }
}

/// Eigen-decomposes a symmetric 3×3 covariance.
pub(crate) fn summarize(covariance: Matrix3<f64>, neighbor_count: usize) -> CovarianceSummary {
    let eig = covariance.symmetric_eigen();
    let mut ev = [
        eig.eigenvalues[0].max(0.0),
        eig.eigenvalues[1].max(0.0),
        eig.eigenvalues[2].max(0.0),
    ];
    ev.sort_by(|a, b| b.total_cmp(a));
    CovarianceSummary {
        covariance,
        determinant: ev[0] * ev[1] * ev[2],
        eigenvalues: ev,
        neighbor_count,
    }
}

/// Unbiased (divisor `n − 1`) sample covariance of `neighbors`.
pub fn sample_covariance(neighbors: &[Point3]) -> Result<CovarianceSummary> {
    let mut acc = CovarianceAccumulator::new();
    neighbors.iter().for_each(|p| acc.push(p));
    acc.finish()
}

/// Differential entropy `½·ln(2πe·det + ε)` in nats.
///
/// With `ε = 0` and a singular covariance this is `-∞`; callers treat such
/// points as invalid.
pub fn point_entropy(det: f64, epsilon: f64) -> Result<f64> {
    if det.is_nan() || det < 0.0 {
        return Err(CoralError::NumericalDegeneracy(format!(
            "negative covariance determinant {det}"
        )));
    }
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    Ok(0.5 * (two_pi_e * det + epsilon).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook two-pass covariance, written independently of the accumulator.
    fn two_pass(points: &[Point3]) -> [[f64; 3]; 3] {
        let n = points.len() as f64;
        let mut mean = [0.0; 3];
        for p in points {
            mean[0] += p.x;
            mean[1] += p.y;
            mean[2] += p.z;
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut c = [[0.0; 3]; 3];
        for p in points {
            let d = [p.x - mean[0], p.y - mean[1], p.z - mean[2]];
            for i in 0..3 {
                for j in 0..3 {
                    c[i][j] += d[i] * d[j];
                }
            }
        }
        for row in c.iter_mut() {
            row.iter_mut().for_each(|v| *v /= n - 1.0);
        }
        c
    }

    #[test]
    fn planar_cross() {
        let pts = [
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(-1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, -1.0, 0.0),
        ];
        let s = sample_covariance(&pts).unwrap();
        let expected = Matrix3::from_diagonal(&Vector3::new(2.0 / 3.0, 2.0 / 3.0, 0.0));
        assert!((s.covariance - expected).abs().max() < 1e-15);
        assert_eq!(s.determinant, 0.0);
        assert_eq!(s.neighbor_count, 4);
    }

    #[test]
    fn repeated_point_is_zero() {
        let p = Point3::new(3.0, -2.0, 7.5);
        let s = sample_covariance(&[p; 9]).unwrap();
        assert_eq!(s.covariance, Matrix3::zeros());
        assert_eq!(s.determinant, 0.0);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(
            sample_covariance(&[Point3::origin()]),
            Err(CoralError::DegenerateNeighborhood { count: 1, .. })
        ));
        assert!(sample_covariance(&[]).is_err());
    }

    #[test]
    fn matches_two_pass_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let pts: Vec<Point3> = (0..200)
            .map(|_| Point3::new(rng.gen_range(-2.0..2.0), rng.gen_range(5.0..6.0), rng.gen()))
            .collect();
        let s = sample_covariance(&pts).unwrap();
        let oracle = two_pass(&pts);
        for (i, row) in oracle.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((s.covariance[(i, j)] - v).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn entropy_reference_values() {
        let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
        assert!(point_entropy(1.0 / two_pi_e, 0.0).unwrap().abs() < 1e-12);
        assert!((point_entropy(0.0, 1e-8).unwrap() - (-9.210340371976184)).abs() < 1e-12);
        assert!((point_entropy(1.0, 0.0).unwrap() - 1.4189385332046727).abs() < 1e-12);
        assert_eq!(point_entropy(0.0, 0.0).unwrap(), f64::NEG_INFINITY);
        assert!(matches!(
            point_entropy(-1e-3, 0.0),
            Err(CoralError::NumericalDegeneracy(_))
        ));
    }

    proptest! {
        #[test]
        fn summary_invariants(seed in 0u64..5000, n in 2usize..40, scale in 1e-3f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point3> = (0..n)
                .map(|_| Point3::new(rng.gen::<f64>() * scale, rng.gen::<f64>() * scale, rng.gen::<f64>() * scale * 0.1))
                .collect();
            let s = sample_covariance(&pts).unwrap();
            prop_assert!((s.covariance - s.covariance.transpose()).abs().max() < 1e-12);
            prop_assert!(s.eigenvalues.iter().all(|&l| l >= -1e-12));
            prop_assert!(s.eigenvalues[0] >= s.eigenvalues[1] && s.eigenvalues[1] >= s.eigenvalues[2]);
            let prod = s.eigenvalues[0] * s.eigenvalues[1] * s.eigenvalues[2];
            prop_assert!((s.determinant - prod).abs() <= 1e-6 * prod.abs());
        }
    }
}
