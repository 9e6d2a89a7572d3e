use rayon::prelude::*;

use crate::cloud::{PointCloud, SourceLabel};
use crate::entropy::{point_entropy, PairIndex};
use crate::error::{CoralError, Result};

/// Mean map entropy: the average per-point entropy of the joint cloud with a
/// fixed radius `r` and no floor. Points with fewer than `min_neighbors`
/// joint neighbors, or a singular neighborhood, are skipped.
pub fn mme(joint: &PointCloud, r: f64, min_neighbors: usize) -> Result<f64> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(CoralError::InvalidParameter(format!(
            "MME radius must be positive, got {r}"
        )));
    }
    // Split by label so the joint neighborhoods are gathered exactly as the
    // pairwise measure gathers them.
    let a = joint.select(SourceLabel::A);
    let b = joint.select(SourceLabel::B);
    let pair = PairIndex::build(&a, &b, r)?;
    let entropies: Vec<Option<f64>> = (0..pair.len())
        .into_par_iter()
        .map(|k| {
            let (_, p, _) = pair.get(k);
            let acc = pair.joint_accumulator(&p, r);
            if acc.count() < min_neighbors {
                return None;
            }
            let h = acc
                .finish()
                .and_then(|s| point_entropy(s.determinant, 0.0))
                .ok()?;
            h.is_finite().then_some(h)
        })
        .collect();
    let (sum, n) = entropies
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), h| (s + h, n + 1));
    if n == 0 {
        return Err(CoralError::InsufficientData(
            "no point has a usable neighborhood for MME".into(),
        ));
    }
    Ok(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::{join, Point3};
    use crate::entropy::{coral_quality, EntropyParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn plane(n: usize, seed: u64, z: f64, label: SourceLabel) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let pts = (0..n)
            .map(|_| Point3::new(rng.gen::<f64>(), rng.gen::<f64>(), z + noise.sample(&mut rng)))
            .collect();
        PointCloud::new(pts, Point3::new(0.5, 0.5, 1.0), label).unwrap()
    }

    #[test]
    fn constant_entropy_field_gives_zero() {
        // Lattice of 8-point cube-corner clusters whose sample covariance is
        // s²·(8/7)·I; pick s so that det = 1/(2πe). Clusters are far apart
        // relative to the radius so each neighborhood is one cluster.
        let target = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E);
        let var = target.cbrt();
        let s = (var * 7.0 / 8.0).sqrt();
        let mut pts = Vec::new();
        for c in 0..4 {
            let centre = Point3::new(10.0 * c as f64, 0.0, 0.0);
            for corner in 0..8 {
                let sx = if corner & 1 == 0 { -s } else { s };
                let sy = if corner & 2 == 0 { -s } else { s };
                let sz = if corner & 4 == 0 { -s } else { s };
                pts.push(centre + nalgebra::Vector3::new(sx, sy, sz));
            }
        }
        let cloud = PointCloud::new(pts, Point3::origin(), SourceLabel::A).unwrap();
        let value = mme(&cloud, 3.0, 5).unwrap();
        assert!(value.abs() < 1e-12, "{value}");
    }

    #[test]
    fn reduces_to_joint_entropy_of_pair_measure() {
        let a = plane(3000, 1, 0.0, SourceLabel::A);
        let b = plane(3000, 2, 0.01, SourceLabel::B);
        let params = EntropyParams {
            e_reject: 0.0,
            min_overlap: 0.0,
            epsilon: 0.0,
            ..EntropyParams::fixed_radius(0.2)
        };
        let res = coral_quality(&a, &b, &params).unwrap();
        assert_eq!(res.overlap_ratio, 1.0);
        assert!(res.per_point.iter().all(|p| p.retained));
        let value = mme(&join(&a, &b), 0.2, params.min_neighbors).unwrap();
        assert_eq!(value, res.h_joint);
    }

    #[test]
    fn misaligned_planes_have_higher_mme() {
        let a = plane(5000, 3, 0.0, SourceLabel::A);
        let aligned = mme(&join(&a, &plane(5000, 4, 0.0, SourceLabel::B)), 0.3, 5).unwrap();
        let shifted = mme(&join(&a, &plane(5000, 4, 0.1, SourceLabel::B)), 0.3, 5).unwrap();
        assert!(shifted > aligned);
    }

    #[test]
    fn errors() {
        let a = plane(10, 5, 0.0, SourceLabel::A);
        assert!(matches!(mme(&a, 0.0, 5), Err(CoralError::InvalidParameter(_))));
        let lonely = PointCloud::new(vec![Point3::origin()], Point3::origin(), SourceLabel::A).unwrap();
        assert!(matches!(mme(&lonely, 0.3, 5), Err(CoralError::InsufficientData(_))));
    }
}
