//! Point clouds, rigid motions and voxel-grid downsampling.

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector3};
use rustc_hash::FxHashMap;

use crate::error::{CoralError, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Tolerance on `RᵀR = I` and `det R = 1` for a rotation to be accepted.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Which scan of a pair a point came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceLabel {
    A,
    B,
}

impl SourceLabel {
    pub fn other(self) -> Self {
        match self {
            SourceLabel::A => SourceLabel::B,
            SourceLabel::B => SourceLabel::A,
        }
    }
}

pub(crate) fn is_finite(p: &Point3) -> bool {
    p.coords.iter().all(|c| c.is_finite())
}

/// An ordered set of points with the world-frame sensor origin they were
/// observed from. Every point carries the label of the scan it belongs to,
/// so a joined cloud can still be split back into its parts.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    labels: Vec<SourceLabel>,
    sensor_origin: Point3,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, sensor_origin: Point3, label: SourceLabel) -> Result<Self> {
        let labels = vec![label; points.len()];
        Self::with_labels(points, labels, sensor_origin)
    }

    pub fn with_labels(
        points: Vec<Point3>,
        labels: Vec<SourceLabel>,
        sensor_origin: Point3,
    ) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(CoralError::InvalidInput(format!(
                "{} points but {} labels",
                points.len(),
                labels.len()
            )));
        }
        if !is_finite(&sensor_origin) {
            return Err(CoralError::InvalidInput("non-finite sensor origin".into()));
        }
        if let Some(i) = points.iter().position(|p| !is_finite(p)) {
            return Err(CoralError::InvalidInput(format!(
                "non-finite coordinate at point {i}"
            )));
        }
        Ok(Self {
            points,
            labels,
            sensor_origin,
        })
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn labels(&self) -> &[SourceLabel] {
        &self.labels
    }

    pub fn sensor_origin(&self) -> Point3 {
        self.sensor_origin
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Relabels every point. Used when a scan loaded from disk becomes one
    /// side of a pair.
    pub fn relabeled(mut self, label: SourceLabel) -> Self {
        self.labels.iter_mut().for_each(|l| *l = label);
        self
    }

    /// The subset of points carrying `label`, in original order.
    pub fn select(&self, label: SourceLabel) -> PointCloud {
        let points: Vec<Point3> = self
            .points
            .iter()
            .zip(&self.labels)
            .filter(|(_, l)| **l == label)
            .map(|(p, _)| *p)
            .collect();
        let labels = vec![label; points.len()];
        PointCloud {
            points,
            labels,
            sensor_origin: self.sensor_origin,
        }
    }

    pub fn require_non_empty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            Err(CoralError::InvalidInput(format!("{what} is empty")))
        } else {
            Ok(())
        }
    }
}

/// A proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Largest entry of `|RᵀR − I|` together with `|det R − 1|`.
pub fn orthonormality_error(rotation: &Matrix3<f64>) -> f64 {
    let gram = rotation.transpose() * rotation - Matrix3::identity();
    let ortho = gram.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    ortho.max((rotation.determinant() - 1.0).abs())
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(CoralError::InvalidTransform("non-finite entry".into()));
        }
        let err = orthonormality_error(&rotation);
        if err > ROTATION_TOLERANCE {
            return Err(CoralError::InvalidTransform(format!(
                "rotation is not orthonormal (error {err:.3e})"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation by `angle` radians about the world z axis through the origin.
    pub fn rotation_z(angle: f64) -> Self {
        Self {
            rotation: *Rotation3::from_axis_angle(&Vector3::z_axis(), angle).matrix(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `angle` about the vertical line through `pivot`.
    pub fn rotation_about_vertical(pivot: &Point3, angle: f64) -> Self {
        let rot = Self::rotation_z(angle);
        let t = pivot.coords - rot.rotation * pivot.coords;
        Self {
            rotation: rot.rotation,
            translation: t,
        }
    }

    pub fn from_matrix4(m: &Matrix4<f64>) -> Result<Self> {
        let rotation = m.fixed_view::<3, 3>(0, 0).into_owned();
        let translation = m.fixed_view::<3, 1>(0, 3).into_owned();
        Self::new(rotation, translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_matrix4(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Maps every point and the sensor origin through `t`.
pub fn apply_transform(cloud: &PointCloud, t: &RigidTransform) -> Result<PointCloud> {
    cloud.require_non_empty("cloud")?;
    // Re-check: the fields are private but a transform may have been built
    // through `compose` chains that accumulate drift.
    let err = orthonormality_error(&t.rotation);
    if err > ROTATION_TOLERANCE {
        return Err(CoralError::InvalidTransform(format!(
            "rotation is not orthonormal (error {err:.3e})"
        )));
    }
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| t.transform_point(p)).collect(),
        labels: cloud.labels.clone(),
        sensor_origin: t.transform_point(&cloud.sensor_origin),
    })
}

/// Voxel cell of `p` for a grid anchored at the world origin.
pub(crate) fn voxel_key(p: &Point3, cell: f64) -> (i64, i64, i64) {
    (
        (p.x / cell).floor() as i64,
        (p.y / cell).floor() as i64,
        (p.z / cell).floor() as i64,
    )
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// Output order follows the first point seen in each voxel, so the result is
/// deterministic. Points with different labels never share a representative.
pub fn voxel_downsample(cloud: &PointCloud, cell: f64) -> Result<PointCloud> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(CoralError::InvalidParameter(format!(
            "voxel cell must be positive, got {cell}"
        )));
    }
    let mut slots: FxHashMap<(SourceLabel, (i64, i64, i64)), usize> = FxHashMap::default();
    let mut sums: Vec<(Vector3<f64>, usize, SourceLabel)> = Vec::new();
    for (p, label) in cloud.points.iter().zip(&cloud.labels) {
        let key = (*label, voxel_key(p, cell));
        let slot = *slots.entry(key).or_insert_with(|| {
            sums.push((Vector3::zeros(), 0, *label));
            sums.len() - 1
        });
        sums[slot].0 += p.coords;
        sums[slot].1 += 1;
    }
    let (points, labels) = sums
        .into_iter()
        .map(|(sum, n, label)| (Point3::from(sum / n as f64), label))
        .unzip();
    Ok(PointCloud {
        points,
        labels,
        sensor_origin: cloud.sensor_origin,
    })
}

/// Union of two clouds. Points keep their labels and are never merged.
pub fn join(a: &PointCloud, b: &PointCloud) -> PointCloud {
    let mut points = Vec::with_capacity(a.len() + b.len());
    points.extend_from_slice(&a.points);
    points.extend_from_slice(&b.points);
    let mut labels = Vec::with_capacity(a.len() + b.len());
    labels.extend_from_slice(&a.labels);
    labels.extend_from_slice(&b.labels);
    PointCloud {
        points,
        labels,
        sensor_origin: a.sensor_origin,
    }
}
