//! Desk-scale synthetic scenes: two independent noisy scans of the same
//! parametric surfaces, aligned at ground truth.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{derive_seed, ScanPair};
use crate::cloud::{Point3, PointCloud, SourceLabel};
use crate::error::{CoralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// Closed hallway with floor, ceiling, walls, end walls and boxes.
    Corridor,
    /// One square plane seen from two nearby viewpoints.
    PlanePair,
    /// Ground plane under a canopy of small leaf clusters.
    Foliage,
}

impl fmt::Display for SceneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SceneKind::Corridor => "corridor",
            SceneKind::PlanePair => "plane-pair",
            SceneKind::Foliage => "foliage",
        })
    }
}

impl FromStr for SceneKind {
    type Err = CoralError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corridor" => Ok(SceneKind::Corridor),
            "plane-pair" | "plane" => Ok(SceneKind::PlanePair),
            "foliage" => Ok(SceneKind::Foliage),
            other => Err(CoralError::Config(format!("unknown scene kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub kind: SceneKind,
    /// Points per square meter of surface, per scan.
    pub density: f64,
    /// Characteristic size, meters: plane side, corridor length, or foliage
    /// patch side.
    pub extent: f64,
    /// Standard deviation of the additive range noise, meters.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(kind: SceneKind, density: f64, extent: f64, noise_sigma: f64, seed: u64) -> Self {
        Self {
            kind,
            density,
            extent,
            noise_sigma,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    /// `origin + s·u + t·v`, `s, t ∈ [0, 1]`.
    Rect {
        origin: Vector3<f64>,
        u: Vector3<f64>,
        v: Vector3<f64>,
    },
    Sphere { centre: Vector3<f64>, radius: f64 },
}

impl Surface {
    fn rect(origin: [f64; 3], u: [f64; 3], v: [f64; 3]) -> Self {
        Surface::Rect {
            origin: Vector3::from(origin),
            u: Vector3::from(u),
            v: Vector3::from(v),
        }
    }

    fn area(&self) -> f64 {
        match self {
            Surface::Rect { u, v, .. } => u.cross(v).norm(),
            Surface::Sphere { radius, .. } => 4.0 * PI * radius * radius,
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vector3<f64> {
        match self {
            Surface::Rect { origin, u, v } => origin + u * rng.gen::<f64>() + v * rng.gen::<f64>(),
            Surface::Sphere { centre, radius } => {
                let d: Vector3<f64> = Vector3::new(
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                    StandardNormal.sample(rng),
                );
                let n = d.norm();
                if n < 1e-12 {
                    centre + Vector3::new(*radius, 0.0, 0.0)
                } else {
                    centre + d * (*radius / n)
                }
            }
        }
    }
}

struct Layout {
    surfaces: Vec<Surface>,
    origins: [Point3; 2],
}

fn box_faces(min: [f64; 3], size: [f64; 3]) -> Vec<Surface> {
    let [x, y, z] = min;
    let [dx, dy, dz] = size;
    vec![
        Surface::rect([x, y, z + dz], [dx, 0.0, 0.0], [0.0, dy, 0.0]),
        Surface::rect([x, y, z], [dx, 0.0, 0.0], [0.0, 0.0, dz]),
        Surface::rect([x, y + dy, z], [dx, 0.0, 0.0], [0.0, 0.0, dz]),
        Surface::rect([x, y, z], [0.0, dy, 0.0], [0.0, 0.0, dz]),
        Surface::rect([x + dx, y, z], [0.0, dy, 0.0], [0.0, 0.0, dz]),
    ]
}

fn corridor<R: Rng>(length: f64, rng: &mut R) -> Layout {
    let width = rng.gen_range(2.0..4.0);
    let height = rng.gen_range(2.2..3.2);
    let (x0, y0) = (-length / 2.0, -width / 2.0);
    let mut surfaces = vec![
        Surface::rect([x0, y0, 0.0], [length, 0.0, 0.0], [0.0, width, 0.0]),
        Surface::rect([x0, y0, height], [length, 0.0, 0.0], [0.0, width, 0.0]),
        Surface::rect([x0, y0, 0.0], [length, 0.0, 0.0], [0.0, 0.0, height]),
        Surface::rect([x0, -y0, 0.0], [length, 0.0, 0.0], [0.0, 0.0, height]),
        Surface::rect([x0, y0, 0.0], [0.0, width, 0.0], [0.0, 0.0, height]),
        Surface::rect([-x0, y0, 0.0], [0.0, width, 0.0], [0.0, 0.0, height]),
    ];
    let boxes = rng.gen_range(3..=6);
    for _ in 0..boxes {
        let size = [
            rng.gen_range(0.3..1.0),
            rng.gen_range(0.3..0.8),
            rng.gen_range(0.3..1.5),
        ];
        let x = rng.gen_range(x0 + 0.2..-x0 - 0.2 - size[0]);
        let y = if rng.gen::<bool>() { y0 } else { -y0 - size[1] };
        surfaces.extend(box_faces([x, y, 0.0], size));
    }
    let sensor_z = rng.gen_range(1.0..1.6);
    let spread = (length / 6.0).min(1.0);
    Layout {
        surfaces,
        origins: [
            Point3::new(-spread / 2.0, rng.gen_range(-0.2..0.2), sensor_z),
            Point3::new(spread / 2.0, rng.gen_range(-0.2..0.2), sensor_z),
        ],
    }
}

fn plane_pair(side: f64) -> Layout {
    Layout {
        surfaces: vec![Surface::rect(
            [-side / 2.0, -side / 2.0, 0.0],
            [side, 0.0, 0.0],
            [0.0, side, 0.0],
        )],
        origins: [
            Point3::new(0.0, 0.0, 1.0),
            Point3::new(0.1 * side, 0.0, 1.0),
        ],
    }
}

fn foliage<R: Rng>(side: f64, rng: &mut R) -> Layout {
    let mut surfaces = vec![Surface::rect(
        [-side / 2.0, -side / 2.0, 0.0],
        [side, 0.0, 0.0],
        [0.0, side, 0.0],
    )];
    let clusters = (side * side * 2.0).ceil() as usize;
    for _ in 0..clusters {
        surfaces.push(Surface::Sphere {
            centre: Vector3::new(
                rng.gen_range(-side / 2.0..side / 2.0),
                rng.gen_range(-side / 2.0..side / 2.0),
                rng.gen_range(0.5..3.0),
            ),
            radius: rng.gen_range(0.05..0.35),
        });
    }
    Layout {
        surfaces,
        origins: [Point3::new(-0.5, 0.0, 1.5), Point3::new(0.5, 0.0, 1.5)],
    }
}

fn scan<R: Rng>(
    surfaces: &[Surface],
    cumulative: &[f64],
    count: usize,
    origin: &Point3,
    noise: Option<Normal<f64>>,
    rng: &mut R,
) -> Vec<Point3> {
    let total = *cumulative.last().unwrap();
    (0..count)
        .map(|_| {
            let pick = rng.gen::<f64>() * total;
            let i = cumulative.partition_point(|&c| c <= pick).min(surfaces.len() - 1);
            let p = surfaces[i].sample(rng);
            let mut q = Point3::from(p);
            if let Some(n) = noise {
                let ray = q - origin;
                let range = ray.norm();
                if range > 1e-9 {
                    q += ray * (n.sample(rng) / range);
                }
            }
            q
        })
        .collect()
}

/// Generates a ground-truth aligned pair of scans of one scene.
pub fn synth_scene(spec: &SceneSpec) -> Result<ScanPair> {
    if !(spec.density > 0.0 && spec.density.is_finite()) {
        return Err(CoralError::InvalidParameter(format!(
            "density must be positive, got {}",
            spec.density
        )));
    }
    if !(spec.extent > 0.0 && spec.extent.is_finite()) {
        return Err(CoralError::InvalidParameter(format!(
            "extent must be positive, got {}",
            spec.extent
        )));
    }
    if !(spec.noise_sigma >= 0.0 && spec.noise_sigma.is_finite()) {
        return Err(CoralError::InvalidParameter(format!(
            "noise sigma must be >= 0, got {}",
            spec.noise_sigma
        )));
    }
    let mut geometry_rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[0]));
    let layout = match spec.kind {
        SceneKind::Corridor => {
            if spec.extent < 2.5 {
                return Err(CoralError::InvalidParameter(
                    "corridor length must be at least 2.5 m".into(),
                ));
            }
            corridor(spec.extent, &mut geometry_rng)
        }
        SceneKind::PlanePair => plane_pair(spec.extent),
        SceneKind::Foliage => foliage(spec.extent, &mut geometry_rng),
    };
    let mut cumulative = Vec::with_capacity(layout.surfaces.len());
    let mut acc = 0.0;
    for s in &layout.surfaces {
        acc += s.area();
        cumulative.push(acc);
    }
    let count = (spec.density * acc).round().max(1.0) as usize;
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).unwrap());

    let mut clouds = Vec::with_capacity(2);
    for (i, label) in [SourceLabel::A, SourceLabel::B].into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[1 + i as u64]));
        let origin = layout.origins[i];
        let pts = scan(&layout.surfaces, &cumulative, count, &origin, noise, &mut rng);
        clouds.push(PointCloud::new(pts, origin, label)?);
    }
    let b = clouds.pop().unwrap();
    let a = clouds.pop().unwrap();
    Ok(ScanPair {
        cloud_a: a,
        cloud_b: b,
        sequence_id: format!("{}-{}", spec.kind, spec.seed),
        pair_index: 0,
    })
}
