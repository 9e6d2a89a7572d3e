//! Point-to-distribution NDT score and the entropy-augmented Rel-NDT features.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::cloud::{voxel_key, Point3, PointCloud};
use crate::entropy::{point_entropy, sample_covariance, summarize};
use crate::error::{CoralError, Result};

pub type GridKey = (i64, i64, i64);

/// Which voxels around a query count as "direct neighbors".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adjacency {
    /// Only the voxel containing the query.
    Own,
    /// Own voxel plus the 6 face neighbors.
    Face,
    /// Own voxel plus all 26 face, edge and corner neighbors.
    Full,
}

impl Adjacency {
    fn offsets(self) -> Vec<GridKey> {
        let mut out = Vec::new();
        for dx in -1..=1i64 {
            for dy in -1..=1i64 {
                for dz in -1..=1i64 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Adjacency::Own => manhattan == 0,
                        Adjacency::Face => manhattan <= 1,
                        Adjacency::Full => true,
                    };
                    if keep {
                        out.push((dx, dy, dz));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NdtParams {
    /// Voxel edge length `v`, meters.
    pub voxel_size: f64,
    pub min_cell_points: usize,
    /// Eigenvalues of a cell covariance are floored at this fraction of the
    /// largest one.
    pub eigen_floor: f64,
    pub adjacency: Adjacency,
    /// Entropy floor for the Rel-NDT cell entropies.
    pub epsilon: f64,
}

impl Default for NdtParams {
    fn default() -> Self {
        Self::with_voxel(0.6)
    }
}

impl NdtParams {
    pub fn with_voxel(voxel_size: f64) -> Self {
        Self {
            voxel_size,
            min_cell_points: 6,
            eigen_floor: 1e-3,
            adjacency: Adjacency::Full,
            epsilon: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(CoralError::InvalidParameter(format!(
                "NDT voxel size must be positive, got {}",
                self.voxel_size
            )));
        }
        if self.min_cell_points < 2 {
            return Err(CoralError::InvalidParameter(
                "NDT cells need at least 2 points".into(),
            ));
        }
        if !(self.eigen_floor > 0.0 && self.eigen_floor <= 1.0) {
            return Err(CoralError::InvalidParameter(format!(
                "NDT eigenvalue floor must lie in (0, 1], got {}",
                self.eigen_floor
            )));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(CoralError::InvalidParameter(format!(
                "NDT epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Gaussian summary of the points falling in one voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct NdtCell {
    pub mean: Point3,
    /// Sample covariance of the voxel's points (divisor `n − 1`).
    pub covariance: Matrix3<f64>,
    pub point_count: usize,
    pub grid_coordinates: GridKey,
    /// Covariance after the eigenvalue floor; this one defines the density.
    pub regularized: Matrix3<f64>,
    inverse: Matrix3<f64>,
    /// `ln` of the Gaussian normalizer `(2π)^{-3/2} det^{-1/2}`.
    log_norm: f64,
    regularized_det: f64,
}

impl NdtCell {
    /// Builds a cell directly from a mean and covariance.
    pub fn from_gaussian(
        mean: Point3,
        covariance: Matrix3<f64>,
        point_count: usize,
        grid_coordinates: GridKey,
        eigen_floor: f64,
    ) -> Option<Self> {
        let eig = covariance.symmetric_eigen();
        let largest = eig.eigenvalues.max();
        if !largest.is_finite() || largest <= 0.0 {
            return None;
        }
        let floor = eigen_floor * largest;
        let clamped = eig.eigenvalues.map(|l| l.max(floor));
        let v = eig.eigenvectors;
        let regularized = v * Matrix3::from_diagonal(&clamped) * v.transpose();
        let inverse = v * Matrix3::from_diagonal(&clamped.map(|l| 1.0 / l)) * v.transpose();
        let det = clamped.product();
        let log_norm = -1.5 * (2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln();
        Some(Self {
            mean,
            covariance,
            point_count,
            grid_coordinates,
            regularized,
            inverse,
            log_norm,
            regularized_det: det,
        })
    }

    /// Normalized Gaussian density of the regularized cell at `p`.
    pub fn density(&self, p: &Point3) -> f64 {
        let d: Vector3<f64> = p - self.mean;
        (self.log_norm - 0.5 * d.dot(&(self.inverse * d))).exp()
    }

    pub fn regularized_determinant(&self) -> f64 {
        self.regularized_det
    }

    /// Differential entropy of the regularized cell covariance.
    pub fn entropy(&self, epsilon: f64) -> f64 {
        point_entropy(self.regularized_det, epsilon).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone)]
pub struct NdtGrid {
    cells: FxHashMap<GridKey, NdtCell>,
    params: NdtParams,
}

impl NdtGrid {
    /// Grid from explicitly supplied cells.
    pub fn from_cells(cells: Vec<NdtCell>, params: NdtParams) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            cells: cells.into_iter().map(|c| (c.grid_coordinates, c)).collect(),
            params,
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.params.voxel_size
    }

    pub fn params(&self) -> &NdtParams {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell(&self, key: &GridKey) -> Option<&NdtCell> {
        self.cells.get(key)
    }

    pub fn cells(&self) -> impl Iterator<Item = &NdtCell> {
        self.cells.values()
    }

    /// Nearest (by mean distance) occupied cell among the adjacency
    /// neighborhood of `p`'s voxel. Ties go to the smaller grid key.
    pub fn nearest_cell(&self, p: &Point3) -> Option<&NdtCell> {
        let (x, y, z) = voxel_key(p, self.params.voxel_size);
        let mut best: Option<(f64, &NdtCell)> = None;
        for (dx, dy, dz) in self.params.adjacency.offsets() {
            if let Some(cell) = self.cells.get(&(x + dx, y + dy, z + dz)) {
                let d = (cell.mean - p).norm_squared();
                let better = match best {
                    None => true,
                    Some((bd, bc)) => {
                        d < bd || (d == bd && cell.grid_coordinates < bc.grid_coordinates)
                    }
                };
                if better {
                    best = Some((d, cell));
                }
            }
        }
        best.map(|(_, c)| c)
    }
}

/// Voxelizes `cloud` and fits one Gaussian per sufficiently populated voxel.
pub fn build_ndt(cloud: &PointCloud, params: &NdtParams) -> Result<NdtGrid> {
    params.validate()?;
    if cloud.is_empty() {
        return Err(CoralError::InvalidInput("cannot build NDT from an empty cloud".into()));
    }
    let mut buckets: FxHashMap<GridKey, Vec<Point3>> = FxHashMap::default();
    for p in cloud.points() {
        buckets.entry(voxel_key(p, params.voxel_size)).or_default().push(*p);
    }
    let mut cells = FxHashMap::default();
    for (key, pts) in buckets {
        if pts.len() < params.min_cell_points {
            continue;
        }
        let summary = sample_covariance(&pts)?;
        let n = pts.len() as f64;
        let mean = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords) / n;
        if let Some(cell) = NdtCell::from_gaussian(
            Point3::from(mean),
            summary.covariance,
            pts.len(),
            key,
            params.eigen_floor,
        ) {
            cells.insert(key, cell);
        }
    }
    Ok(NdtGrid {
        cells,
        params: *params,
    })
}

/// Result of scoring a cloud against an NDT grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NdtScore {
    /// Mean density over overlapping points.
    pub score: f64,
    /// Number of overlapping points.
    pub overlapping: usize,
    /// Mean entropy of the cells used for the overlapping points.
    pub mean_cell_entropy: f64,
    pub no_overlap: bool,
}

/// Per-point `(density, cell entropy)` for points of `b` that overlap the
/// grid, `None` elsewhere. Order follows `b`.
pub fn ndt_assignments(grid: &NdtGrid, b: &PointCloud) -> Vec<Option<(f64, f64)>> {
    let eps = grid.params.epsilon;
    b.points()
        .par_iter()
        .map(|p| grid.nearest_cell(p).map(|c| (c.density(p), c.entropy(eps))))
        .collect()
}

/// Mean likelihood of `b`'s overlapping points under the grid built over `a`.
pub fn ndt_score(grid: &NdtGrid, b: &PointCloud) -> Result<NdtScore> {
    if grid.is_empty() {
        return Err(CoralError::InvalidInput("NDT grid has no cells".into()));
    }
    let assigned = ndt_assignments(grid, b);
    let (mut sum, mut ent, mut n) = (0.0, 0.0, 0usize);
    for (density, entropy) in assigned.into_iter().flatten() {
        sum += density;
        ent += entropy;
        n += 1;
    }
    if n == 0 {
        return Ok(NdtScore {
            score: 0.0,
            overlapping: 0,
            mean_cell_entropy: 0.0,
            no_overlap: true,
        });
    }
    Ok(NdtScore {
        score: sum / n as f64,
        overlapping: n,
        mean_cell_entropy: ent / n as f64,
        no_overlap: false,
    })
}

/// `(x1, x2) = (score, mean cell entropy)`, or `None` without overlap.
pub fn extract_features_relndt(grid: &NdtGrid, b: &PointCloud) -> Result<Option<(f64, f64)>> {
    let s = ndt_score(grid, b)?;
    Ok((!s.no_overlap).then_some((s.score, s.mean_cell_entropy)))
}

/// Covariance summary for reporting.
pub fn cell_eigenvalues(cell: &NdtCell) -> [f64; 3] {
    summarize(cell.covariance, cell.point_count).eigenvalues
}
