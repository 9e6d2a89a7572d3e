//! Exact fixed-radius neighbor search over an immutable uniform hash grid.

use rustc_hash::FxHashMap;

use crate::cloud::{voxel_key, Point3};
use crate::error::{CoralError, Result};

type CellKey = (i64, i64, i64);

/// Immutable snapshot of a point set bucketed into cubic cells.
///
/// Queries are exact: a point is reported iff its Euclidean distance to the
/// query is `<= r`. The cell size only affects speed. Results come back in a
/// fixed order (cell-major, then original index), independent of threads.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    cell: f64,
    points: Vec<Point3>,
    /// Original indices, grouped by cell.
    order: Vec<u32>,
    cells: FxHashMap<CellKey, (u32, u32)>,
}

impl SpatialIndex {
    pub fn build(points: &[Point3], cell: f64) -> Result<Self> {
        if !(cell > 0.0 && cell.is_finite()) {
            return Err(CoralError::InvalidParameter(format!(
                "index cell size must be positive, got {cell}"
            )));
        }
        if points.len() > u32::MAX as usize {
            return Err(CoralError::InvalidInput("too many points to index".into()));
        }
        let mut keyed: Vec<(CellKey, u32)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (voxel_key(p, cell), i as u32))
            .collect();
        keyed.sort_unstable();
        let mut cells = FxHashMap::default();
        let mut start = 0usize;
        while start < keyed.len() {
            let key = keyed[start].0;
            let mut end = start + 1;
            while end < keyed.len() && keyed[end].0 == key {
                end += 1;
            }
            cells.insert(key, (start as u32, end as u32));
            start = end;
        }
        Ok(Self {
            cell,
            points: points.to_vec(),
            order: keyed.into_iter().map(|(_, i)| i).collect(),
            cells,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn cell_size(&self) -> f64 {
        self.cell
    }

    /// Calls `visit(index, point)` for every point within `r` of `query`.
    /// Stops early when `visit` returns `false`.
    pub fn visit_within<F>(&self, query: &Point3, r: f64, mut visit: F)
    where
        F: FnMut(usize, &Point3) -> bool,
    {
        if self.points.is_empty() || r.is_nan() || r < 0.0 {
            return;
        }
        let r2 = r * r;
        let lo = voxel_key(&(query - nalgebra::Vector3::repeat(r)), self.cell);
        let hi = voxel_key(&(query + nalgebra::Vector3::repeat(r)), self.cell);
        let span = |a: i64, b: i64| (b - a + 1).max(0) as u128;
        let box_cells = span(lo.0, hi.0) * span(lo.1, hi.1) * span(lo.2, hi.2);

        let mut scan = |start: u32, end: u32| -> bool {
            for &i in &self.order[start as usize..end as usize] {
                let p = &self.points[i as usize];
                if (p - query).norm_squared() <= r2 && !visit(i as usize, p) {
                    return false;
                }
            }
            true
        };

        if box_cells > self.cells.len() as u128 {
            // Query box larger than the occupied set: walk occupied cells in
            // sorted order instead.
            let mut keys: Vec<(&CellKey, &(u32, u32))> = self
                .cells
                .iter()
                .filter(|(k, _)| {
                    (lo.0..=hi.0).contains(&k.0)
                        && (lo.1..=hi.1).contains(&k.1)
                        && (lo.2..=hi.2).contains(&k.2)
                })
                .collect();
            keys.sort_unstable_by_key(|(k, _)| **k);
            for (_, &(s, e)) in keys {
                if !scan(s, e) {
                    return;
                }
            }
            return;
        }

        for x in lo.0..=hi.0 {
            for y in lo.1..=hi.1 {
                for z in lo.2..=hi.2 {
                    if let Some(&(s, e)) = self.cells.get(&(x, y, z)) {
                        if !scan(s, e) {
                            return;
                        }
                    }
                }
            }
        }
    }

    /// Indices of all points within `r` of `query`, the query itself included
    /// when it is part of the indexed set.
    pub fn radius_neighbors(&self, query: &Point3, r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit_within(query, r, |i, _| {
            out.push(i);
            true
        });
        out
    }

    pub fn any_within(&self, query: &Point3, r: f64) -> bool {
        let mut found = false;
        self.visit_within(query, r, |_, _| {
            found = true;
            false
        });
        found
    }
}
