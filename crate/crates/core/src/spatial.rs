//! Voxel downsampling, 2D cell indexing and fixed-radius neighbor counting.
//!
//! All grids use floored division with half-open intervals `[k*s, (k+1)*s)`,
//! so a point on a boundary belongs to the higher-index bin and negative
//! coordinates index correctly.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pointcloud::{Point, PointCloud};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelSize {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl VoxelSize {
    pub fn new(vx: f64, vy: f64, vz: f64) -> Result<Self> {
        if ![vx, vy, vz].iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::param(format!(
                "voxel_size components must be positive and finite, got ({vx}, {vy}, {vz})"
            )));
        }
        Ok(VoxelSize { vx, vy, vz })
    }

    pub fn cube(v: f64) -> Result<Self> {
        Self::new(v, v, v)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.vx, self.vy, self.vz]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellSize {
    pub cx: f64,
    pub cy: f64,
}

impl CellSize {
    pub fn new(cx: f64, cy: f64) -> Result<Self> {
        if ![cx, cy].iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::param(format!(
                "cell_size components must be positive and finite, got ({cx}, {cy})"
            )));
        }
        Ok(CellSize { cx, cy })
    }

    pub fn square(c: f64) -> Result<Self> {
        Self::new(c, c)
    }

    /// Cells may not be finer than the voxels counted inside them.
    pub fn check_against(&self, voxel: &VoxelSize) -> Result<()> {
        if self.cx < voxel.vx || self.cy < voxel.vy {
            return Err(Error::param(format!(
                "cell_size must be bigger than voxel_size: cell ({}, {}) vs voxel ({}, {})",
                self.cx, self.cy, voxel.vx, voxel.vy
            )));
        }
        Ok(())
    }
}

/// Index of a 2D grid cell. Coordinates further than `i32::MAX` cells from
/// the origin saturate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellId {
    pub ix: i32,
    pub iy: i32,
}

#[inline]
pub fn cell_id(x: f64, y: f64, size: CellSize) -> CellId {
    CellId {
        ix: (x / size.cx).floor() as i32,
        iy: (y / size.cy).floor() as i32,
    }
}

pub type VoxelKey = [i64; 3];

#[inline]
pub fn voxel_key(p: [f64; 3], size: VoxelSize) -> VoxelKey {
    [
        (p[0] / size.vx).floor() as i64,
        (p[1] / size.vy).floor() as i64,
        (p[2] / size.vz).floor() as i64,
    ]
}

struct CentroidAcc {
    sum: [f64; 3],
    lo: [f64; 3],
    hi: [f64; 3],
    n: usize,
}

/// One centroid per occupied voxel, in ascending `(ix, iy, iz)` key order.
///
/// Centroids are clamped to the bounding box of their voxel's points so
/// rounding can never move a representative into a neighboring voxel.
pub fn voxelize(cloud: &PointCloud, size: VoxelSize) -> PointCloud {
    let mut acc: HashMap<VoxelKey, CentroidAcc> = HashMap::new();
    for p in cloud.iter() {
        let xyz = p.xyz();
        let a = acc.entry(voxel_key(xyz, size)).or_insert(CentroidAcc {
            sum: [0.0; 3],
            lo: xyz,
            hi: xyz,
            n: 0,
        });
        #[allow(clippy::needless_range_loop)]
        for k in 0..3 {
            a.sum[k] += xyz[k];
            a.lo[k] = a.lo[k].min(xyz[k]);
            a.hi[k] = a.hi[k].max(xyz[k]);
        }
        a.n += 1;
    }
    let mut voxels: Vec<_> = acc.into_iter().collect();
    voxels.sort_unstable_by_key(|(k, _)| *k);
    voxels
        .into_iter()
        .map(|(_, a)| {
            let c = |k: usize| (a.sum[k] / a.n as f64).clamp(a.lo[k], a.hi[k]);
            Point::new(c(0), c(1), c(2))
        })
        .collect()
}

/// Distinct (cell, voxel) pairs touched by `points`.
///
/// This is the low-resolution view shared by model building and filtering:
/// a voxel that straddles a cell border is counted once in every cell where
/// it holds points. When cell edges are whole multiples of voxel edges every
/// voxel lies in exactly one cell and the pair count equals the number of
/// occupied voxels. Output is sorted.
pub fn occupied_cell_voxels(
    points: &[Point],
    voxel: VoxelSize,
    cell: CellSize,
) -> Vec<(CellId, VoxelKey)> {
    // Sorting stays cache-friendly where a hash set of this size would not.
    let mut pairs: Vec<(CellId, VoxelKey)> = points
        .par_iter()
        .map(|p| (cell_id(p.x, p.y, cell), voxel_key(p.xyz(), voxel)))
        .collect();
    pairs.par_sort_unstable();
    pairs.dedup();
    pairs
}

/// Occupied-voxel count per cell.
pub fn count_per_cell(pairs: &[(CellId, VoxelKey)]) -> HashMap<CellId, u32> {
    let mut counts: HashMap<CellId, u32> = HashMap::new();
    for (c, _) in pairs {
        *counts.entry(*c).or_insert(0) += 1;
    }
    counts
}

/// For each point, the number of other points within Euclidean distance
/// `radius` (inclusive).
///
/// # Panics
/// If `radius` is not positive and finite.
pub fn radius_count(points: &[Point], radius: f64) -> Vec<u32> {
    let xyz: Vec<[f64; 3]> = points.iter().map(Point::xyz).collect();
    radius_count_xyz(&xyz, radius)
}

pub(crate) fn radius_count_xyz(xyz: &[[f64; 3]], radius: f64) -> Vec<u32> {
    assert!(radius.is_finite() && radius > 0.0, "radius must be positive, got {radius}");
    if xyz.len() < 2 {
        return vec![0; xyz.len()];
    }
    // Buckets slightly wider than the radius: any pair within `radius` then
    // sits in adjacent buckets even after division rounding.
    let edge = radius * (1.0 + 1e-9);
    let key = |p: &[f64; 3]| -> VoxelKey {
        [
            (p[0] / edge).floor() as i64,
            (p[1] / edge).floor() as i64,
            (p[2] / edge).floor() as i64,
        ]
    };
    let keys: Vec<VoxelKey> = xyz.iter().map(key).collect();
    let mut order: Vec<u32> = (0..xyz.len() as u32).collect();
    order.sort_unstable_by_key(|&i| keys[i as usize]);

    let sorted: Vec<[f64; 3]> = order.iter().map(|&i| xyz[i as usize]).collect();
    let mut ranges: HashMap<VoxelKey, (usize, usize)> = HashMap::new();
    let mut start = 0;
    for i in 1..=order.len() {
        if i == order.len() || keys[order[i] as usize] != keys[order[start] as usize] {
            ranges.insert(keys[order[start] as usize], (start, i));
            start = i;
        }
    }

    let r2 = radius * radius;
    let count_one = |i: usize| -> u32 {
        let p = xyz[i];
        let k = keys[i];
        let mut n = 0u32;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    let Some(&(s, e)) = ranges.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) else {
                        continue;
                    };
                    for j in s..e {
                        let q = sorted[j];
                        let (ex, ey, ez) = (q[0] - p[0], q[1] - p[1], q[2] - p[2]);
                        if ex * ex + ey * ey + ez * ez <= r2 && order[j] as usize != i {
                            n += 1;
                        }
                    }
                }
            }
        }
        n
    };
    (0..xyz.len()).into_par_iter().map(count_one).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: f64) -> VoxelSize {
        VoxelSize::cube(s).unwrap()
    }

    #[test]
    fn voxelize_single_voxel_centroid() {
        let c = PointCloud::from_xyz([[0.01, 0.01, 0.01], [0.05, 0.05, 0.05]]);
        let out = voxelize(&c, v(0.1));
        assert_eq!(out.len(), 1);
        for k in out.points[0].xyz() {
            assert!((k - 0.03).abs() < 1e-15);
        }
    }

    #[test]
    fn voxelize_splits_along_x_and_sorts() {
        let c = PointCloud::from_xyz([[0.15, 0.05, 0.05], [0.05, 0.05, 0.05]]);
        let out = voxelize(&c, v(0.1));
        assert_eq!(out.len(), 2);
        assert_eq!(out.points[0].x, 0.05);
        assert_eq!(out.points[1].x, 0.15);
    }

    #[test]
    fn cell_id_floor_convention() {
        let s = CellSize::square(0.2).unwrap();
        assert_eq!(cell_id(0.35, -0.05, s), CellId { ix: 1, iy: -1 });
        assert_eq!(cell_id(0.0, 0.0, s), CellId { ix: 0, iy: 0 });
        assert_eq!(cell_id(0.2, 0.2, s), CellId { ix: 1, iy: 1 });
    }

    #[test]
    fn radius_count_small_cases() {
        assert_eq!(radius_count(&[Point::new(1.0, 2.0, 3.0)], 0.5), vec![0]);
        let pts = [Point::new(0.0, 0.0, 0.0), Point::new(0.5, 0.0, 0.0)];
        assert_eq!(radius_count(&pts, 0.8), vec![1, 1]);
        // inclusive at exactly the radius
        assert_eq!(radius_count(&pts, 0.5), vec![1, 1]);
        assert_eq!(radius_count(&[], 0.5), Vec::<u32>::new());
    }

    #[test]
    fn duplicates_count_each_other() {
        let pts = [Point::new(1.0, 1.0, 1.0); 4];
        assert_eq!(radius_count(&pts, 0.1), vec![3; 4]);
    }

    #[test]
    fn size_validation() {
        assert!(VoxelSize::new(0.1, 0.0, 0.1).is_err());
        assert!(CellSize::new(f64::NAN, 0.2).is_err());
        let e = CellSize::square(0.1).unwrap().check_against(&v(0.2)).unwrap_err();
        assert!(e.to_string().contains("cell_size must be bigger than voxel_size"));
        assert!(CellSize::square(0.2).unwrap().check_against(&v(0.2)).is_ok());
    }

    #[test]
    fn nested_grids_count_each_voxel_once() {
        let pts: Vec<Point> = (0..50)
            .map(|i| Point::new(i as f64 * 0.037, (i * 7 % 11) as f64 * 0.041, 0.0))
            .collect();
        let pairs = occupied_cell_voxels(&pts, v(0.1), CellSize::square(0.2).unwrap());
        let occupied = voxelize(&PointCloud::new(pts), v(0.1)).len();
        assert_eq!(pairs.len(), occupied);
        let total: u32 = count_per_cell(&pairs).values().sum();
        assert_eq!(total as usize, occupied);
    }
}
