//! Background subtraction of a single scan against a [`Gdg`].
//!
//! The pipeline runs in four stages: voxelize, count occupied voxels per
//! cell, classify each point, then radius outlier removal over the points
//! proposed as foreground. For a point in cell `c`:
//!
//! * `c` absent from the grid: foreground candidate;
//! * scan occupancy of `c` > grid occupancy + `th_points`: background iff
//!   `pdf(z) > th_density * max_density`, otherwise foreground candidate;
//! * otherwise background.
//!
//! Candidates with fewer than `neighbors` other candidates within `radius`
//! are dropped by the outlier filter and reported as background.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gdg::{pdf, Gdg};
use crate::pointcloud::{Point, PointCloud};
use crate::spatial::{
    cell_id, count_per_cell, occupied_cell_voxels, radius_count_xyz, CellId, CellSize, VoxelKey,
    VoxelSize,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Must equal the grid's voxel size.
    pub voxel_size: VoxelSize,
    /// Must equal the grid's cell size.
    pub cell_size: CellSize,
    /// Extra occupied voxels a cell may show over the model before its
    /// points are height-tested.
    pub th_points: u32,
    /// Fraction of the cell's peak density below which a height is foreground.
    pub th_density: f64,
    /// Minimum neighbor count for a foreground point to survive outlier removal.
    pub neighbors: u32,
    /// Outlier-removal search radius in meters.
    pub radius: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            voxel_size: VoxelSize { vx: 0.1, vy: 0.1, vz: 0.1 },
            cell_size: CellSize { cx: 0.2, cy: 0.2 },
            th_points: 2,
            th_density: 0.3,
            neighbors: 4,
            radius: 0.8,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let v = self.voxel_size;
        VoxelSize::new(v.vx, v.vy, v.vz)?;
        CellSize::new(self.cell_size.cx, self.cell_size.cy)?;
        self.cell_size.check_against(&v)?;
        if !(self.th_density > 0.0 && self.th_density < 1.0) {
            return Err(Error::param(format!("th_density must lie in (0, 1), got {}", self.th_density)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::param(format!("radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }

    fn check_against(&self, gdg: &Gdg) -> Result<()> {
        self.validate()?;
        if self.voxel_size != gdg.voxel_size() || self.cell_size != gdg.cell_size() {
            return Err(Error::param(format!(
                "voxel_size/cell_size must match the GDG: params {:?}/{:?}, GDG {:?}/{:?}",
                self.voxel_size,
                self.cell_size,
                gdg.voxel_size(),
                gdg.cell_size()
            )));
        }
        Ok(())
    }
}

/// Three disjoint, sorted index sets that together cover the input scan.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterResult {
    pub background_indices: Vec<usize>,
    pub foreground_indices: Vec<usize>,
    /// Proposed as foreground, then removed as isolated by outlier removal.
    pub ror_removed_indices: Vec<usize>,
}

impl FilterResult {
    /// Number of classified points.
    pub fn len(&self) -> usize {
        self.background_indices.len() + self.foreground_indices.len() + self.ror_removed_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-point predicted-foreground flags. Outlier-removed points count as
    /// background.
    pub fn foreground_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for &i in &self.foreground_indices {
            mask[i] = true;
        }
        mask
    }

    /// Points proposed as foreground before outlier removal.
    pub fn candidate_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .foreground_indices
            .iter()
            .chain(&self.ror_removed_indices)
            .copied()
            .collect();
        v.sort_unstable();
        v
    }
}

/// Split `cloud` into background and foreground against `gdg`.
pub fn subtract_background(cloud: &PointCloud, gdg: &Gdg, params: &FilterParams) -> Result<FilterResult> {
    check_inputs(cloud, gdg, params)?;
    let pairs = stage_voxelize(&cloud.points, params);
    let counts = stage_count(&pairs);
    let candidate = stage_classify(&cloud.points, gdg, &counts, params);
    Ok(stage_ror(&cloud.points, &candidate, params))
}

pub(crate) fn check_inputs(cloud: &PointCloud, gdg: &Gdg, params: &FilterParams) -> Result<()> {
    params.check_against(gdg)?;
    if cloud.is_empty() {
        return Err(Error::data("input cloud is empty"));
    }
    if let Some(i) = cloud.iter().position(|p| !p.is_finite()) {
        return Err(Error::data(format!("point {i} has a non-finite coordinate")));
    }
    Ok(())
}

pub(crate) fn stage_voxelize(points: &[Point], params: &FilterParams) -> Vec<(CellId, VoxelKey)> {
    occupied_cell_voxels(points, params.voxel_size, params.cell_size)
}

pub(crate) fn stage_count(pairs: &[(CellId, VoxelKey)]) -> HashMap<CellId, u32> {
    count_per_cell(pairs)
}

/// `true` marks a foreground candidate.
pub(crate) fn stage_classify(
    points: &[Point],
    gdg: &Gdg,
    counts: &HashMap<CellId, u32>,
    params: &FilterParams,
) -> Vec<bool> {
    let th_points = params.th_points as u64;
    let th_density = params.th_density;
    let cell_size = params.cell_size;
    points
        .par_iter()
        .map(|p| {
            let id = cell_id(p.x, p.y, cell_size);
            let Some(cell) = gdg.get(id) else {
                return true;
            };
            // every point's own cell is occupied in the scan
            let scan = counts[&id] as u64;
            if scan > cell.num_points as u64 + th_points {
                let density = pdf(p.z, cell.mu, cell.sigma);
                // written as a negated `>` so a NaN density is foreground
                #[allow(clippy::neg_cmp_op_on_partial_ord)]
                let keep = !(density > cell.max_density * th_density);
                keep
            } else {
                false
            }
        })
        .collect()
}

pub(crate) fn stage_ror(points: &[Point], candidate: &[bool], params: &FilterParams) -> FilterResult {
    let mut result = FilterResult::default();
    let mut cand = Vec::new();
    for (i, &c) in candidate.iter().enumerate() {
        if c {
            cand.push(i);
        } else {
            result.background_indices.push(i);
        }
    }
    if params.neighbors == 0 {
        result.foreground_indices = cand;
        return result;
    }
    let xyz: Vec<[f64; 3]> = cand.iter().map(|&i| points[i].xyz()).collect();
    let counts = radius_count_xyz(&xyz, params.radius);
    for (&i, &n) in cand.iter().zip(&counts) {
        if n >= params.neighbors {
            result.foreground_indices.push(i);
        } else {
            result.ror_removed_indices.push(i);
        }
    }
    result
}
