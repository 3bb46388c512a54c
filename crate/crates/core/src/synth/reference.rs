//! Direct, unoptimized transcription of the background-subtraction pipeline.
//!
//! Nothing here reuses the production kernels: cell and voxel indexing,
//! occupancy counting, the Gaussian density and neighbor search are written
//! out again with sorting and plain loops. Floating-point expressions keep
//! the same operation order as the production path so both sides see
//! bit-identical densities and distances.

use crate::filter::{FilterParams, FilterResult};
use crate::gdg::Gdg;
use crate::pointcloud::PointCloud;
use crate::spatial::CellId;
use crate::{Error, Result};

type Cell = (i64, i64);

fn cell_of(x: f64, y: f64, p: &FilterParams) -> Cell {
    ((x / p.cell_size.cx).floor() as i64, (y / p.cell_size.cy).floor() as i64)
}

fn voxel_of(x: f64, y: f64, z: f64, p: &FilterParams) -> (i64, i64, i64) {
    let v = p.voxel_size;
    ((x / v.vx).floor() as i64, (y / v.vy).floor() as i64, (z / v.vz).floor() as i64)
}

fn gaussian(z: f64, mu: f64, sigma: f64) -> f64 {
    let root_two_pi = ROOT_TWO_PI;
    let t = (z - mu) / sigma;
    (-0.5 * t * t).exp() / (sigma * root_two_pi)
}

/// Same contract as [`subtract_background`](crate::filter::subtract_background).
pub fn reference_subtract(cloud: &PointCloud, gdg: &Gdg, params: &FilterParams) -> Result<FilterResult> {
    params.validate()?;
    if params.voxel_size != gdg.voxel_size() || params.cell_size != gdg.cell_size() {
        return Err(Error::param("voxel_size/cell_size must match the GDG"));
    }
    if cloud.is_empty() {
        return Err(Error::data("input cloud is empty"));
    }
    for (i, p) in cloud.points.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
            return Err(Error::data(format!("point {i} has a non-finite coordinate")));
        }
    }

    // low-resolution view: distinct (cell, voxel) pairs
    let mut pairs: Vec<(Cell, (i64, i64, i64))> = Vec::with_capacity(cloud.len());
    for p in &cloud.points {
        pairs.push((cell_of(p.x, p.y, params), voxel_of(p.x, p.y, p.z, params)));
    }
    pairs.sort();
    pairs.dedup();

    // point counting
    let mut point_count: Vec<(Cell, u64)> = Vec::new();
    for (cell, _) in &pairs {
        match point_count.last_mut() {
            Some((c, n)) if c == cell => *n += 1,
            _ => point_count.push((*cell, 1)),
        }
    }

    // classification
    let mut is_candidate = vec![false; cloud.len()];
    for (i, p) in cloud.points.iter().enumerate() {
        let cell = cell_of(p.x, p.y, params);
        let model = match (i32::try_from(cell.0), i32::try_from(cell.1)) {
            (Ok(ix), Ok(iy)) => gdg.get(CellId { ix, iy }),
            _ => None,
        };
        let background = match model {
            None => false,
            Some(m) => {
                let k = point_count.binary_search_by(|(c, _)| c.cmp(&cell)).unwrap();
                let count = point_count[k].1;
                if count > m.num_points as u64 + params.th_points as u64 {
                    let dens = gaussian(p.z, m.mu, m.sigma);
                    dens > m.max_density * params.th_density
                } else {
                    true
                }
            }
        };
        is_candidate[i] = !background;
    }

    // radius outlier removal, all pairs
    let candidates: Vec<usize> = (0..cloud.len()).filter(|&i| is_candidate[i]).collect();
    let r2 = params.radius * params.radius;
    let mut result = FilterResult::default();
    #[allow(clippy::needless_range_loop)]
    for i in 0..cloud.len() {
        if !is_candidate[i] {
            result.background_indices.push(i);
        }
    }
    for &i in &candidates {
        let a = &cloud.points[i];
        let mut neighbors = 0u32;
        for &j in &candidates {
            if neighbors >= params.neighbors {
                break;
            }
            if j == i {
                continue;
            }
            let b = &cloud.points[j];
            let (dx, dy, dz) = (b.x - a.x, b.y - a.y, b.z - a.z);
            if dx * dx + dy * dy + dz * dz <= r2 {
                neighbors += 1;
            }
        }
        if neighbors >= params.neighbors {
            result.foreground_indices.push(i);
        } else {
            result.ror_removed_indices.push(i);
        }
    }
    Ok(result)
}

// sqrt(2 pi) to 30 digits; the nearest double, not sqrt of the rounded 2 pi.
const ROOT_TWO_PI: f64 = 2.506_628_274_631_000_502_415_765_284_81;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_constant_matches_production() {
        assert_eq!(ROOT_TWO_PI.to_bits(), crate::gdg::SQRT_TAU.to_bits());
        let computed = std::f64::consts::TAU.sqrt().to_bits();
        assert!(computed.abs_diff(ROOT_TWO_PI.to_bits()) <= 1);
    }
}
