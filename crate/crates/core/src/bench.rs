//! Per-stage timing of the background-subtraction pipeline.
//!
//! Sizes follow the usual decomposition: N input points, M occupied
//! (cell, voxel) pairs after voxelization, K foreground candidates entering
//! outlier removal. Voxelization and classification are linear in N,
//! counting is linear in M, and outlier removal grows with K times the local
//! candidate density, i.e. up to K^2 when candidates crowd together.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filter::{self, FilterParams, FilterResult};
use crate::gdg::{build_gdg, Gdg, DEFAULT_MIN_SIGMA};
use crate::pointcloud::PointCloud;
use crate::synth::{generate_scene, test_scan_scaled, SceneSpec};
use crate::{Error, Result};

/// Stage names in pipeline order, as used in CSV output.
pub const STAGES: [&str; 5] = ["voxelize", "count", "filter", "ror", "total"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub n_input: usize,
    pub m_voxelized: usize,
    pub k_foreground: usize,
    /// milliseconds
    pub t_voxelize: f64,
    pub t_count: f64,
    pub t_filter: f64,
    pub t_ror: f64,
    pub t_total: f64,
}

impl StageReport {
    pub fn stage_ms(&self) -> [f64; 5] {
        [self.t_voxelize, self.t_count, self.t_filter, self.t_ror, self.t_total]
    }

    /// `(size, stage, ms)` rows, one per entry of [`STAGES`].
    pub fn csv_rows(&self) -> impl Iterator<Item = (usize, &'static str, f64)> + '_ {
        STAGES
            .iter()
            .zip(self.stage_ms())
            .map(move |(s, ms)| (self.n_input, *s, ms))
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// [`subtract_background`](filter::subtract_background) with stage timings.
pub fn timed_subtract(cloud: &PointCloud, gdg: &Gdg, params: &FilterParams) -> Result<(FilterResult, StageReport)> {
    filter::check_inputs(cloud, gdg, params)?;
    let start = Instant::now();

    let t = Instant::now();
    let pairs = filter::stage_voxelize(&cloud.points, params);
    let t_voxelize = ms_since(t);

    let t = Instant::now();
    let counts = filter::stage_count(&pairs);
    let t_count = ms_since(t);

    let t = Instant::now();
    let candidate = filter::stage_classify(&cloud.points, gdg, &counts, params);
    let t_filter = ms_since(t);
    let k_foreground = candidate.iter().filter(|&&c| c).count();

    let t = Instant::now();
    let result = filter::stage_ror(&cloud.points, &candidate, params);
    let t_ror = ms_since(t);

    let report = StageReport {
        n_input: cloud.len(),
        m_voxelized: pairs.len(),
        k_foreground,
        t_voxelize,
        t_count,
        t_filter,
        t_ror,
        t_total: ms_since(start),
    };
    Ok((result, report))
}

/// The test scan of `spec`, resampled to exactly `size` points.
pub fn scan_of_size(spec: &SceneSpec, size: usize) -> Result<PointCloud> {
    spec.validate()?;
    let expected = spec.expected_test_points();
    let mut scale = 1.1 * size as f64 / expected;
    for _ in 0..16 {
        let cloud = test_scan_scaled(spec, scale);
        if cloud.len() >= size {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ size as u64);
            let mut keep = rand::seq::index::sample(&mut rng, cloud.len(), size).into_vec();
            keep.sort_unstable();
            return Ok(cloud.select(&keep));
        }
        scale *= 1.25;
    }
    Err(Error::param(format!("cannot sample {size} points from the scene")))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median-of-repetitions stage reports for scans of each requested size,
/// all filtered against one grid built from the scene's background scans.
pub fn bench_sweep(
    scene_sizes: &[usize],
    repetitions: usize,
    spec: &SceneSpec,
    params: &FilterParams,
) -> Result<Vec<StageReport>> {
    if scene_sizes.is_empty() {
        return Err(Error::param("bench_sweep needs at least one scene size"));
    }
    if repetitions < 3 {
        return Err(Error::param(format!("bench_sweep needs at least 3 repetitions, got {repetitions}")));
    }
    params.validate()?;
    let scene = generate_scene(spec)?;
    let gdg = build_gdg(&scene.background_scans, params.voxel_size, params.cell_size, DEFAULT_MIN_SIGMA)?;

    scene_sizes
        .iter()
        .map(|&size| {
            let cloud = scan_of_size(spec, size)?;
            let runs = (0..repetitions)
                .map(|_| timed_subtract(&cloud, &gdg, params).map(|(_, r)| r))
                .collect::<Result<Vec<_>>>()?;
            let pick = |f: fn(&StageReport) -> f64| median(runs.iter().map(f).collect());
            Ok(StageReport {
                t_voxelize: pick(|r| r.t_voxelize),
                t_count: pick(|r| r.t_count),
                t_filter: pick(|r| r.t_filter),
                t_ror: pick(|r| r.t_ror),
                t_total: pick(|r| r.t_total),
                ..runs[0]
            })
        })
        .collect()
}
