//! Statistical background subtraction for roadside LiDAR.
//!
//! A [`Gdg`](gdg::Gdg) (Gaussian Distribution Grid) is built once from a
//! handful of background-only scans. Every 2D grid cell stores the Gaussian
//! of background heights in that cell together with the number of occupied
//! voxels. Incoming scans are then split into background and foreground by
//! [`subtract_background`](filter::subtract_background):
//!
//! 1. voxelize the scan and count occupied voxels per cell,
//! 2. mark points in cells the model has never seen as foreground,
//! 3. keep cells whose occupancy does not exceed the model's (plus a margin)
//!    as background,
//! 4. otherwise test each point's height against the cell Gaussian,
//! 5. drop isolated foreground points with a radius outlier filter.
//!
//! ```
//! use roadside_bgs::prelude::*;
//!
//! let spec = SceneSpec::intersection(7);
//! let scene = generate_scene(&spec).unwrap();
//! let params = FilterParams::default();
//! let gdg = build_gdg(&scene.background_scans, params.voxel_size, params.cell_size, DEFAULT_MIN_SIGMA).unwrap();
//! let result = subtract_background(&scene.test_scan, &gdg, &params).unwrap();
//! assert_eq!(result.len(), scene.test_scan.len());
//! ```

pub mod bench;
pub mod classes;
pub mod error;
pub mod filter;
pub mod gdg;
pub mod metrics;
pub mod pointcloud;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::bench::{bench_sweep, timed_subtract, StageReport};
    pub use crate::filter::{subtract_background, FilterParams, FilterResult};
    pub use crate::gdg::{build_gdg, load_gdg, normal_pdf, save_gdg, Gdg, GdgCell, DEFAULT_MIN_SIGMA};
    pub use crate::metrics::{object_metrics, per_class_metrics, point_metrics, ObjectMetrics, PointMetrics};
    pub use crate::pointcloud::{
        label_points_by_boxes, load_csv, load_pcd, merge_clouds, OrientedBox, Point, PointCloud,
    };
    pub use crate::spatial::{cell_id, radius_count, voxelize, CellId, CellSize, VoxelSize};
    pub use crate::synth::{generate_scene, reference_subtract, Scene, SceneSpec};
}
