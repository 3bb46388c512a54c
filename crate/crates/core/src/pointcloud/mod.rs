//! Point-cloud types, file ingestion and ground-truth labeling.

mod boxes;
mod csv_io;
mod pcd;

pub use boxes::{label_points_by_boxes, load_boxes, OrientedBox};
pub use csv_io::load_csv;
pub use pcd::{load_pcd, read_pcd, save_pcd, write_pcd, PcdEncoding};

use std::path::Path;

use crate::{Error, Result};

/// A LiDAR return in meters.
///
/// `class_id` and `instance_id` carry ground truth when present. A point with
/// no class is ground-truth background.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: Option<f64>,
    pub class_id: Option<i32>,
    pub instance_id: Option<i32>,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Point {
            x,
            y,
            z,
            intensity: None,
            class_id: None,
            instance_id: None,
        }
    }

    pub fn with_intensity(mut self, intensity: f64) -> Self {
        self.intensity = Some(intensity);
        self
    }

    pub fn with_labels(mut self, class_id: i32, instance_id: i32) -> Self {
        self.class_id = Some(class_id);
        self.instance_id = Some(instance_id);
        self
    }

    #[inline]
    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if !self.is_finite() {
            return Err(format!(
                "non-finite coordinate ({}, {}, {})",
                self.x, self.y, self.z
            ));
        }
        if self.instance_id.is_some() && self.class_id.is_none() {
            return Err("instance_id without class_id".into());
        }
        Ok(())
    }
}

/// An ordered sequence of points. Indices are stable for the cloud's lifetime.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: Option<String>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Self {
        PointCloud {
            points,
            frame_id: None,
        }
    }

    pub fn from_xyz(xyz: impl IntoIterator<Item = [f64; 3]>) -> Self {
        Self::new(xyz.into_iter().map(|[x, y, z]| Point::new(x, y, z)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    /// Copy of the points at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            frame_id: self.frame_id.clone(),
        }
    }

    /// Same geometry with all ground-truth labels removed.
    pub fn without_labels(&self) -> PointCloud {
        PointCloud {
            points: self
                .points
                .iter()
                .map(|p| Point {
                    class_id: None,
                    instance_id: None,
                    ..*p
                })
                .collect(),
            frame_id: self.frame_id.clone(),
        }
    }
}

impl FromIterator<Point> for PointCloud {
    fn from_iter<I: IntoIterator<Item = Point>>(iter: I) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// Concatenate clouds in sequence order.
pub fn merge_clouds<'a>(clouds: impl IntoIterator<Item = &'a PointCloud>) -> Result<PointCloud> {
    let mut it = clouds.into_iter().peekable();
    let first = it
        .peek()
        .ok_or_else(|| Error::param("merge_clouds needs at least one cloud"))?;
    let frame_id = first.frame_id.clone();
    let mut points = Vec::new();
    for c in it {
        points.extend_from_slice(&c.points);
    }
    Ok(PointCloud { points, frame_id })
}

/// Load a cloud by extension: `.pcd` or `.csv`.
pub fn load_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pcd") => load_pcd(path),
        Some(e) if e.eq_ignore_ascii_case("csv") => load_csv(path),
        _ => Err(Error::param(format!(
            "{}: unknown point cloud extension (expected .pcd or .csv)",
            path.display()
        ))),
    }
}
