use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Point, PointCloud};
use crate::{Error, Result};

/// A yawed 3D box annotation. `dims` are (length, width, height) along the
/// box's own (u, v, w) axes; `yaw` rotates u away from the world x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: [f64; 3],
    pub dims: [f64; 3],
    pub yaw: f64,
    pub class_id: i32,
    pub instance_id: i32,
}

impl OrientedBox {
    pub fn validate(&self) -> Result<()> {
        if !self.center.iter().all(|v| v.is_finite()) {
            return Err(Error::Boxes(format!("instance {}: non-finite center", self.instance_id)));
        }
        if !self.dims.iter().all(|&d| d.is_finite() && d > 0.0) {
            return Err(Error::Boxes(format!(
                "instance {}: dimensions must be positive, got {:?}",
                self.instance_id, self.dims
            )));
        }
        if !(-PI..=PI).contains(&self.yaw) {
            return Err(Error::Boxes(format!(
                "instance {}: yaw {} outside [-pi, pi]",
                self.instance_id, self.yaw
            )));
        }
        Ok(())
    }

    /// Point in box coordinates (u along length, v along width, w up).
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let (s, c) = self.yaw.sin_cos();
        let dx = p[0] - self.center[0];
        let dy = p[1] - self.center[1];
        [c * dx + s * dy, -s * dx + c * dy, p[2] - self.center[2]]
    }

    /// Inside-ness with inclusive boundary.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        let [u, v, w] = self.to_local(p);
        u.abs() <= self.dims[0] / 2.0 && v.abs() <= self.dims[1] / 2.0 && w.abs() <= self.dims[2] / 2.0
    }

    /// Bounding radius around the center.
    fn reach(&self) -> f64 {
        0.5 * (self.dims[0].powi(2) + self.dims[1].powi(2) + self.dims[2].powi(2)).sqrt()
    }

    fn center_dist2(&self, p: [f64; 3]) -> f64 {
        (0..3).map(|k| (p[k] - self.center[k]).powi(2)).sum()
    }
}

pub fn load_boxes(path: impl AsRef<Path>) -> Result<Vec<OrientedBox>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let boxes: Vec<OrientedBox> = serde_json::from_str(&text)?;
    for b in &boxes {
        b.validate()?;
    }
    Ok(boxes)
}

/// Assign each point the labels of the box containing it.
///
/// Points in no box lose any labels they had. Where boxes overlap, the box
/// whose center is nearest wins, then the lowest `instance_id`.
pub fn label_points_by_boxes(cloud: &PointCloud, boxes: &[OrientedBox]) -> Result<PointCloud> {
    let mut seen = HashSet::new();
    for b in boxes {
        b.validate()?;
        if !seen.insert(b.instance_id) {
            return Err(Error::Boxes(format!("duplicate instance_id {}", b.instance_id)));
        }
    }
    let reach: Vec<f64> = boxes.iter().map(OrientedBox::reach).collect();

    let points = cloud
        .iter()
        .map(|p| {
            let xyz = p.xyz();
            let mut best: Option<(f64, &OrientedBox)> = None;
            for (b, &r) in boxes.iter().zip(&reach) {
                let d2 = b.center_dist2(xyz);
                // slack keeps the cull from rejecting exact-corner points
                if d2 > r * r * (1.0 + 1e-9) || !b.contains(xyz) {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bd, bb)) => d2 < bd || (d2 == bd && b.instance_id < bb.instance_id),
                };
                if better {
                    best = Some((d2, b));
                }
            }
            Point {
                class_id: best.map(|(_, b)| b.class_id),
                instance_id: best.map(|(_, b)| b.instance_id),
                ..*p
            }
        })
        .collect();
    Ok(PointCloud {
        points,
        frame_id: cloud.frame_id.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box(id: i32) -> OrientedBox {
        OrientedBox {
            center: [0.0; 3],
            dims: [2.0; 3],
            yaw: 0.0,
            class_id: 3,
            instance_id: id,
        }
    }

    fn label_one(p: [f64; 3], boxes: &[OrientedBox]) -> Option<i32> {
        let c = PointCloud::from_xyz([p]);
        label_points_by_boxes(&c, boxes).unwrap().points[0].instance_id
    }

    #[test]
    fn boundary_is_inclusive() {
        let b = [unit_box(4)];
        assert_eq!(label_one([0.0, 0.0, 0.0], &b), Some(4));
        assert_eq!(label_one([1.0, 0.0, 0.0], &b), Some(4));
        assert_eq!(label_one([1.0001, 0.0, 0.0], &b), None);
        assert_eq!(label_one([1.0, 1.0, 1.0], &b), Some(4));
    }

    #[test]
    fn yaw_rotates_the_footprint() {
        let b = OrientedBox {
            dims: [4.0, 1.0, 1.0],
            yaw: std::f64::consts::FRAC_PI_2,
            ..unit_box(1)
        };
        assert_eq!(label_one([0.0, 1.9, 0.0], &[b]), Some(1));
        assert_eq!(label_one([1.9, 0.0, 0.0], &[b]), None);
    }

    #[test]
    fn overlap_prefers_nearest_center_then_lowest_id() {
        let a = OrientedBox { center: [0.5, 0.0, 0.0], ..unit_box(9) };
        let b = OrientedBox { center: [-0.5, 0.0, 0.0], ..unit_box(2) };
        assert_eq!(label_one([0.4, 0.0, 0.0], &[a, b]), Some(9));
        assert_eq!(label_one([-0.4, 0.0, 0.0], &[a, b]), Some(2));
        assert_eq!(label_one([0.0, 0.0, 0.0], &[a, b]), Some(2));
    }

    #[test]
    fn rejects_duplicates_and_bad_boxes() {
        let c = PointCloud::from_xyz([[0.0; 3]]);
        assert!(label_points_by_boxes(&c, &[unit_box(1), unit_box(1)]).is_err());
        let flat = OrientedBox { dims: [1.0, 0.0, 1.0], ..unit_box(1) };
        assert!(label_points_by_boxes(&c, &[flat]).is_err());
        let spun = OrientedBox { yaw: 4.0, ..unit_box(1) };
        assert!(label_points_by_boxes(&c, &[spun]).is_err());
    }

    #[test]
    fn json_schema_keys() {
        let js = r#"[{"center":[1,2,0.75],"dims":[4.5,1.8,1.5],"yaw":0.3,"class_id":0,"instance_id":7}]"#;
        let b: Vec<OrientedBox> = serde_json::from_str(js).unwrap();
        assert_eq!(b[0].dims, [4.5, 1.8, 1.5]);
        assert_eq!(b[0].instance_id, 7);
    }
}
