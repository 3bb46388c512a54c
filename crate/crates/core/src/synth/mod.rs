//! Deterministic synthetic scenes and a naive reference pipeline.
//!
//! A scene is a flat ground plane with static structures (walls, poles,
//! signal posts) and a set of labeled objects that only appear in the test
//! scan. Surfaces are sampled as Poisson processes. Box faces are sampled
//! only when they face the sensor origin, unless `full_surface` is set.

mod reference;

pub use reference::reference_subtract;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::classes;
use crate::pointcloud::{OrientedBox, Point, PointCloud};
use crate::{Error, Result};

fn default_return_rate() -> f64 {
    1.0
}

fn default_sensor() -> [f64; 3] {
    [0.0, 0.0, 5.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    /// Ground plane size (x, y) in meters, centered on the origin.
    pub extent: [f64; 2],
    /// Per-point Gaussian jitter applied on every axis of every surface.
    pub ground_noise_sigma: f64,
    /// Background boxes present in every scan.
    #[serde(default)]
    pub static_structures: Vec<OrientedBox>,
    /// Foreground boxes present only in the test scan.
    #[serde(default)]
    pub objects: Vec<OrientedBox>,
    /// Surface sampling density of structures (and objects by default).
    pub points_per_m2: f64,
    pub n_background_scans: usize,
    /// Fraction of `points_per_m2` the ground returns; grazing incidence on
    /// dark asphalt returns far fewer points than upright surfaces.
    #[serde(default = "default_return_rate")]
    pub ground_return_rate: f64,
    /// Object sampling density; defaults to `points_per_m2`.
    #[serde(default)]
    pub object_points_per_m2: Option<f64>,
    #[serde(default = "default_sensor")]
    pub sensor_origin: [f64; 3],
    /// Sample every face except the bottom instead of only sensor-facing ones.
    #[serde(default)]
    pub full_surface: bool,
}

/// Generated clouds. Background scans are unlabeled; the test scan labels
/// object points with their box's class and instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub background_scans: Vec<PointCloud>,
    pub test_scan: PointCloud,
}

/// Box resting on the ground at `(x, y)`.
pub fn ground_box(x: f64, y: f64, dims: [f64; 3], yaw: f64, class_id: i32, instance_id: i32) -> OrientedBox {
    OrientedBox {
        center: [x, y, dims[2] / 2.0],
        dims,
        yaw,
        class_id,
        instance_id,
    }
}

impl SceneSpec {
    /// A 20 x 20 m crossing with five parked/passing cars, a wall, two
    /// light poles and a signal post, seen from a sensor on a 5 m pole.
    pub fn intersection(seed: u64) -> Self {
        let car = |i: i32, x: f64, y: f64, yaw: f64, h: f64| ground_box(x, y, [4.5, 1.8, h], yaw, classes::CAR, i);
        SceneSpec {
            seed,
            extent: [20.0, 20.0],
            ground_noise_sigma: 0.02,
            static_structures: vec![
                ground_box(0.0, 9.2, [14.0, 0.3, 2.0], 0.0, 100, 100),
                ground_box(-8.5, -8.5, [0.3, 0.3, 5.0], 0.0, 101, 101),
                ground_box(8.5, -8.5, [0.3, 0.3, 5.0], 0.0, 102, 102),
                ground_box(6.0, 6.0, [0.4, 0.4, 3.5], 0.0, classes::SIGNAL, 103),
            ],
            objects: vec![
                car(1, -5.0, 3.0, 0.0, 1.50),
                car(2, 4.0, 2.5, 0.0, 1.45),
                car(3, 3.0, -3.0, std::f64::consts::FRAC_PI_2, 1.55),
                car(4, -4.0, -5.0, 0.35, 1.60),
                car(5, 0.5, 6.5, -2.8, 1.50),
            ],
            points_per_m2: 400.0,
            n_background_scans: 10,
            ground_return_rate: 0.0025,
            object_points_per_m2: None,
            sensor_origin: default_sensor(),
            full_surface: false,
        }
    }

    /// A plain ground plane of the given size with a few pedestrians, used
    /// for size sweeps. The ground returns every sample.
    pub fn uniform(seed: u64) -> Self {
        SceneSpec {
            seed,
            extent: [30.0, 30.0],
            ground_noise_sigma: 0.02,
            static_structures: vec![],
            objects: vec![
                ground_box(3.0, 4.0, [0.6, 0.6, 1.7], 0.0, classes::PEDESTRIAN, 1),
                ground_box(-6.0, 2.0, [0.6, 0.6, 1.7], 0.0, classes::PEDESTRIAN, 2),
                ground_box(5.0, -7.0, [0.6, 0.6, 1.7], 0.0, classes::PEDESTRIAN, 3),
            ],
            points_per_m2: 40.0,
            n_background_scans: 10,
            ground_return_rate: 1.0,
            object_points_per_m2: Some(200.0),
            sensor_origin: default_sensor(),
            full_surface: false,
        }
    }

    /// `n` pedestrians packed into one 3 x 3 m patch: foreground density, and
    /// with it outlier-removal work per point, grows with `n`.
    pub fn crowd(seed: u64, n: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c0_ffee);
        let objects = (0..n)
            .map(|i| {
                let x = rng.random_range(-1.5..1.5);
                let y = rng.random_range(-1.5..1.5);
                ground_box(x, y, [0.5, 0.5, 1.7], 0.0, classes::PEDESTRIAN, i as i32 + 1)
            })
            .collect();
        SceneSpec {
            objects,
            ..SceneSpec::uniform(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::param(format!("scene spec: {m}")));
        if !self.extent.iter().all(|e| e.is_finite() && *e > 0.0) {
            return bad(format!("extent must be positive, got {:?}", self.extent));
        }
        if !(self.points_per_m2.is_finite() && self.points_per_m2 > 0.0) {
            return bad(format!("points_per_m2 must be positive, got {}", self.points_per_m2));
        }
        if let Some(d) = self.object_points_per_m2 {
            if !(d.is_finite() && d > 0.0) {
                return bad(format!("object_points_per_m2 must be positive, got {d}"));
            }
        }
        if !(self.ground_return_rate > 0.0 && self.ground_return_rate <= 1.0) {
            return bad(format!("ground_return_rate must lie in (0, 1], got {}", self.ground_return_rate));
        }
        if !(self.ground_noise_sigma.is_finite() && self.ground_noise_sigma >= 0.0) {
            return bad(format!("ground_noise_sigma must be non-negative, got {}", self.ground_noise_sigma));
        }
        if self.n_background_scans == 0 {
            return bad("n_background_scans must be at least 1".into());
        }
        if !self.sensor_origin.iter().all(|v| v.is_finite()) {
            return bad("sensor_origin must be finite".into());
        }
        let mut ids = std::collections::HashSet::new();
        for b in self.static_structures.iter().chain(&self.objects) {
            b.validate()?;
        }
        for b in &self.objects {
            if !ids.insert(b.instance_id) {
                return bad(format!("duplicate object instance_id {}", b.instance_id));
            }
        }
        Ok(())
    }

    fn object_density(&self) -> f64 {
        self.object_points_per_m2.unwrap_or(self.points_per_m2)
    }

    fn ground_density(&self) -> f64 {
        self.points_per_m2 * self.ground_return_rate
    }

    /// Expected number of labeled points in the test scan.
    pub fn expected_object_points(&self) -> f64 {
        let d = self.object_density();
        self.objects
            .iter()
            .flat_map(|b| self.sampled_faces(b))
            .map(|f| f.area() * d)
            .sum()
    }

    /// Expected size of the test scan.
    pub fn expected_test_points(&self) -> f64 {
        let ground = self.extent[0] * self.extent[1] * self.ground_density();
        let structures: f64 = self
            .static_structures
            .iter()
            .flat_map(|b| self.sampled_faces(b))
            .map(|f| f.area() * self.points_per_m2)
            .sum();
        ground + structures + self.expected_object_points()
    }

    fn sampled_faces(&self, b: &OrientedBox) -> Vec<Face> {
        Face::of_box(b)
            .into_iter()
            .filter(|f| f.normal_local != [0.0, 0.0, -1.0])
            .filter(|f| self.full_surface || f.faces(b, self.sensor_origin))
            .collect()
    }
}

/// One rectangular side of a box, in box-local coordinates.
#[derive(Debug, Clone, Copy)]
struct Face {
    center_local: [f64; 3],
    normal_local: [f64; 3],
    /// Half extents along the two in-plane local axes.
    axes: [(usize, f64); 2],
}

impl Face {
    fn of_box(b: &OrientedBox) -> [Face; 6] {
        let h = [b.dims[0] / 2.0, b.dims[1] / 2.0, b.dims[2] / 2.0];
        let face = |axis: usize, sign: f64| {
            let mut c = [0.0; 3];
            c[axis] = sign * h[axis];
            let mut n = [0.0; 3];
            n[axis] = sign;
            let (a, bb) = ((axis + 1) % 3, (axis + 2) % 3);
            Face {
                center_local: c,
                normal_local: n,
                axes: [(a, h[a]), (bb, h[bb])],
            }
        };
        [
            face(0, 1.0),
            face(0, -1.0),
            face(1, 1.0),
            face(1, -1.0),
            face(2, 1.0),
            face(2, -1.0),
        ]
    }

    fn area(&self) -> f64 {
        4.0 * self.axes[0].1 * self.axes[1].1
    }

    fn faces(&self, b: &OrientedBox, sensor: [f64; 3]) -> bool {
        let c = to_world(b, self.center_local);
        let n = rotate(b.yaw, self.normal_local);
        (0..3).map(|k| n[k] * (sensor[k] - c[k])).sum::<f64>() > 0.0
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let mut p = self.center_local;
        for (axis, half) in self.axes {
            p[axis] += rng.random_range(-half..=half);
        }
        p
    }
}

fn rotate(yaw: f64, v: [f64; 3]) -> [f64; 3] {
    let (s, c) = yaw.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

fn to_world(b: &OrientedBox, local: [f64; 3]) -> [f64; 3] {
    let r = rotate(b.yaw, local);
    [r[0] + b.center[0], r[1] + b.center[1], r[2] + b.center[2]]
}

fn footprint_contains(b: &OrientedBox, x: f64, y: f64) -> bool {
    let [u, v, _] = b.to_local([x, y, b.center[2]]);
    u.abs() <= b.dims[0] / 2.0 && v.abs() <= b.dims[1] / 2.0
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as usize
}

struct Sampler<'a> {
    spec: &'a SceneSpec,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
}

impl Sampler<'_> {
    fn jitter(&mut self) -> f64 {
        match &self.noise {
            Some(n) => n.sample(&mut self.rng),
            None => 0.0,
        }
    }

    fn ground(&mut self, out: &mut Vec<Point>, holes: &[&OrientedBox], density_scale: f64) {
        let [ex, ey] = self.spec.extent;
        let n = poisson(&mut self.rng, ex * ey * self.spec.ground_density() * density_scale);
        for _ in 0..n {
            let x = self.rng.random_range(-ex / 2.0..ex / 2.0);
            let y = self.rng.random_range(-ey / 2.0..ey / 2.0);
            let z = self.jitter();
            if holes.iter().any(|b| footprint_contains(b, x, y)) {
                continue;
            }
            out.push(Point::new(x, y, z));
        }
    }

    fn surfaces(&mut self, out: &mut Vec<Point>, b: &OrientedBox, density: f64, labels: Option<(i32, i32)>) {
        for face in self.spec.sampled_faces(b) {
            let n = poisson(&mut self.rng, face.area() * density);
            for _ in 0..n {
                let w = to_world(b, face.sample(&mut self.rng));
                let p = Point::new(w[0] + self.jitter(), w[1] + self.jitter(), w[2] + self.jitter());
                out.push(match labels {
                    Some((c, i)) => p.with_labels(c, i),
                    None => p,
                });
            }
        }
    }
}

fn sampler(spec: &SceneSpec, stream: u64) -> Sampler<'_> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(stream);
    let noise = (spec.ground_noise_sigma > 0.0)
        .then(|| Normal::new(0.0, spec.ground_noise_sigma).expect("validated sigma"));
    Sampler { spec, rng, noise }
}

fn background_scan(spec: &SceneSpec, index: usize) -> PointCloud {
    let mut s = sampler(spec, index as u64);
    let mut pts = Vec::new();
    let holes: Vec<&OrientedBox> = spec.static_structures.iter().collect();
    s.ground(&mut pts, &holes, 1.0);
    for b in &spec.static_structures {
        s.surfaces(&mut pts, b, spec.points_per_m2, None);
    }
    PointCloud::new(pts)
}

/// Test scan with every sampling density multiplied by `density_scale`.
pub(crate) fn test_scan_scaled(spec: &SceneSpec, density_scale: f64) -> PointCloud {
    let mut s = sampler(spec, u64::MAX);
    let mut pts = Vec::new();
    let holes: Vec<&OrientedBox> = spec.static_structures.iter().chain(&spec.objects).collect();
    s.ground(&mut pts, &holes, density_scale);
    for b in &spec.static_structures {
        s.surfaces(&mut pts, b, spec.points_per_m2 * density_scale, None);
    }
    for b in &spec.objects {
        s.surfaces(&mut pts, b, spec.object_density() * density_scale, Some((b.class_id, b.instance_id)));
    }
    PointCloud::new(pts)
}

/// Materialize the background scans and the labeled test scan of `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    Ok(Scene {
        background_scans: (0..spec.n_background_scans).map(|i| background_scan(spec, i)).collect(),
        test_scan: test_scan_scaled(spec, 1.0),
    })
}
