//! Shared helpers for the integration suites: a double-double Gaussian
//! oracle, random scene and parameter generators, and brute-force metric
//! recounts. Nothing here calls into the production kernels it checks.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadside_bgs::prelude::*;
use roadside_bgs::synth::ground_box;

// ---------------------------------------------------------------- double-double

/// Unevaluated sum `hi + lo` with |lo| <= ulp(hi)/2.
#[derive(Debug, Clone, Copy)]
pub struct Dd(pub f64, pub f64);

fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd(s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    Dd(s, b - (s - a))
}

fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd(p, a.mul_add(b, -p))
}

impl Dd {
    pub fn from(x: f64) -> Dd {
        Dd(x, 0.0)
    }
    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.0, o.0);
        let t = two_sum(self.1, o.1);
        let s = quick_two_sum(s.0, s.1 + t.0);
        quick_two_sum(s.0, s.1 + t.1)
    }
    pub fn neg(self) -> Dd {
        Dd(-self.0, -self.1)
    }
    pub fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }
    pub fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.0, o.0);
        quick_two_sum(p.0, p.1 + (self.0 * o.1 + self.1 * o.0))
    }
    pub fn mul_f(self, f: f64) -> Dd {
        let p = two_prod(self.0, f);
        quick_two_sum(p.0, p.1 + self.1 * f)
    }
    pub fn div(self, o: Dd) -> Dd {
        let q1 = self.0 / o.0;
        let r = self.sub(o.mul_f(q1));
        let q2 = r.0 / o.0;
        let r = r.sub(o.mul_f(q2));
        let q3 = r.0 / o.0;
        quick_two_sum(q1, q2).add(Dd::from(q3))
    }
    pub fn to_f64(self) -> f64 {
        self.0 + self.1
    }
}

const LN2: Dd = Dd(std::f64::consts::LN_2, 2.3190468138462996e-17);
const SQRT_2PI: Dd = Dd(2.5066282746310007, -1.8328579980459167e-16);

/// exp by reduction to |r| <= ln2/1024 and a Taylor series.
pub fn dd_exp(a: Dd) -> Dd {
    let k = (a.0 / LN2.0).round();
    let r = a.sub(LN2.mul_f(k)).mul_f(1.0 / 512.0);
    let mut term = Dd::from(1.0);
    let mut sum = Dd::from(1.0);
    for i in 1..=20 {
        term = term.mul(r).mul_f(1.0 / i as f64);
        sum = sum.add(term);
    }
    for _ in 0..9 {
        sum = sum.mul(sum);
    }
    let scale = 2f64.powi(k as i32);
    Dd(sum.0 * scale, sum.1 * scale)
}

/// Normal density in double-double arithmetic.
pub fn dd_normal_pdf(z: f64, mu: f64, sigma: f64) -> f64 {
    let t = two_sum(z, -mu).div(Dd::from(sigma));
    let e = dd_exp(t.mul(t).mul_f(-0.5));
    e.div(SQRT_2PI.mul_f(sigma)).to_f64()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs()
    }
}

// ---------------------------------------------------------------- random inputs

/// Random valid filter parameters.
pub fn random_params(rng: &mut ChaCha8Rng) -> FilterParams {
    let vx: f64 = rng.random_range(0.05..0.3);
    let vy: f64 = rng.random_range(0.05..0.3);
    let vz = rng.random_range(0.05..0.3);
    let cx = rng.random_range(vx.max(0.1)..1.0);
    let cy = rng.random_range(vy.max(0.1)..1.0);
    FilterParams {
        voxel_size: VoxelSize::new(vx, vy, vz).unwrap(),
        cell_size: CellSize::new(cx, cy).unwrap(),
        th_points: rng.random_range(0..6),
        th_density: rng.random_range(0.02..0.98),
        neighbors: rng.random_range(0..9),
        radius: rng.random_range(0.1..1.5),
    }
}

fn random_boxes(rng: &mut ChaCha8Rng, extent: [f64; 2], n: usize, first_id: i32, class: Option<i32>) -> Vec<OrientedBox> {
    let [ex, ey] = extent;
    (0..n)
        .map(|i| {
            let dims = [
                rng.random_range(0.3..5.0),
                rng.random_range(0.3..3.0),
                rng.random_range(0.5..3.0),
            ];
            let x = rng.random_range(-ex / 2.0..ex / 2.0);
            let y = rng.random_range(-ey / 2.0..ey / 2.0);
            let yaw = rng.random_range(-3.1..3.1);
            let c = class.unwrap_or_else(|| rng.random_range(0..9));
            ground_box(x, y, dims, yaw, c, first_id + i as i32)
        })
        .collect()
}

/// Random scene with 0..=20 objects and a test scan of at most `max_points`
/// expected points.
pub fn random_scene_spec(rng: &mut ChaCha8Rng, max_points: f64) -> SceneSpec {
    let ex = rng.random_range(5.0..40.0);
    let ey = rng.random_range(5.0..40.0);
    let n_structures = rng.random_range(0..4);
    let n_objects = rng.random_range(0..=20);
    let static_structures = random_boxes(rng, [ex, ey], n_structures, 1000, Some(50));
    let objects = random_boxes(rng, [ex, ey], n_objects, 1, None);
    let mut spec = SceneSpec {
        seed: rng.random(),
        extent: [ex, ey],
        ground_noise_sigma: rng.random_range(0.0..0.05),
        static_structures,
        objects,
        points_per_m2: rng.random_range(5.0..200.0),
        n_background_scans: rng.random_range(1..6),
        ground_return_rate: rng.random_range(0.05..1.0),
        object_points_per_m2: if rng.random_bool(0.5) {
            Some(rng.random_range(20.0..400.0))
        } else {
            None
        },
        sensor_origin: [0.0, 0.0, rng.random_range(2.0..8.0)],
        full_surface: rng.random_bool(0.2),
    };
    let expected = spec.expected_test_points();
    if expected > max_points {
        let k = max_points / expected;
        spec.points_per_m2 *= k;
        spec.object_points_per_m2 = spec.object_points_per_m2.map(|d| d * k);
    }
    spec
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------- metric recounts

/// `(tp, fp, fn, tn)` with foreground positive; excluded classes count as
/// true background.
pub fn recount(result: &FilterResult, truth: &PointCloud, excluded: &BTreeSet<i32>) -> (u64, u64, u64, u64) {
    let fg: BTreeSet<usize> = result.foreground_indices.iter().copied().collect();
    let mut c = (0, 0, 0, 0);
    for (i, p) in truth.points.iter().enumerate() {
        let actual = p.class_id.is_some_and(|k| !excluded.contains(&k));
        match (fg.contains(&i), actual) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
    }
    c
}

/// Per-instance detected fractions, keyed by instance id.
pub fn recount_fractions(result: &FilterResult, truth: &PointCloud, excluded: &BTreeSet<i32>) -> BTreeMap<i32, f64> {
    let fg: BTreeSet<usize> = result.foreground_indices.iter().copied().collect();
    let mut per: BTreeMap<i32, (u64, u64)> = BTreeMap::new();
    for (i, p) in truth.points.iter().enumerate() {
        let (Some(class), Some(inst)) = (p.class_id, p.instance_id) else {
            continue;
        };
        if excluded.contains(&class) {
            continue;
        }
        let e = per.entry(inst).or_default();
        e.1 += 1;
        if fg.contains(&i) {
            e.0 += 1;
        }
    }
    per.into_iter().map(|(k, (hit, n))| (k, hit as f64 / n as f64)).collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Least-squares fit of `y = a + b x`; returns `(b, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let b = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (b, r2)
}

// ---------------------------------------------------------------- small cases

/// Compact random inputs for property tests.
pub struct SmallCase {
    pub background: Vec<PointCloud>,
    pub scan: PointCloud,
    pub params: FilterParams,
}

fn blob(rng: &mut ChaCha8Rng, n: usize, half: f64, z0: f64, spread: f64) -> Vec<Point> {
    (0..n)
        .map(|_| {
            Point::new(
                rng.random_range(-half..half),
                rng.random_range(-half..half),
                z0 + rng.random_range(-spread..spread),
            )
        })
        .collect()
}

/// A few background scans of a 3 x 3 m patch and a test scan mixing fresh
/// background samples with random clutter, some of it outside the patch.
pub fn small_case(seed: u64) -> SmallCase {
    let mut rng = rng(seed);
    let mut params = random_params(&mut rng);
    params.radius = rng.random_range(0.1..0.8);
    let spread = rng.random_range(0.0..0.3);
    let background = (0..rng.random_range(1..4))
        .map(|_| {
            let n = rng.random_range(20..300);
            PointCloud::new(blob(&mut rng, n, 1.5, 0.0, spread))
        })
        .collect();
    let n_bg = rng.random_range(0..300);
    let mut pts = blob(&mut rng, n_bg, 1.5, 0.0, spread);
    let n_fg = rng.random_range(0..150);
    let z0 = rng.random_range(-1.0..2.0);
    for mut p in blob(&mut rng, n_fg, 2.5, z0, 1.0) {
        p.class_id = Some(0);
        p.instance_id = Some(1);
        pts.push(p);
    }
    if pts.is_empty() {
        pts.push(Point::new(0.0, 0.0, 0.0));
    }
    SmallCase {
        background,
        scan: PointCloud::new(pts),
        params,
    }
}

/// Occupied (cell, voxel) pairs per cell, by plain floor division.
pub fn occupancy_oracle(points: &[Point], params: &FilterParams) -> BTreeMap<(i64, i64), u32> {
    let v = params.voxel_size;
    let c = params.cell_size;
    let pairs: BTreeSet<_> = points
        .iter()
        .map(|p| {
            let cell = ((p.x / c.cx).floor() as i64, (p.y / c.cy).floor() as i64);
            let vox = (
                (p.x / v.vx).floor() as i64,
                (p.y / v.vy).floor() as i64,
                (p.z / v.vz).floor() as i64,
            );
            (cell, vox)
        })
        .collect();
    let mut out = BTreeMap::new();
    for (cell, _) in pairs {
        *out.entry(cell).or_insert(0) += 1;
    }
    out
}
