//! The Gaussian Distribution Grid: per-cell statistics of background heights.
//!
//! Background scans are merged into one accumulated cloud. Each 2D cell the
//! cloud touches stores the mean and (population) standard deviation of the
//! heights that fall in it, the peak of that Gaussian, and how many voxels of
//! the low-resolution view are occupied in the cell.

use std::collections::HashMap;
use std::path::Path;

use crate::pointcloud::{Point, PointCloud};
use crate::spatial::{count_per_cell, occupied_cell_voxels, CellId, CellSize, VoxelSize};
use crate::{Error, Result};

pub const DEFAULT_MIN_SIGMA: f64 = 0.001;

/// sqrt(2*pi)
pub(crate) const SQRT_TAU: f64 = 2.506_628_274_631_000_5;

/// Tolerance for the stored peak density against `1 / (sigma * sqrt(2*pi))`.
const PEAK_RTOL: f64 = 1e-12;

/// Normal probability density. Fails unless `sigma > 0`.
#[allow(clippy::neg_cmp_op_on_partial_ord)] // rejects NaN too
pub fn normal_pdf(z: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::param(format!("normal_pdf: sigma must be positive, got {sigma}")));
    }
    Ok(pdf(z, mu, sigma))
}

#[inline]
pub(crate) fn pdf(z: f64, mu: f64, sigma: f64) -> f64 {
    let t = (z - mu) / sigma;
    (-0.5 * t * t).exp() / (sigma * SQRT_TAU)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdgCell {
    pub mu: f64,
    pub sigma: f64,
    /// `normal_pdf(mu, mu, sigma)`
    pub max_density: f64,
    /// Occupied voxels of the accumulated background in this cell.
    pub num_points: u32,
}

impl GdgCell {
    pub fn new(mu: f64, sigma: f64, num_points: u32) -> Result<Self> {
        normal_pdf(mu, mu, sigma).map(|max_density| GdgCell {
            mu,
            sigma,
            max_density,
            num_points,
        })
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)] // NaN fails the check
    fn check(&self, id: CellId, min_sigma: f64) -> Result<()> {
        let fail = |m: String| Err(Error::data(format!("cell ({}, {}): {m}", id.ix, id.iy)));
        if !self.mu.is_finite() {
            return fail(format!("non-finite mu {}", self.mu));
        }
        if !(self.sigma.is_finite() && self.sigma >= min_sigma) {
            return fail(format!("sigma {} below min_sigma {min_sigma}", self.sigma));
        }
        if self.num_points == 0 {
            return fail("num_points is zero".into());
        }
        let peak = 1.0 / (self.sigma * SQRT_TAU);
        if !((self.max_density - peak).abs() <= PEAK_RTOL * peak) {
            return fail(format!(
                "max_density {} inconsistent with sigma {} (expected {peak})",
                self.max_density, self.sigma
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gdg {
    voxel_size: VoxelSize,
    cell_size: CellSize,
    min_sigma: f64,
    source_scan_count: u64,
    cells: HashMap<CellId, GdgCell>,
}

impl Gdg {
    /// Assemble a grid from explicit cells, checking every invariant.
    pub fn from_parts(
        voxel_size: VoxelSize,
        cell_size: CellSize,
        min_sigma: f64,
        source_scan_count: u64,
        cells: HashMap<CellId, GdgCell>,
    ) -> Result<Self> {
        VoxelSize::new(voxel_size.vx, voxel_size.vy, voxel_size.vz)?;
        CellSize::new(cell_size.cx, cell_size.cy)?;
        cell_size.check_against(&voxel_size)?;
        check_min_sigma(min_sigma)?;
        for (id, c) in &cells {
            c.check(*id, min_sigma)?;
        }
        Ok(Gdg {
            voxel_size,
            cell_size,
            min_sigma,
            source_scan_count,
            cells,
        })
    }

    pub fn voxel_size(&self) -> VoxelSize {
        self.voxel_size
    }

    pub fn cell_size(&self) -> CellSize {
        self.cell_size
    }

    pub fn min_sigma(&self) -> f64 {
        self.min_sigma
    }

    pub fn source_scan_count(&self) -> u64 {
        self.source_scan_count
    }

    /// `None` for cells the background never touched.
    #[inline]
    pub fn get(&self, id: CellId) -> Option<&GdgCell> {
        self.cells.get(&id)
    }

    pub fn cells(&self) -> &HashMap<CellId, GdgCell> {
        &self.cells
    }

    /// Cells in ascending `(ix, iy)` order.
    pub fn sorted_cells(&self) -> Vec<(CellId, GdgCell)> {
        let mut v: Vec<_> = self.cells.iter().map(|(k, c)| (*k, *c)).collect();
        v.sort_unstable_by_key(|(k, _)| *k);
        v
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn check_min_sigma(min_sigma: f64) -> Result<()> {
    if !(min_sigma.is_finite() && min_sigma > 0.0) {
        return Err(Error::param(format!("min_sigma must be positive, got {min_sigma}")));
    }
    Ok(())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Build a grid from background-only scans.
pub fn build_gdg(
    background_scans: &[PointCloud],
    voxel_size: VoxelSize,
    cell_size: CellSize,
    min_sigma: f64,
) -> Result<Gdg> {
    if background_scans.is_empty() {
        return Err(Error::param("build_gdg needs at least one background scan"));
    }
    cell_size.check_against(&voxel_size)?;
    check_min_sigma(min_sigma)?;

    let accumulated: Vec<Point> = background_scans.iter().flat_map(|s| s.points.iter().copied()).collect();
    if let Some(p) = accumulated.iter().find(|p| !p.is_finite()) {
        return Err(Error::data(format!("background point with non-finite coordinate {:?}", p.xyz())));
    }

    let occupancy = count_per_cell(&occupied_cell_voxels(&accumulated, voxel_size, cell_size));

    let cell_of = |p: &Point| crate::spatial::cell_id(p.x, p.y, cell_size);
    let mut sums: HashMap<CellId, (CompensatedSum, usize)> = HashMap::with_capacity(occupancy.len());
    for p in &accumulated {
        let e = sums.entry(cell_of(p)).or_default();
        e.0.add(p.z);
        e.1 += 1;
    }
    let means: HashMap<CellId, f64> = sums.iter().map(|(k, (s, n))| (*k, s.value() / *n as f64)).collect();
    let mut squares: HashMap<CellId, CompensatedSum> = HashMap::with_capacity(means.len());
    for p in &accumulated {
        let id = cell_of(p);
        let d = p.z - means[&id];
        squares.entry(id).or_default().add(d * d);
    }

    let mut cells = HashMap::with_capacity(means.len());
    for (id, mu) in means {
        let n = sums[&id].1;
        let variance = squares[&id].value() / n as f64;
        let sigma = variance.sqrt().max(min_sigma);
        let count = *occupancy
            .get(&id)
            .expect("every occupied cell has at least one occupied voxel");
        cells.insert(id, GdgCell::new(mu, sigma, count)?);
    }
    debug_assert_eq!(cells.len(), occupancy.len());

    Ok(Gdg {
        voxel_size,
        cell_size,
        min_sigma,
        source_scan_count: background_scans.len() as u64,
        cells,
    })
}

const MAGIC: &[u8; 4] = b"GDG1";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 3 + 8 * 2 + 8 + 8 + 8;
const CELL_LEN: usize = 4 + 4 + 8 * 3 + 4;

/// Serialize to the little-endian GDG1 layout, cells sorted by `(ix, iy)`.
pub fn encode_gdg(gdg: &Gdg) -> Vec<u8> {
    let cells = gdg.sorted_cells();
    let mut out = Vec::with_capacity(HEADER_LEN + cells.len() * CELL_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in gdg.voxel_size.as_array() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&gdg.cell_size.cx.to_le_bytes());
    out.extend_from_slice(&gdg.cell_size.cy.to_le_bytes());
    out.extend_from_slice(&gdg.min_sigma.to_le_bytes());
    out.extend_from_slice(&gdg.source_scan_count.to_le_bytes());
    out.extend_from_slice(&(cells.len() as u64).to_le_bytes());
    for (id, c) in cells {
        out.extend_from_slice(&id.ix.to_le_bytes());
        out.extend_from_slice(&id.iy.to_le_bytes());
        out.extend_from_slice(&c.mu.to_le_bytes());
        out.extend_from_slice(&c.sigma.to_le_bytes());
        out.extend_from_slice(&c.max_density.to_le_bytes());
        out.extend_from_slice(&c.num_points.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        let end = self.pos + N;
        let bytes = self.buf.get(self.pos..end).ok_or_else(|| {
            Error::GdgFormat(format!(
                "truncated at byte {} reading {what} (file has {} bytes)",
                self.pos,
                self.buf.len()
            ))
        })?;
        self.pos = end;
        Ok(bytes.try_into().unwrap())
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        self.take::<8>(what).map(u64::from_le_bytes)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }

    fn i32(&mut self, what: &str) -> Result<i32> {
        self.take::<4>(what).map(i32::from_le_bytes)
    }
}

pub fn decode_gdg(bytes: &[u8]) -> Result<Gdg> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic = cur.take::<4>("magic")?;
    if &magic != MAGIC {
        return Err(Error::GdgFormat(format!(
            "bad magic {:?} (expected \"GDG1\")",
            String::from_utf8_lossy(&magic)
        )));
    }
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::GdgFormat(format!("unsupported version {version} (expected {VERSION})")));
    }
    let vx = cur.f64("voxel_size")?;
    let vy = cur.f64("voxel_size")?;
    let vz = cur.f64("voxel_size")?;
    let cx = cur.f64("cell_size")?;
    let cy = cur.f64("cell_size")?;
    let min_sigma = cur.f64("min_sigma")?;
    let source_scan_count = cur.u64("source_scan_count")?;
    let n = cur.u64("cell_count")?;

    let remaining = (bytes.len() - cur.pos) as u64;
    if remaining < n.saturating_mul(CELL_LEN as u64) {
        return Err(Error::GdgFormat(format!(
            "truncated body: {n} cells declared ({} bytes) but only {remaining} bytes follow the header",
            n.saturating_mul(CELL_LEN as u64)
        )));
    }
    let mut cells = HashMap::with_capacity(n as usize);
    for i in 0..n {
        let id = CellId {
            ix: cur.i32("cell ix")?,
            iy: cur.i32("cell iy")?,
        };
        let cell = GdgCell {
            mu: cur.f64("mu")?,
            sigma: cur.f64("sigma")?,
            max_density: cur.f64("max_density")?,
            num_points: cur.u32("num_points")?,
        };
        if cells.insert(id, cell).is_some() {
            return Err(Error::GdgFormat(format!("cell #{i} ({}, {}) appears twice", id.ix, id.iy)));
        }
    }
    if cur.pos != bytes.len() {
        return Err(Error::GdgFormat(format!("{} trailing bytes after the last cell", bytes.len() - cur.pos)));
    }
    let voxel_size = VoxelSize::new(vx, vy, vz).map_err(|e| Error::GdgFormat(e.to_string()))?;
    let cell_size = CellSize::new(cx, cy).map_err(|e| Error::GdgFormat(e.to_string()))?;
    Gdg::from_parts(voxel_size, cell_size, min_sigma, source_scan_count, cells)
        .map_err(|e| Error::GdgFormat(format!("invariant violation: {e}")))
}

pub fn save_gdg(gdg: &Gdg, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_gdg(gdg)).map_err(|e| Error::io(path, e))
}

pub fn load_gdg(path: impl AsRef<Path>) -> Result<Gdg> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_gdg(&bytes)
}
