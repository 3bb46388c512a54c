//! Run configuration: command-line flags override a JSON file, which
//! overrides the built-in defaults.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;
use roadside_bgs::classes;
use roadside_bgs::prelude::*;
use serde::Deserialize;

use crate::CliError;

/// A scalar applies to every axis.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Extent {
    Scalar(f64),
    Axes(Vec<f64>),
}

impl Extent {
    fn parse(s: &str) -> Result<Extent, String> {
        let parts = s
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(match parts.as_slice() {
            [v] => Extent::Scalar(*v),
            _ => Extent::Axes(parts),
        })
    }

    fn axes<const N: usize>(&self, name: &str) -> Result<[f64; N], CliError> {
        match self {
            Extent::Scalar(v) => Ok([*v; N]),
            Extent::Axes(v) => v
                .as_slice()
                .try_into()
                .map_err(|_| CliError::usage(format!("{name} takes 1 or {N} values, got {}", v.len()))),
        }
    }
}

fn parse_extent(s: &str) -> Result<Extent, String> {
    Extent::parse(s)
}

fn parse_classes(s: &str) -> Result<ClassList, String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<i32>().map_err(|_| format!("not a class id: {t:?}")))
        .collect::<Result<_, _>>()
        .map(ClassList)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(transparent)]
pub struct ClassList(pub Vec<i32>);

/// Settings shared by every command that filters or evaluates.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunArgs {
    /// JSON file with any of the fields below (snake_case)
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// voxel edge in meters: one value or x,y,z
    #[arg(long, value_parser = parse_extent)]
    pub voxel_size: Option<Extent>,
    /// cell edge in meters: one value or x,y
    #[arg(long, value_parser = parse_extent)]
    pub cell_size: Option<Extent>,
    #[arg(long)]
    pub th_points: Option<u32>,
    #[arg(long)]
    pub th_density: Option<f64>,
    #[arg(long)]
    pub neighbors: Option<u32>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub min_sigma: Option<f64>,
    #[arg(long)]
    pub tpr_threshold: Option<f64>,
    /// class ids treated as background in evaluation; empty for none
    #[arg(long, value_parser = parse_classes)]
    pub excluded_classes: Option<ClassList>,
}

impl RunArgs {
    fn or(self, file: RunArgs) -> RunArgs {
        RunArgs {
            config: self.config,
            voxel_size: self.voxel_size.or(file.voxel_size),
            cell_size: self.cell_size.or(file.cell_size),
            th_points: self.th_points.or(file.th_points),
            th_density: self.th_density.or(file.th_density),
            neighbors: self.neighbors.or(file.neighbors),
            radius: self.radius.or(file.radius),
            min_sigma: self.min_sigma.or(file.min_sigma),
            tpr_threshold: self.tpr_threshold.or(file.tpr_threshold),
            excluded_classes: self.excluded_classes.or(file.excluded_classes),
        }
    }

    /// Merge flags over the config file and resolve defaults. Grid sizes
    /// left unset fall back to `grid` (the loaded model's) when given.
    pub fn resolve(self, grid: Option<&Gdg>) -> Result<RunConfig, CliError> {
        let merged = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
                let file: RunArgs = serde_json::from_str(&text)
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
                self.or(file)
            }
            None => self,
        };
        let d = FilterParams::default();
        let voxel_size = match &merged.voxel_size {
            Some(e) => {
                let [x, y, z] = e.axes::<3>("voxel-size")?;
                VoxelSize::new(x, y, z).map_err(CliError::from_core)?
            }
            None => grid.map_or(d.voxel_size, |g| g.voxel_size()),
        };
        let cell_size = match &merged.cell_size {
            Some(e) => {
                let [x, y] = e.axes::<2>("cell-size")?;
                CellSize::new(x, y).map_err(CliError::from_core)?
            }
            None => grid.map_or(d.cell_size, |g| g.cell_size()),
        };
        cell_size.check_against(&voxel_size).map_err(CliError::from_core)?;
        let params = FilterParams {
            voxel_size,
            cell_size,
            th_points: merged.th_points.unwrap_or(d.th_points),
            th_density: merged.th_density.unwrap_or(d.th_density),
            neighbors: merged.neighbors.unwrap_or(d.neighbors),
            radius: merged.radius.unwrap_or(d.radius),
        };
        params.validate().map_err(CliError::from_core)?;
        let tpr_threshold = merged.tpr_threshold.unwrap_or(roadside_bgs::metrics::DEFAULT_TPR_THRESHOLD);
        if !(0.0..=1.0).contains(&tpr_threshold) {
            return Err(CliError::usage(format!("tpr-threshold must lie in [0, 1], got {tpr_threshold}")));
        }
        let min_sigma = merged.min_sigma.unwrap_or(DEFAULT_MIN_SIGMA);
        if !(min_sigma.is_finite() && min_sigma > 0.0) {
            return Err(CliError::usage(format!("min-sigma must be positive, got {min_sigma}")));
        }
        Ok(RunConfig {
            params,
            min_sigma,
            tpr_threshold,
            excluded_classes: merged
                .excluded_classes
                .map_or_else(|| [classes::SIGNAL].into(), |c| c.0.into_iter().collect()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: FilterParams,
    pub min_sigma: f64,
    pub tpr_threshold: f64,
    pub excluded_classes: BTreeSet<i32>,
}

/// Files directly inside `dir` with a cloud extension, sorted by name.
pub fn cloud_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && matches!(ext(p).as_deref(), Some("pcd" | "csv")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn ext(p: &Path) -> Option<String> {
    p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase)
}
