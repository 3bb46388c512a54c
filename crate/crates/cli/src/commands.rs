use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use roadside_bgs::gdg::encode_gdg;
use roadside_bgs::metrics::{DatasetEvaluator, PositiveClass};
use roadside_bgs::pointcloud::{label_points_by_boxes, load_boxes, load_cloud, PcdEncoding};
use roadside_bgs::prelude::*;
use serde_json::json;

use crate::config::{cloud_files, ext, RunArgs};
use crate::output::{print_json, write_atomic, write_cloud, write_json};
use crate::{CliError, Preset};

fn core(e: roadside_bgs::Error) -> CliError {
    CliError::from_core(e)
}

fn load(path: &Path) -> Result<PointCloud, CliError> {
    load_cloud(path).map_err(core)
}

fn load_model(path: &Path) -> Result<Gdg, CliError> {
    load_gdg(path).map_err(core)
}

/// Expand directories into the cloud files they hold.
fn expand(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            out.extend(cloud_files(p)?);
        } else {
            out.push(p.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::usage("no background scans given"));
    }
    Ok(out)
}

pub fn cmd_build_gdg(scans: &[PathBuf], out: &Path, run: RunArgs) -> Result<(), CliError> {
    let cfg = run.resolve(None)?;
    let paths = expand(scans)?;
    let clouds = paths.par_iter().map(|p| load(p)).collect::<Result<Vec<_>, _>>()?;
    let p = &cfg.params;
    let gdg = build_gdg(&clouds, p.voxel_size, p.cell_size, cfg.min_sigma).map_err(core)?;
    let bytes = encode_gdg(&gdg);
    write_atomic(out, |w| w.write_all(&bytes))?;
    print_json(&json!({
        "out": out,
        "cells": gdg.len(),
        "scans": clouds.len(),
        "points": clouds.iter().map(PointCloud::len).sum::<usize>(),
    }));
    Ok(())
}

fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

pub fn cmd_filter(scan: &Path, gdg_path: &Path, prefix: &Path, encoding: PcdEncoding, run: RunArgs) -> Result<(), CliError> {
    let gdg = load_model(gdg_path)?;
    let cfg = run.resolve(Some(&gdg))?;
    let cloud = load(scan)?;
    let r = subtract_background(&cloud, &gdg, &cfg.params).map_err(core)?;
    if r.len() != cloud.len() {
        return Err(CliError::internal("filter result does not partition the scan"));
    }
    let mut bg: Vec<usize> = r.background_indices.iter().chain(&r.ror_removed_indices).copied().collect();
    bg.sort_unstable();

    let (fg_path, bg_path, part_path) = (
        prefixed(prefix, "_fg.pcd"),
        prefixed(prefix, "_bg.pcd"),
        prefixed(prefix, "_partition.json"),
    );
    write_cloud(&fg_path, &cloud.select(&r.foreground_indices), encoding)?;
    write_cloud(&bg_path, &cloud.select(&bg), encoding)?;
    write_json(&part_path, &r)?;
    print_json(&json!({
        "input": cloud.len(),
        "foreground": r.foreground_indices.len(),
        "background": r.background_indices.len(),
        "ror_removed": r.ror_removed_indices.len(),
        "fg": fg_path,
        "bg": bg_path,
        "partition": part_path,
    }));
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Label files by stem: labeled clouds or JSON box lists.
fn label_files(dir: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let mut out = BTreeMap::new();
    for p in entries.filter_map(|e| e.ok().map(|e| e.path())) {
        if !p.is_file() || !matches!(ext(&p).as_deref(), Some("pcd" | "csv" | "json")) {
            continue;
        }
        if let Some(prev) = out.insert(stem(&p), p.clone()) {
            return Err(CliError::data(format!("two label files for one scan: {} and {}", prev.display(), p.display())));
        }
    }
    Ok(out)
}

fn truth_for(scan: &PointCloud, label: &Path) -> Result<PointCloud, CliError> {
    if ext(label).as_deref() == Some("json") {
        let boxes = load_boxes(label).map_err(core)?;
        return label_points_by_boxes(scan, &boxes).map_err(core);
    }
    let truth = load(label)?;
    if truth.len() != scan.len() {
        return Err(CliError::data(format!(
            "{} holds {} points but its scan holds {}",
            label.display(),
            truth.len(),
            scan.len()
        )));
    }
    Ok(truth)
}

pub fn cmd_eval(
    scans: &Path,
    labels: &Path,
    gdg_path: &Path,
    out: Option<&Path>,
    background_positive: bool,
    run: RunArgs,
) -> Result<(), CliError> {
    let gdg = load_model(gdg_path)?;
    let cfg = run.resolve(Some(&gdg))?;
    let scan_paths = cloud_files(scans)?;
    let label_paths = label_files(labels)?;
    if scan_paths.is_empty() {
        return Err(CliError::data(format!("no scans in {}", scans.display())));
    }
    if scan_paths.len() != label_paths.len() {
        return Err(CliError::data(format!(
            "{} scans but {} label files",
            scan_paths.len(),
            label_paths.len()
        )));
    }
    let positive = if background_positive { PositiveClass::Background } else { PositiveClass::Foreground };
    let fresh = || DatasetEvaluator::new(cfg.excluded_classes.clone(), cfg.tpr_threshold).with_positive_class(positive);
    let per_scan = scan_paths
        .par_iter()
        .map(|scan_path| {
            let label = label_paths
                .get(&stem(scan_path))
                .ok_or_else(|| CliError::data(format!("no label file for {}", scan_path.display())))?;
            let scan = load(scan_path)?;
            let truth = truth_for(&scan, label)?;
            let r = subtract_background(&scan, &gdg, &cfg.params).map_err(core)?;
            let mut e = fresh();
            e.add_scan(&r, &truth).map_err(core)?;
            Ok(e)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut total = fresh();
    for e in per_scan {
        total.merge(e);
    }
    let report = total.report();
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    print_json(&report);
    Ok(())
}

pub fn scene_spec(path: Option<&Path>, preset: Option<Preset>, seed: u64, crowd: usize) -> Result<SceneSpec, CliError> {
    let spec = match (path, preset) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::data(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("scene spec {}: {e}", p.display())))?
        }
        (None, Some(Preset::Intersection)) => SceneSpec::intersection(seed),
        (None, Some(Preset::Uniform)) => SceneSpec::uniform(seed),
        (None, Some(Preset::Crowd)) => SceneSpec::crowd(seed, crowd),
        (None, None) => return Err(CliError::usage("give a scene spec file or --preset")),
    };
    spec.validate().map_err(core)?;
    Ok(spec)
}

pub fn cmd_synth(spec: &SceneSpec, out: &Path, encoding: PcdEncoding) -> Result<(), CliError> {
    let scene = generate_scene(spec).map_err(core)?;
    for (i, s) in scene.background_scans.iter().enumerate() {
        write_cloud(&out.join("background").join(format!("bg_{i:03}.pcd")), s, encoding)?;
    }
    write_cloud(&out.join("scans/scan.pcd"), &scene.test_scan.without_labels(), encoding)?;
    write_cloud(&out.join("labels/scan.pcd"), &scene.test_scan, encoding)?;
    write_json(&out.join("boxes.json"), &spec.objects)?;
    write_json(&out.join("spec.json"), spec)?;
    print_json(&json!({
        "out": out,
        "background_scans": scene.background_scans.len(),
        "test_points": scene.test_scan.len(),
        "labeled_points": scene.test_scan.iter().filter(|p| p.class_id.is_some()).count(),
    }));
    Ok(())
}

pub fn cmd_bench(spec: &SceneSpec, sizes: &[usize], repetitions: usize, out: &Path, run: RunArgs) -> Result<(), CliError> {
    let cfg = run.resolve(None)?;
    let reports = bench_sweep(sizes, repetitions, spec, &cfg.params).map_err(core)?;
    write_atomic(out, |w| {
        writeln!(w, "size,stage,ms")?;
        for r in &reports {
            for (size, stage, ms) in r.csv_rows() {
                writeln!(w, "{size},{stage},{ms}")?;
            }
        }
        Ok(())
    })?;
    for r in &reports {
        print_json(r);
    }
    Ok(())
}
