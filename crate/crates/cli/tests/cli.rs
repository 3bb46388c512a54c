use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use roadside_bgs::metrics::{EvalReport, ObjectMetrics, PointMetrics};
use roadside_bgs::pointcloud::{load_pcd, save_pcd, PcdEncoding};
use roadside_bgs::prelude::*;
use roadside_bgs::synth::ground_box;
use tempfile::TempDir;

fn rbgs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbgs")).args(args).output().unwrap()
}

fn rbgs_env(args: &[&str], key: &str, val: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbgs")).args(args).env(key, val).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(o: &Output) -> serde_json::Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(o.stdout.split(|&b| b == b'\n').next().unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Synthesized intersection scene plus its model.
fn scene(dir: &TempDir) -> (PathBuf, PathBuf) {
    let out = dir.path().join("scene");
    ok(&rbgs(&["synth", "--preset", "intersection", "--seed", "3", "--out", s(&out)]));
    let gdg = dir.path().join("model.gdg");
    ok(&rbgs(&["build-gdg", s(&out.join("background")), "--out", s(&gdg)]));
    (out, gdg)
}

#[test]
fn built_model_loads() {
    let dir = TempDir::new().unwrap();
    let (out, gdg) = scene(&dir);
    let g = load_gdg(&gdg).unwrap();
    assert_eq!(g.source_scan_count(), 10);
    let scans: Vec<_> = (0..10).map(|i| load_pcd(out.join(format!("background/bg_{i:03}.pcd"))).unwrap()).collect();
    let p = FilterParams::default();
    let direct = build_gdg(&scans, p.voxel_size, p.cell_size, DEFAULT_MIN_SIGMA).unwrap();
    assert_eq!(g.sorted_cells(), direct.sorted_cells());
}

#[test]
fn build_requires_scans_and_valid_sizes() {
    let dir = TempDir::new().unwrap();
    let o = rbgs(&["build-gdg", "--out", s(&dir.path().join("g.gdg"))]);
    assert_eq!(o.status.code(), Some(1));

    let scan = dir.path().join("a.csv");
    std::fs::write(&scan, "0,0,0\n").unwrap();
    let o = rbgs(&["build-gdg", s(&scan), "--out", "g.gdg", "--cell-size", "0.1", "--voxel-size", "0.2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cell_size must be bigger than voxel_size"));
}

#[test]
fn filter_outputs_partition_the_scan() {
    let dir = TempDir::new().unwrap();
    let (out, gdg) = scene(&dir);
    let prefix = dir.path().join("res/scan");
    let summary = ok(&rbgs(&["filter", s(&out.join("scans/scan.pcd")), "--gdg", s(&gdg), "--out-prefix", s(&prefix)]));
    let fg = load_pcd(dir.path().join("res/scan_fg.pcd")).unwrap();
    let bg = load_pcd(dir.path().join("res/scan_bg.pcd")).unwrap();
    let input = load_pcd(out.join("scans/scan.pcd")).unwrap();
    assert_eq!(fg.len() + bg.len(), input.len());
    assert_eq!(summary["input"], input.len());
    let part: FilterResult = serde_json::from_slice(&std::fs::read(dir.path().join("res/scan_partition.json")).unwrap()).unwrap();
    assert_eq!(part.len(), input.len());
    assert_eq!(part.foreground_indices.len(), fg.len());
}

#[test]
fn background_only_scan_has_empty_foreground() {
    let dir = TempDir::new().unwrap();
    let (out, gdg) = scene(&dir);
    let prefix = dir.path().join("bg4");
    let summary = ok(&rbgs(&["filter", s(&out.join("background/bg_004.pcd")), "--gdg", s(&gdg), "--out-prefix", s(&prefix), "--encoding", "ascii"]));
    assert_eq!(summary["foreground"], 0);
    assert!(load_pcd(dir.path().join("bg4_fg.pcd")).unwrap().is_empty());
}

#[test]
fn missing_model_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let scan = dir.path().join("a.csv");
    std::fs::write(&scan, "0,0,0\n").unwrap();
    let o = rbgs(&["filter", s(&scan), "--gdg", s(&dir.path().join("nope.gdg")), "--out-prefix", "x"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn perfect_predictions_score_one() {
    let dir = TempDir::new().unwrap();
    let ground = PointCloud::from_xyz((0..40).flat_map(|i| (0..40).map(move |j| [i as f64 * 0.1 + 0.05, j as f64 * 0.1 + 0.05, 0.0])));
    save_pcd(&ground, PcdEncoding::Binary, dir.path().join("bg.pcd")).unwrap();
    let gdg = dir.path().join("g.gdg");
    ok(&rbgs(&["build-gdg", s(&dir.path().join("bg.pcd")), "--out", s(&gdg)]));

    // a dense object standing well outside the modeled ground
    let mut pts = ground.points.clone();
    for i in 0..10 {
        for k in 0..10 {
            pts.push(Point::new(10.0 + i as f64 * 0.05, 10.0, k as f64 * 0.05).with_labels(0, 1));
        }
    }
    let truth = PointCloud::new(pts);
    for d in ["scans", "labels"] {
        std::fs::create_dir(dir.path().join(d)).unwrap();
    }
    save_pcd(&truth.without_labels(), PcdEncoding::Binary, dir.path().join("scans/s.pcd")).unwrap();
    save_pcd(&truth, PcdEncoding::Ascii, dir.path().join("labels/s.pcd")).unwrap();
    let r = ok(&rbgs(&["eval", "--scans", s(&dir.path().join("scans")), "--labels", s(&dir.path().join("labels")), "--gdg", s(&gdg)]));
    for k in ["precision", "recall", "f1", "iou", "tpr", "completeness"] {
        assert_eq!(r[k], 1.0, "{k}");
    }
}

#[test]
fn mismatched_label_count_is_an_error() {
    let dir = TempDir::new().unwrap();
    let (out, gdg) = scene(&dir);
    std::fs::write(out.join("labels/extra.json"), "[]").unwrap();
    let o = rbgs(&["eval", "--scans", s(&out.join("scans")), "--labels", s(&out.join("labels")), "--gdg", s(&gdg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("1 scans but 2 label files"));
}

/// Independent recount of what `eval` should report for `pairs`.
fn oracle_report(pairs: &[(FilterResult, PointCloud)], excluded: &BTreeSet<i32>) -> (PointMetrics, ObjectMetrics) {
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    let mut fractions = Vec::new();
    for (r, truth) in pairs {
        let fg: BTreeSet<usize> = r.foreground_indices.iter().copied().collect();
        let mut per: std::collections::BTreeMap<i32, (u64, u64)> = Default::default();
        for (i, p) in truth.iter().enumerate() {
            let actual = p.class_id.is_some_and(|c| !excluded.contains(&c));
            match (fg.contains(&i), actual) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
            if actual {
                let e = per.entry(p.instance_id.unwrap()).or_default();
                e.0 += fg.contains(&i) as u64;
                e.1 += 1;
            }
        }
        fractions.extend(per.values().map(|(h, n)| *h as f64 / *n as f64));
    }
    let c = roadside_bgs::metrics::ConfusionCounts { tp, fp, fn_, tn };
    (PointMetrics::from_counts(c), ObjectMetrics::from_fractions(fractions, 0.5).unwrap())
}

#[test]
fn twenty_scene_suite_matches_oracle() {
    let dir = TempDir::new().unwrap();
    let base = SceneSpec::intersection(40);
    let background = generate_scene(&SceneSpec { objects: vec![], ..base.clone() }).unwrap().background_scans;
    let p = FilterParams::default();
    let gdg = build_gdg(&background, p.voxel_size, p.cell_size, DEFAULT_MIN_SIGMA).unwrap();
    let gdg_path = dir.path().join("g.gdg");
    save_gdg(&gdg, &gdg_path).unwrap();
    for d in ["scans", "labels"] {
        std::fs::create_dir(dir.path().join(d)).unwrap();
    }
    let excluded: BTreeSet<i32> = [9].into();
    let mut pairs = Vec::new();
    for i in 0..20u64 {
        let mut spec = SceneSpec::intersection(100 + i);
        spec.n_background_scans = 1;
        spec.objects.truncate(1 + (i % 5) as usize);
        spec.objects.push(ground_box(-2.0 + i as f64 * 0.2, -8.0, [0.6, 0.6, 1.7], 0.0, 1, 50));
        if i % 4 == 0 {
            spec.objects.push(ground_box(7.0, -2.0, [0.4, 0.4, 3.0], 0.0, 9, 60));
        }
        let scan = generate_scene(&spec).unwrap().test_scan;
        let name = format!("scan_{i:02}");
        save_pcd(&scan.without_labels(), PcdEncoding::Binary, dir.path().join(format!("scans/{name}.pcd"))).unwrap();
        if i % 2 == 0 {
            save_pcd(&scan, PcdEncoding::Binary, dir.path().join(format!("labels/{name}.pcd"))).unwrap();
        } else {
            std::fs::write(dir.path().join(format!("labels/{name}.json")), serde_json::to_string(&spec.objects).unwrap()).unwrap();
        }
        // the pcd round trip quantizes to f32; score what eval will read
        let read = load_pcd(dir.path().join(format!("scans/{name}.pcd"))).unwrap();
        let truth = if i % 2 == 0 {
            load_pcd(dir.path().join(format!("labels/{name}.pcd"))).unwrap()
        } else {
            label_points_by_boxes(&read, &spec.objects).unwrap()
        };
        pairs.push((reference_subtract(&read, &gdg, &p).unwrap(), truth));
    }
    let o = rbgs(&["eval", "--scans", s(&dir.path().join("scans")), "--labels", s(&dir.path().join("labels")), "--gdg", s(&gdg_path)]);
    let report: EvalReport = serde_json::from_value(ok(&o)).unwrap();
    let (pm, om) = oracle_report(&pairs, &excluded);
    assert_eq!(report.n_scans, 20);
    assert_eq!(report.confusion, pm.counts());
    assert_eq!((report.precision, report.recall, report.f1, report.iou), (pm.precision, pm.recall, pm.f1, pm.iou));
    assert_eq!(report.n_objects, om.n_objects);
    assert_eq!(report.tpr, om.tpr);
    assert!((report.completeness - om.completeness).abs() <= 1e-12);
    assert!(!report.per_class.contains_key("9"));
}

#[test]
fn synth_is_byte_identical_per_seed() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, serde_json::to_string(&SceneSpec::crowd(2, 4)).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&rbgs(&["synth", s(&spec), "--out", s(&a)]));
    ok(&rbgs(&["synth", s(&spec), "--out", s(&b)]));
    for f in ["scans/scan.pcd", "labels/scan.pcd", "background/bg_000.pcd", "background/bg_009.pcd", "boxes.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn invalid_spec_reports_location() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, "{\n  \"seed\": 1,\n  \"extent\": [10, oops]\n}").unwrap();
    let o = rbgs(&["synth", s(&spec), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn bench_csv_has_one_row_per_size_and_stage() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("b.csv");
    let o = rbgs(&["bench", "--preset", "uniform", "--sizes", "3000,6000,9000", "--repetitions", "3", "--out", s(&csv)]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "size,stage,ms");
    assert_eq!(rows.len() - 1, 3 * 5);
    let jsonl: Vec<serde_json::Value> = String::from_utf8(o.stdout).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(jsonl.len(), 3);
    assert_eq!(jsonl[2]["n_input"], 9000);
}

#[test]
fn flags_override_config_file() {
    let dir = TempDir::new().unwrap();
    let scan = dir.path().join("a.csv");
    std::fs::write(&scan, "0,0,0\n1,1,1\n").unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"voxel_size": 0.2, "cell_size": [0.1, 0.1]}"#).unwrap();
    let out = dir.path().join("g.gdg");
    let o = rbgs(&["build-gdg", s(&scan), "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    ok(&rbgs(&["build-gdg", s(&scan), "--out", s(&out), "--config", s(&cfg), "--cell-size", "0.4,0.3"]));
    let g = load_gdg(&out).unwrap();
    assert_eq!((g.voxel_size().vx, g.cell_size().cx, g.cell_size().cy), (0.2, 0.4, 0.3));

    std::fs::write(&cfg, r#"{"th_pointz": 3}"#).unwrap();
    let o = rbgs(&["build-gdg", s(&scan), "--out", s(&out), "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("th_pointz"));
}

#[test]
fn worker_count_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let (out, gdg) = scene(&dir);
    let args = |p: &Path| {
        vec![
            "filter".to_string(),
            s(&out.join("scans/scan.pcd")).to_string(),
            "--gdg".into(),
            s(&gdg).into(),
            "--out-prefix".into(),
            s(p).into(),
        ]
    };
    let one = dir.path().join("one");
    let a: Vec<String> = args(&one);
    let a: Vec<&str> = a.iter().map(String::as_str).collect();
    ok(&rbgs_env(&a, "RBGS_WORKERS", "1"));
    let many = dir.path().join("many");
    let b: Vec<String> = args(&many);
    let b: Vec<&str> = b.iter().map(String::as_str).collect();
    ok(&rbgs(&b));
    assert_eq!(
        std::fs::read(dir.path().join("one_partition.json")).unwrap(),
        std::fs::read(dir.path().join("many_partition.json")).unwrap()
    );
    assert_eq!(rbgs_env(&a, "RBGS_WORKERS", "0").status.code(), Some(1));
}
