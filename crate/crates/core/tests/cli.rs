use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use coral::harness::{synth_scene, SceneKind, SceneSpec};
use coral::io::write_xyz;

fn coral(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coral"))
        .args(args)
        .env("CORAL_THREADS", "2")
        .output()
        .expect("run coral")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn scan_file(dir: &Path) -> PathBuf {
    let pair = synth_scene(&SceneSpec::new(SceneKind::Corridor, 60.0, 5.0, 0.01, 4)).unwrap();
    let path = dir.join("scan.xyz");
    write_xyz(&path, &pair.cloud_a).unwrap();
    path
}

fn synth_dataset(dir: &Path, kinds: &[&str], pairs: usize) -> PathBuf {
    let out = dir.join("data");
    let pairs = pairs.to_string();
    let mut args = vec!["synth", "--pairs", &pairs, "--density", "40", "--extent", "5", "--seed", "1", "--out", s(&out)];
    for k in kinds {
        args.extend(["--kind", k]);
    }
    let res = coral(&args);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    out.join("manifest.txt")
}

#[test]
fn self_pair_is_measured_with_non_positive_quality() {
    let dir = tempfile::tempdir().unwrap();
    let scan = scan_file(dir.path());
    let per_point = dir.path().join("pp.txt");
    let out = coral(&["assess", "--a", s(&scan), "--b", s(&scan), "--downsample", "none", "--per-point", s(&per_point)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(summary["status"], "Measured");
    assert!(summary["q"].as_f64().unwrap() <= 0.0);
    let rows = std::fs::read_to_string(&per_point).unwrap();
    let first = rows.lines().next().unwrap();
    assert_eq!(first.split_whitespace().count(), 5);
}

#[test]
fn usage_errors_exit_with_one() {
    let out = coral(&["assess", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert!(out.stdout.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "[entropy]\nradius = 0.3\n").unwrap();
    let scan = scan_file(dir.path());
    let out = coral(&["assess", "--a", s(&scan), "--b", s(&scan), "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("radius"));
}

#[test]
fn data_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.xyz");
    std::fs::write(&bad, "0 0 0\n1 2\n").unwrap();
    let out = coral(&["assess", "--a", s(&bad), "--b", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn too_few_points_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let tiny = dir.path().join("tiny.xyz");
    std::fs::write(&tiny, "0 0 0\n1 0 0\n").unwrap();
    let out = coral(&["assess", "--a", s(&tiny), "--b", s(&tiny), "--downsample", "none"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluate_writes_reports_and_prints_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(dir.path(), &["corridor"], 10);
    let reports = dir.path().join("reports");
    let out = coral(&[
        "evaluate", "--manifest", s(&manifest), "--protocol", "separate", "--method", "coral", "--downsample", "none", "--out", s(&reports),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("overall accuracy"));
    let csv = std::fs::read_to_string(reports.join("coral-separate.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,protocol,sequence,environment,pairs,tp,fp,tn,fn,accuracy"));
    let overall = csv.lines().last().unwrap();
    assert!(overall.starts_with("coral,separate,overall,all,10,"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(reports.join("coral-separate.json")).unwrap()).unwrap();
    let c = &json["overall"];
    let total = ["tp", "fp", "tn", "fn"].iter().map(|k| c[k].as_u64().unwrap()).sum::<u64>();
    assert_eq!(total, 20);
    let acc = (c["tp"].as_u64().unwrap() + c["tn"].as_u64().unwrap()) as f64 / total as f64;
    assert_eq!(json["overall_accuracy"].as_f64().unwrap(), acc);
}

#[test]
fn train_then_evaluate_with_the_model() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(dir.path(), &["corridor", "foliage"], 6);
    let model = dir.path().join("coral.model");
    let out = coral(&["train", "--manifest", s(&manifest), "--downsample", "none", "--out", s(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(&model).unwrap().starts_with("coral\n"));

    let reports = dir.path().join("reports");
    let out = coral(&[
        "evaluate", "--manifest", s(&manifest), "--model", s(&model), "--downsample", "none", "--seed", "5", "--out", s(&reports),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(reports.join("coral-model.csv").is_file());

    let out = coral(&["assess", "--a", s(&dir.path().join("data/corridor-00/scan000.xyz")), "--b", s(&dir.path().join("data/corridor-00/scan001.xyz")), "--model", s(&model)]);
    // Scans are stored in their sensor frames, so this pair is not registered.
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(summary["verdict"].is_string());
}

#[test]
fn generalization_needs_both_environment_groups() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth_dataset(dir.path(), &["corridor"], 5);
    let out = coral(&["evaluate", "--manifest", s(&manifest), "--protocol", "generalization", "--downsample", "none"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_the_quality_grid() {
    let dir = tempfile::tempdir().unwrap();
    let scan = scan_file(dir.path());
    let csv = dir.path().join("surface.csv");
    let out = coral(&["sweep", "--a", s(&scan), "--b", s(&scan), "--extent", "0.2", "--steps", "3", "--downsample", "none", "--out", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().next(), Some("dx,dy,dtheta,Q"));
    assert_eq!(text.lines().count(), 10);
    let q = |line: &str| line.rsplit(',').next().unwrap().parse::<f64>().unwrap();
    let centre = text.lines().find(|l| l.starts_with("0.000000,0.000000,")).map(q).unwrap();
    assert!(text.lines().skip(1).all(|l| q(l) >= centre));
}

#[test]
fn tune_lists_every_variant() {
    let dir = tempfile::tempdir().unwrap();
    let pair = synth_scene(&SceneSpec::new(SceneKind::Corridor, 60.0, 5.0, 0.01, 8)).unwrap();
    let (a, b) = (dir.path().join("a.xyz"), dir.path().join("b.xyz"));
    write_xyz(&a, &pair.cloud_a).unwrap();
    write_xyz(&b, &pair.cloud_b).unwrap();
    let origin = |c: &coral::PointCloud| {
        let o = c.sensor_origin();
        format!("{},{},{}", o.x, o.y, o.z)
    };
    let (oa, ob) = (origin(&pair.cloud_a), origin(&pair.cloud_b));
    let out = coral(&[
        "tune", "--a", s(&a), "--b", s(&b), "--origin-a", &oa, "--origin-b", &ob, "--profile", "spinning-lidar", "--radii", "0.2,0.3", "--reject", "0,0.1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 1 + 4 + 4);
    assert!(text.starts_with("variant,"));
    for line in text.lines().skip(1) {
        let qs: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(qs > 1.0, "{line}");
    }
}
