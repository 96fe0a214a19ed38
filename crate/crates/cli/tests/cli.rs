use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn posekit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posekit")).arg("--quiet").args(args).output().expect("binary runs")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures").join(name)
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn parse_transcript_matches_golden() {
    let out = posekit(&["parse", "--transcript", s(&fixture("transcript.jsonl"))]);
    assert_eq!(out.status.code(), Some(0));
    let golden: Value = serde_json::from_str(&std::fs::read_to_string(fixture("golden_outcomes.json")).unwrap()).unwrap();
    assert_eq!(stdout_json(&out), golden);
}

#[test]
fn parse_single_replies() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "<action>\nobject: cup\nconfirm: yes\n</action>").unwrap();
    let out = posekit(&["parse", "--response", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_json(&out)["kind"]["detail"], "task");

    let stub = fixture("stub.jsonl");
    let out = posekit(&["parse", "--prompt", "Put the red bottle on the tray.", "--stub", s(&stub)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["object"], "red bottle");

    let out = posekit(&["parse", "--prompt", "something else", "--stub", s(&stub)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no canned response"));
}

#[test]
fn transcript_with_repeated_round_fails() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let line = r#"{"round_index": 1, "user_text": "a", "model_text": "b", "timestamp": ""}"#;
    std::fs::write(&path, format!("{line}\n{line}\n")).unwrap();
    assert_eq!(posekit(&["parse", "--transcript", s(&path)]).status.code(), Some(1));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(posekit(&["render", "--views", "not-a-number"]).status.code(), Some(2));
    assert_eq!(posekit(&["eval", "--dataset", "x", "--estimates", "y", "--thresholds", "5,0.05"]).status.code(), Some(2));
    assert_eq!(posekit(&["nonsense"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "no_such_key = 3\n").unwrap();
    assert_eq!(posekit(&["render", "--config", s(&cfg)]).status.code(), Some(2));
}

fn render_small(out: &Path, extra: &[&str]) -> Output {
    let dir = out.parent().unwrap();
    let cfg = dir.join("small.toml");
    std::fs::write(
        &cfg,
        "fixture_instances = 1\n[intrinsics]\nfx = 150.0\nfy = 150.0\ncx = 50.0\ncy = 40.0\nwidth = 100\nheight = 80\n",
    )
    .unwrap();
    let mut args = vec!["render", "--config", s(&cfg), "--out", s(out), "--views", "3", "--categories", "wedge,bracket"];
    args.extend_from_slice(extra);
    posekit(&args)
}

fn files_under(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = walk(root).into_iter().map(|p| (p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap())).collect();
    v.sort();
    v
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn render_is_deterministic_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = render_small(&a, &["--jobs", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["records"], 6);
    assert_eq!(render_small(&b, &["--jobs", "2"]).status.code(), Some(0));
    assert_eq!(files_under(&a), files_under(&b));

    let v = posekit(&["validate", "--dataset", s(&a)]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(stdout_json(&v)["violations"], Value::Array(vec![]));

    let victim = walk(&a).into_iter().find(|p| p.to_string_lossy().ends_with(".depth.png")).unwrap();
    std::fs::remove_file(victim).unwrap();
    assert_eq!(posekit(&["validate", "--dataset", s(&a)]).status.code(), Some(1));
}

#[test]
fn strict_render_with_broken_asset() {
    let dir = tempfile::tempdir().unwrap();
    let assets = dir.path().join("assets");
    assert_eq!(posekit(&["assets", "--out", s(&assets), "--categories", "wedge", "--instances", "1"]).status.code(), Some(0));
    std::fs::write(assets.join("wedge/broken.model.json"), r#"{"category": "wedge", "instance_id": "x", "parts": [{"mesh_path": "gone.obj", "transform": {"quat_wxyz": [1,0,0,0], "translation": [0,0,0]}}]}"#).unwrap();
    let out_dir = dir.path().join("ds");
    let out = render_small(&out_dir, &["--assets", s(&assets), "--strict"]);
    assert_eq!(out.status.code(), Some(1));
    let manifest: Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["complete"], false);

    let lenient = render_small(&dir.path().join("ds2"), &["--assets", s(&assets)]);
    assert_eq!(lenient.status.code(), Some(1));
    assert_eq!(stdout_json(&lenient)["records"], 3);
}

#[test]
fn estimate_and_eval_round() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    let tpl = dir.path().join("tpl");
    assert_eq!(render_small(&ds, &[]).status.code(), Some(0));
    let t = posekit(&["template", "--out", s(&tpl), "--categories", "wedge,bracket", "--k", "512"]);
    assert_eq!(t.status.code(), Some(0), "{}", String::from_utf8_lossy(&t.stderr));
    let est = dir.path().join("est.json");
    let e = posekit(&["estimate", "--dataset", s(&ds), "--templates", s(&tpl), "--out", s(&est)]);
    assert_eq!(e.status.code(), Some(0), "{}", String::from_utf8_lossy(&e.stderr));
    let report = dir.path().join("report.json");
    let csv = dir.path().join("report.csv");
    let r = posekit(&["eval", "--dataset", s(&ds), "--estimates", s(&est), "--out", s(&report), "--csv", s(&csv), "--thresholds", "180,10,0.0001", "--min-visibility", "0"]);
    assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    let summary = stdout_json(&r);
    assert_eq!(summary["evaluated"], 6);
    let full: Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(full["records"].as_array().unwrap().len(), 6);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 7);
}

#[test]
fn plan_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let w = |name: &str, text: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let grasp = w(
        "mug.json",
        r#"{"category": "mug", "task": "pick_place", "grasp": {"quat_wxyz": [0, 1, 0, 0], "translation": [0, 0, 0.5]},
            "approach_axis": [0, 0, 1], "pregrasp_offset_m": 0.1}"#,
    );
    let est = w("est.json", r#"{"pose": {"quat_wxyz": [1, 0, 0, 0], "translation": [0, 0, 0.5]}, "scale": [0.08, 0.08, 0.1], "fitness": 0.001}"#);
    let ext = w("ext.json", r#"{"quat_wxyz": [1, 0, 0, 0], "translation": [0.3, 0, -0.3]}"#);
    let place = w("place.json", r#"{"pose": {"quat_wxyz": [1, 0, 0, 0], "translation": [0.2, 0.3, 0.05]}}"#);
    let args = ["plan", "--grasps", s(&grasp), "--category", "mug", "--task", "pick-and-place", "--estimate", s(&est), "--extrinsics", s(&ext)];
    assert_eq!(posekit(&args).status.code(), Some(2), "missing place target is a usage error");
    let mut with_place = args.to_vec();
    with_place.extend_from_slice(&["--place", s(&place)]);
    let out = posekit(&with_place);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let plan = stdout_json(&out);
    let phases: Vec<&str> = plan["waypoints"].as_array().unwrap().iter().map(|w| w["phase"].as_str().unwrap()).collect();
    assert_eq!(phases, ["pregrasp", "grasp", "lift", "transport", "release", "retreat"]);
    let grasp_t = &plan["waypoints"][1]["pose"]["translation"];
    assert!((grasp_t[2].as_f64().unwrap() - 0.25).abs() < 1e-12);
    let pre_t = &plan["waypoints"][0]["pose"]["translation"];
    assert!((pre_t[2].as_f64().unwrap() - 0.35).abs() < 1e-12);
}
