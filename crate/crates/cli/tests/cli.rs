use std::path::Path;
use std::process::{Command, Output};

use oanbv::scene::{generate_scene, Family, Scene};
use serde_json::Value;

fn oanbv(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oanbv"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn invalid_arguments_exit_2_and_write_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"trial": {"iterationz": 3}}"#).unwrap();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (vec!["run", "--weights", "0.5,0.6,0.2"], "sum"),
        (vec!["run", "--weights", "0.5,0.5"], "three weights"),
        (vec!["run", "--methods", "oa_nbv,magic"], "magic"),
        (vec!["scene", "--family", "lunar"], "lunar"),
        (vec!["ablate", "alignment", "--trials", "3"], "--seeds"),
        (vec!["ablate", "viewpoints", "--seeds", "3"], "--trials"),
        (vec!["sweep", "--step", "0.3"], "step"),
        (vec!["run", "--workers", "0"], "workers"),
        (vec!["scene", "--config", cfg.to_str().unwrap()], "iterationz"),
        (vec!["teleport"], "teleport"),
    ];
    for (i, (args, needle)) in cases.into_iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let o = oanbv(&args, &out);
        let err = String::from_utf8_lossy(&o.stderr);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {err}");
        assert!(err.contains(needle), "{args:?}: {err}");
        assert!(!out.exists(), "{args:?} left output behind");
    }
}

#[test]
fn scene_dump_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("scene");
    let o = oanbv(&["scene", "--seed", "3", "--family", "outdoor"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json = std::fs::read_to_string(out.join("scene.json")).unwrap();
    let lib = generate_scene(Family::Outdoor, 3).unwrap();
    assert_eq!(json, lib.to_json().unwrap());
    assert_eq!(Scene::from_json(&json).unwrap().target.vertices, lib.target.vertices);

    let m = manifest(&out);
    assert_eq!(m["command"], "scene");
    assert_eq!(m["seeds"], serde_json::json!([3]));
    assert_eq!(m["config"]["scene"]["family"], "outdoor");
    let mut listed: Vec<String> = m["files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().into()).collect();
    listed.push("manifest.json".into());
    listed.sort();
    let mut on_disk: Vec<String> =
        std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    on_disk.sort();
    assert_eq!(listed, on_disk);

    let obj = std::fs::read_to_string(out.join("target.obj")).unwrap();
    assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), lib.target.len());
    let cands = std::fs::read_to_string(out.join("candidates.csv")).unwrap();
    let scores = std::fs::read_to_string(out.join("scores.csv")).unwrap();
    assert!(cands.lines().count() > 1);
    assert_eq!(cands.lines().count(), scores.lines().count());
}

#[test]
fn run_writes_one_row_per_iteration() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = oanbv(
        &["run", "--seed", "11", "--scenes", "2", "--iterations", "1", "--methods", "oa_nbv,shell_oa"],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trials = std::fs::read_to_string(out.join("trials.csv")).unwrap();
    let rows: Vec<&str> = trials.lines().skip(1).collect();
    assert_eq!(rows.len(), 2 * 2 * 2);
    assert!(rows.iter().all(|r| r.starts_with("11,") || r.starts_with("12,")));
    let m = manifest(&out);
    assert_eq!(m["seeds"], serde_json::json!([11, 12]));
    assert_eq!(m["config"]["trial"]["iterations"], 1);
    assert_eq!(m["extra"]["peaks"].as_array().unwrap().len(), 2);
    assert!(m["detection_failure_rule"].as_str().unwrap().contains("last valid"));
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert!(agg.lines().any(|l| l.contains("peak")));
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 5, "scene": {"family": "outdoor"}, "trial": {"stride": 4}}"#).unwrap();
    let out = tmp.path().join("o");
    let o = oanbv(&["scene", "--config", cfg.to_str().unwrap(), "--seed", "6"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["config"]["seed"], 6);
    assert_eq!(m["config"]["scene"]["family"], "outdoor");
    assert_eq!(m["config"]["trial"]["stride"], 4);
    assert_eq!(m["config"]["trial"]["iterations"], 5);
}
