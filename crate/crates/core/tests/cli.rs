mod common;

use std::path::Path;
use std::process::{Command, Output};

use xrl_core::dataset::{load_dataset, save_dataset};

fn xrl(out: &Path, args: &[&str]) -> Output {
    Command::new(common::xrl_binary())
        .env_remove("XRL_OUT_DIR")
        .arg("--out-dir")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = xrl(out, args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{args:?}: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    o
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn synth_then_validate() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["synth", "--layout", "cliffwalk-4x4", "--episodes", "200", "--seed", "7"],
    );
    ok(dir.path(), &["validate"]);
    let info = ok(dir.path(), &["info"]);
    assert!(String::from_utf8_lossy(&info.stdout).contains("episodes"));
    assert_eq!(
        load_dataset(&dir.path().join("dataset.xrld"))
            .unwrap()
            .dones
            .iter()
            .filter(|&&d| d)
            .count(),
        200
    );
}

#[test]
fn missing_stage_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--episodes", "20"]);
    for stage in ["analyze", "samdp", "terminal-paths", "render-all"] {
        let o = xrl(dir.path(), &[stage]);
        assert_eq!(o.status.code(), Some(2), "{stage}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("cluster"), "{stage}");
    }
    assert_eq!(xrl(dir.path(), &["cluster"]).status.code(), Some(2));
    assert_eq!(xrl(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        xrl(dir.path(), &["cluster", "--features", "nonsense"]).status.code(),
        Some(2)
    );
}

#[test]
fn pipeline_artifacts_and_self_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        d,
        &["synth", "--layout", "openfield-8x8", "--episodes", "40", "--seed", "3"],
    );
    ok(d, &["embed", "--iterations", "120"]);
    ok(d, &["cluster", "--features", "latents", "--k", "5"]);
    ok(d, &["analyze"]);
    ok(d, &["samdp"]);
    ok(d, &["terminal-paths"]);
    for name in [
        "embeddings.xrld",
        "clusters.xrld",
        "metrics.csv",
        "metrics.json",
        "representatives.json",
        "metric_confidence.svg",
        "overlay_action.svg",
        "samdp_complete.dot",
        "samdp_simplified.svg",
        "samdp_likely.json",
        "samdp_terminal-paths.dot",
    ] {
        assert!(d.join(name).is_file(), "missing {name}");
    }

    ok(d, &["paths", "--from", "3", "--to", "3"]);
    let doc = json(&d.join("paths_3_3.json"));
    assert_eq!(doc["reachable"], true);
    assert_eq!(doc["path"], serde_json::json!([]));
    assert_eq!(doc["probability"], 1.0);

    let dot = std::fs::read_to_string(d.join("samdp_complete.dot")).unwrap();
    assert!(dot.contains("label=\"a="));
    ok(d, &["samdp", "--views", "complete", "--no-labels"]);
    let plain = std::fs::read_to_string(d.join("samdp_complete.dot")).unwrap();
    assert!(!plain.contains("label=\"a="));
    graphviz_rust::parse(&plain).unwrap();
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [a.path(), b.path()] {
        ok(
            dir,
            &[
                "synth",
                "--layout",
                "corridor",
                "--episodes",
                "30",
                "--seed",
                "5",
                "--epsilon",
                "0.3",
            ],
        );
        ok(dir, &["embed", "--iterations", "100"]);
        ok(dir, &["cluster", "--features", "latents", "--k", "3"]);
        ok(dir, &["render-all"]);
    }
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() > 10);
    for name in names {
        let x = std::fs::read(a.path().join(&name)).unwrap();
        let y = std::fs::read(b.path().join(&name)).unwrap();
        assert!(x == y, "{name:?} differs");
    }
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        "seed = 4\n[synth]\nlayout = \"corridor\"\nepisodes = 12\nepsilon = 0.5\n",
    )
    .unwrap();
    let cfg = config.to_str().unwrap();

    ok(dir.path(), &["--config", cfg, "synth"]);
    let d = load_dataset(&dir.path().join("dataset.xrld")).unwrap();
    assert_eq!(d.dones.iter().filter(|&&x| x).count(), 12);
    assert_eq!(d.meta.seed, 4);

    ok(
        dir.path(),
        &["--config", cfg, "synth", "--episodes", "7", "--seed", "9"],
    );
    let d = load_dataset(&dir.path().join("dataset.xrld")).unwrap();
    assert_eq!(d.dones.iter().filter(|&&x| x).count(), 7);
    assert_eq!(d.meta.seed, 9);

    std::fs::write(&config, "[synth]\nbogus = 1\n").unwrap();
    assert_eq!(xrl(dir.path(), &["--config", cfg, "synth"]).status.code(), Some(2));
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(common::xrl_binary())
        .env("XRL_OUT_DIR", &target)
        .args(["synth", "--episodes", "5"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(target.join("dataset.xrld").is_file());
}

#[test]
fn validate_rejects_bad_data() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["synth", "--episodes", "10"]);
    let path = dir.path().join("dataset.xrld");
    let mut d = load_dataset(&path).unwrap();
    d.dist_probs.as_mut().unwrap()[[0, 0]] += 0.5;
    save_dataset(&d, &path).unwrap();
    assert_eq!(xrl(dir.path(), &["validate"]).status.code(), Some(1));

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    assert_eq!(xrl(dir.path(), &["validate"]).status.code(), Some(1));
}
