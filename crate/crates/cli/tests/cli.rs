use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use egostream_cli::cmd_inspect;
use egostream_core::stream::{write_stream, FrameRecord, StreamManifest};
use serde_json::{json, Value};

fn egostream(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_egostream"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_json(path: &Path, value: &Value) {
    fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
}

fn synth_suite(dir: &Path) -> Vec<PathBuf> {
    let cfg = dir.join("synth.json");
    write_json(
        &cfg,
        &json!({
            "version": 1,
            "suite": {
                "base": {
                    "num_classes": 5,
                    "feature_dim": 16,
                    "class_centroids": null,
                    "within_action_noise": 0.05,
                    "logit_sharpness": 0.3,
                    "segment_length": { "min_frames": 40, "max_frames": 90 },
                    "overlap_fraction": 0.3,
                    "overlap_length": 15,
                    "unknown_gap_probability": 0.1,
                    "unknown_noise": 0.3,
                    "seed": 3
                },
                "domains": ["D1", "D2"],
                "videos_per_domain": 2,
                "segments_per_video": 12
            }
        }),
    );
    let data = dir.join("data");
    let out = egostream(&[
        "--json",
        "synth",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn run_config(dir: &Path, manifests: &[PathBuf], threshold: f64, name: &str) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    let datasets: Vec<Value> = manifests
        .iter()
        .map(|m| json!({ "manifest": m, "train_domain": "D1" }))
        .collect();
    write_json(
        &path,
        &json!({
            "version": 1,
            "datasets": datasets,
            "protocol": {
                "mode": "online",
                "trimming": "untrimmed",
                "boundary": { "kind": "a2", "dbl": { "threshold": threshold }, "delta": 20 }
            },
            "output": { "json": format!("out/{name}.json"), "csv": format!("out/{name}.csv") },
            "seed": 1
        }),
    );
    path
}

#[test]
fn synth_then_online_run_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifests = synth_suite(dir.path());
    assert_eq!(manifests.len(), 4);
    let cfg = run_config(dir.path(), &manifests, 0.02, "a2");
    let out = egostream(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("mean unseen"));

    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/a2.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 1);
    let pairs = report["report"]["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 2);
    for p in pairs {
        let acc = p["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
    let csv = fs::read_to_string(dir.path().join("out/a2.csv")).unwrap();
    assert!(csv.starts_with("train,test,correct,total,accuracy\nD1,D1,"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn non_positive_threshold_fails_before_reading_streams() {
    let dir = tempfile::tempdir().unwrap();
    let missing = [dir.path().join("does_not_exist.json")];
    for tau in [0.0, -1.0] {
        let cfg = run_config(dir.path(), &missing, tau, "bad");
        let out = egostream(&["run", "--config", cfg.to_str().unwrap()]);
        assert!(!out.status.success());
        let err = stderr(&out);
        assert!(
            err.contains("invalid config") && err.contains("threshold"),
            "{err}"
        );
        assert!(!err.contains("does_not_exist"), "{err}");
    }
    assert!(!dir.path().join("out").exists());
}

#[test]
fn config_rejects_unknown_keys_and_versions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = run_config(dir.path(), &[dir.path().join("m.json")], 0.1, "cfg");
    let mut value: Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    value["extra"] = json!(true);
    write_json(&cfg, &value);
    let out = egostream(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("extra"), "{}", stderr(&out));

    value.as_object_mut().unwrap().remove("extra");
    value["version"] = json!(2);
    write_json(&cfg, &value);
    let out = egostream(&["run", "--config", cfg.to_str().unwrap()]);
    assert!(
        stderr(&out).contains("unsupported config version 2"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn identical_runs_write_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifests = synth_suite(dir.path());
    let cfg = run_config(dir.path(), &manifests, 0.02, "det");
    let report = dir.path().join("out/det.json");
    let mut outputs = Vec::new();
    for jobs in ["1", "3", "3"] {
        let out = egostream(&["--jobs", jobs, "run", "--config", cfg.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        outputs.push(fs::read(&report).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn sweep_and_curve_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let manifests = synth_suite(dir.path());
    let cfg = run_config(dir.path(), &manifests, 0.02, "sw");
    let cfg = cfg.to_str().unwrap();

    let out = egostream(&[
        "sweep",
        "--config",
        cfg,
        "--grid",
        "delta=1,5,10,20,30,40,50",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.path().join("out/sw.csv")).unwrap();
    assert_eq!(csv.lines().count(), 8);
    assert!(csv.lines().nth(1).unwrap().starts_with("delta,1,"));

    let out = egostream(&["sweep", "--config", cfg, "--grid", "tau=0"]);
    assert!(!out.status.success());
    let out = egostream(&["run", "--config", cfg, "--k", "4"]);
    assert!(
        !out.status.success(),
        "k does not apply to a two-fold config"
    );

    let out = egostream(&[
        "--json",
        "curve",
        "--config",
        cfg,
        "--fractions",
        "0.25,1.0",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let points: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(points.as_array().unwrap().len(), 2);
    let csv = fs::read_to_string(dir.path().join("out/sw.csv")).unwrap();
    assert!(csv.starts_with("fraction,accuracy"));

    let out = egostream(&["curve", "--config", cfg, "--fractions", "0,1"]);
    assert!(!out.status.success());
}

fn manifest(frames: u64) -> StreamManifest {
    StreamManifest {
        video_id: "v".into(),
        domain_id: "D1".into(),
        fps: 30.0,
        num_frames: frames,
        feature_dim: 3,
        num_classes: 2,
        class_names: vec!["a".into(), "b".into()],
    }
}

#[test]
fn inspect_header_only_stream() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.egws");
    write_stream(&[], &manifest(0), &path).unwrap();
    let out = egostream(&["--json", "inspect", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["num_frames"], 0);
    assert_eq!(summary["feature_dim"], 3);
    assert!(summary["logits"].as_array().unwrap().is_empty());
}

#[test]
fn inspect_rejects_corrupt_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.egws");
    let records: Vec<FrameRecord> = (0..4)
        .map(|t| FrameRecord::new(t, vec![0.0; 3], vec![1.0, 2.0]))
        .collect();
    write_stream(&records, &manifest(4), &path).unwrap();
    let mut bytes = fs::read(&path).unwrap();
    bytes[0] = b'X';
    fs::write(&path, bytes).unwrap();
    let out = egostream(&["inspect", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(
        stderr(&out).contains("stream format mismatch"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn inspect_reports_sibling_disagreements() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("v.egws");
    let records: Vec<FrameRecord> = (0..4)
        .map(|t| FrameRecord::new(t, vec![0.0; 3], vec![1.0, 2.0]))
        .collect();
    write_stream(&records, &manifest(4), &path).unwrap();
    fs::write(dir.path().join("v.json"), manifest(5).to_json().unwrap()).unwrap();
    fs::write(
        dir.path().join("v.csv"),
        "video_id,start_frame,stop_frame,label\nv,0,9,1\n",
    )
    .unwrap();
    let out = egostream(&["inspect", path.to_str().unwrap()]);
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("diagnostics  2"), "{text}");
}

#[test]
fn inspect_means_follow_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let manifests = synth_suite(dir.path());
    let stream = manifests[0].with_extension("egws");
    let summary = cmd_inspect(&stream).unwrap();
    assert!(summary.diagnostics.is_empty(), "{:?}", summary.diagnostics);

    let ds = egostream_core::stream::StreamDataset::load(&manifests[0]).unwrap();
    let n = ds.records.len() as f64;
    // Expected logit of class c: sharpness times its (blend-weighted) share
    // of frames; noise averages out at 0.1 / sqrt(n) per frame.
    for (c, stats) in summary.logits.iter().enumerate() {
        let mut expected = 0.0;
        for seg in ds.labeled_segments().filter(|s| s.label.class() == Some(c)) {
            expected += 0.3 * seg.len() as f64;
        }
        // Overlap frames split the sharpness between two classes.
        let tolerance = 0.3 * 15.0 * 12.0 / n + 5.0 * 0.5 / n.sqrt();
        assert!(
            (stats.mean - expected / n).abs() <= tolerance,
            "class {c}: {} vs {}",
            stats.mean,
            expected / n
        );
        assert!(stats.min <= stats.mean && stats.mean <= stats.max);
    }
}
