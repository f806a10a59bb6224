use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::Value;

fn pimdse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pimdse")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn space_json(dense: &str) -> String {
    format!(
        r#"{{"num_blocks":1,"dense_ops":["{dense}"],"sparse_ops":["EFC"],"dim_d":[16],"dim_s":[16],
        "weight_bits":[8],"dac_bits":[1],"cell_bits":[1],"xbar_size":[64],"adc_bits":[8],
        "num_sparse_features":4,"embedding_dim":16,"dense_in_dim":13,"embedding_rows":100}}"#
    )
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn degenerate_space_has_one_point() {
    let dir = tempfile::tempdir().unwrap();
    let space = write(dir.path(), "space.json", &space_json("FC"));
    assert_eq!(stdout(&pimdse(&["space", "count", "--space", &space])).trim(), "1");
}

#[test]
fn default_count_is_large_and_convention_is_printed() {
    let out = stdout(&pimdse(&["space", "count", "--convention"]));
    let mut lines = out.lines();
    let n = lines.next().unwrap();
    assert!(n.len() >= 53 && n.bytes().all(|b| b.is_ascii_digit()), "{n}");
    assert!(lines.next().is_some_and(|l| !l.is_empty()));
}

#[test]
fn sampling_is_deterministic() {
    let a = stdout(&pimdse(&["space", "sample", "--seed", "11", "-n", "3"]));
    let b = stdout(&pimdse(&["space", "sample", "--seed", "11", "-n", "3"]));
    assert_eq!(a, b);
    assert_eq!(a.lines().count(), 3);
    for line in a.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v.get("model").is_some() && v.get("reram").is_some());
    }
    assert_ne!(a, stdout(&pimdse(&["space", "sample", "--seed", "12", "-n", "3"])));
}

#[test]
fn map_and_simulate_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let sample = stdout(&pimdse(&["space", "sample", "--seed", "5"]));
    let point = write(dir.path(), "point.json", sample.trim());
    for cmd in ["map", "simulate"] {
        let a = stdout(&pimdse(&[cmd, "--point", &point]));
        let b = stdout(&pimdse(&[cmd, "--point", &point]));
        assert_eq!(a, b, "{cmd}");
        serde_json::from_str::<Value>(&a).unwrap();
    }
    let sim: Value = serde_json::from_str(&stdout(&pimdse(&["simulate", "--point", &point]))).unwrap();
    let tp = &sim["throughput"];
    assert_eq!(tp["bottleneck_stage"], sim["cost"]["bottleneck_stage"]);
    let t = tp["throughput"].as_f64().unwrap();
    let b = tp["bottleneck_time"].as_f64().unwrap();
    assert!((t * b - 1.0).abs() < 1e-12);
}

#[test]
fn programming_overlap_lowers_latency_for_dp() {
    let dir = tempfile::tempdir().unwrap();
    let space = write(dir.path(), "space.json", &space_json("DP"));
    let sample = stdout(&pimdse(&["space", "sample", "--space", &space]));
    let point = write(dir.path(), "point.json", sample.trim());
    let lat = |extra: &[&str]| -> f64 {
        let mut args = vec!["simulate", "--point", &point, "--space", &space];
        args.extend_from_slice(extra);
        let v: Value = serde_json::from_str(&stdout(&pimdse(&args))).unwrap();
        v["throughput"]["latency"].as_f64().unwrap()
    };
    let with = lat(&[]);
    let without = lat(&["--no-overlap"]);
    assert!(with < without, "{with} vs {without}");
}

#[test]
fn exit_codes_separate_parse_from_validation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{not json");
    let o = pimdse(&["map", "--point", &bad]);
    assert_eq!(o.status.code(), Some(2));

    let sample = stdout(&pimdse(&["space", "sample", "--seed", "1"]));
    let mut v: Value = serde_json::from_str(sample.trim()).unwrap();
    v["reram"]["adc_bits"] = Value::from(2);
    v["reram"]["dac_bits"] = Value::from(2);
    v["reram"]["cell_bits"] = Value::from(2);
    let invalid = write(dir.path(), "invalid.json", &v.to_string());
    let o = pimdse(&["map", "--point", &invalid]);
    assert_eq!(o.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    assert!(!o.stderr.is_empty());

    let missing = dir.path().join("nope.json");
    let o = pimdse(&["map", "--point", missing.to_str().unwrap()]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn short_search_writes_four_files_and_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "search.json",
        r#"{"num_generations": 1, "population_init_size": 16, "num_children": 4, "seed": 9}"#,
    );
    let run = |name: &str| -> Vec<String> {
        let out = dir.path().join(name);
        let start = Instant::now();
        let o = pimdse(&["search", "--search-config", &cfg, "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
        assert!(start.elapsed() < Duration::from_secs(10));
        let mut files: Vec<String> =
            fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
        files.sort();
        assert_eq!(files, ["criterion.csv", "manifest.json", "search_log.json", "top15.json"]);
        let manifest: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["status"], "complete");
        let csv = fs::read_to_string(out.join("criterion.csv")).unwrap();
        assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);
        let top: Value = serde_json::from_str(&fs::read_to_string(out.join("top15.json")).unwrap()).unwrap();
        top["entries"].as_array().unwrap().iter().map(|e| e["point_id"].as_str().unwrap().to_string()).collect()
    };
    let a = run("a");
    assert!(!a.is_empty());
    assert_eq!(a, run("b"));
}

#[test]
fn shipped_space_config_matches_builtin_default() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/space_default.json");
    let a = stdout(&pimdse(&["space", "count", "--space", cfg.to_str().unwrap()]));
    assert_eq!(a, stdout(&pimdse(&["space", "count"])));
}
