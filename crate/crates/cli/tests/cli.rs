use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn pulsenet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulsenet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn edited(dir: &Path, name: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = std::fs::read_to_string(config(name)).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn shipped_configs_validate() {
    for name in [
        "demo_two_chip.json",
        "demo_two_chip_k2.json",
        "saturating.json",
        "link_saturation.json",
        "torus_poisson.json",
    ] {
        let o = pulsenet(&["validate", "--config", config(name).to_str().unwrap()]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}

#[test]
fn zero_capacity_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = edited(dir.path(), "demo_two_chip.json", |v| {
        v["nodes"][0]["buckets"][0]["capacity"] = 0.into();
    });
    let o = pulsenet(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nodes[0].buckets[0].capacity"), "{}", stderr(&o));
}

#[test]
fn absent_destination_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = edited(dir.path(), "demo_two_chip.json", |v| {
        v["nodes"][0]["buckets"][0]["dest_node"] = 7.into();
    });
    let o = pulsenet(&["validate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("nodes[0].routes[0]"), "{err}");
    assert!(err.contains("node 7"), "{err}");
}

#[test]
fn missing_file_is_a_config_error() {
    let o = pulsenet(&["validate", "--config", "/nonexistent/scenario.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn drop_limit_breach_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = edited(dir.path(), "link_saturation.json", |v| {
        v["max_drop_fraction"] = 0.01.into();
    });
    let o = pulsenet(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("exceeds limit"));
}

#[test]
fn run_writes_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let o = pulsenet(&[
        "run",
        "--config",
        config("demo_two_chip.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let line = String::from_utf8(o.stdout).unwrap();
    assert!(line.contains("delivered 100 dropped 0 mean latency 8000.000 ns"), "{line}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["latency"]["mean_ns"], 8000.0);
    assert_eq!(report["seed"], 1);
    let spikes = std::fs::read_to_string(out.join("spikes.csv")).unwrap();
    assert!(spikes.starts_with("chip_id,neuron,emit_time_ns,timestamp8\n"));
    assert_eq!(spikes.lines().count(), 201);
    assert!(out.join("latency_samples.csv").exists());
    assert!(out.join("isi_samples.csv").exists());
}

#[test]
fn seed_and_duration_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r");
    let o = pulsenet(&[
        "run",
        "--config",
        config("demo_two_chip.json").to_str().unwrap(),
        "--seed",
        "9",
        "--duration",
        "10500",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 9);
    assert_eq!(report["duration_ns"], 10500);
    assert_eq!(report["totals"]["source_emissions"], 10);
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep").join("agg.csv");
    let o = pulsenet(&[
        "sweep",
        "--config",
        config("saturating.json").to_str().unwrap(),
        "--param",
        "bucket_capacity",
        "--values",
        "1,2,4",
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("1,0.6666"), "{}", lines[1]);
}

#[test]
fn sweep_prints_table_without_out() {
    let o = pulsenet(&[
        "sweep",
        "--config",
        config("demo_two_chip.json").to_str().unwrap(),
        "--param",
        "bucket_capacity",
        "--values",
        "1,8",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 3);
}

#[test]
fn sweep_rejects_zero_capacity() {
    let o = pulsenet(&[
        "sweep",
        "--config",
        config("demo_two_chip.json").to_str().unwrap(),
        "--param",
        "bucket_capacity",
        "--values",
        "0,1",
    ]);
    assert_eq!(o.status.code(), Some(1));
}
