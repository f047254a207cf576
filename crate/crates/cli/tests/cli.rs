use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use sparseload_cli::manifest::{sha256_hex, Manifest};

fn sparseload(args: &[&str], threads: Option<&str>) -> (i32, Value) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sparseload"));
    cmd.args(args).env_remove("SPARSELOAD_THREADS");
    if let Some(t) = threads {
        cmd.env("SPARSELOAD_THREADS", t);
    }
    let out = cmd.output().expect("binary runs");
    let stdout = String::from_utf8(out.stdout).unwrap();
    let value = serde_json::from_str(stdout.trim()).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}): {stdout}\nstderr: {}", String::from_utf8_lossy(&out.stderr))
    });
    (out.status.code().unwrap(), value)
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Five fast models on forty synthetic days.
fn tiny_config() -> Value {
    json!({
        "schema_version": 1,
        "seed": 3,
        "data": { "source": "synthetic", "spec": { "n_days": 40 } },
        "models": ["persistence", "sarima", "prophet", "xgboost", "dlinear"],
        "settings": {
            "train": { "epochs": 2, "learning_rate": 0.001 },
            "gbt": { "n_trees": 20 },
            "sarima": { "order": { "p": 2, "d": 0, "q": 1 } },
            "prophet": { "seasonalities": [{ "period": 24.0, "order": 3 }] }
        },
        "window": { "seq_len": 32 },
        "analysis": { "acf_max_lag": 48 },
        "agreement": [["sarima", "prophet"]]
    })
}

#[test]
fn missing_csv_path_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({ "schema_version": 1, "seed": 1, "data": { "source": "csv", "path": "absent.csv" } }),
    );
    let (code, err) = sparseload(&["interpolate", cfg.to_str().unwrap()], None);
    assert_eq!(code, 2);
    assert_eq!(err["error"], "config");
    assert_eq!(err["field"], "data.path");
    assert_eq!(err["schema_version"], 1);
}

#[test]
fn missing_seed_and_bad_thread_count_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &json!({ "schema_version": 1, "data": { "source": "synthetic" } }));
    let (code, err) = sparseload(&["run", cfg.to_str().unwrap()], None);
    assert_eq!((code, err["field"].as_str()), (2, Some("seed")));

    let cfg = write_config(dir.path(), "ok.json", &tiny_config());
    let (code, err) = sparseload(&["interpolate", cfg.to_str().unwrap()], Some("many"));
    assert_eq!((code, err["field"].as_str()), (2, Some("SPARSELOAD_THREADS")));
}

#[test]
fn runtime_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "when,what\n2021-01-01 00:00:00,1\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({ "schema_version": 1, "seed": 1, "data": { "source": "csv", "path": "bad.csv" } }),
    );
    let (code, err) = sparseload(&["interpolate", cfg.to_str().unwrap()], None);
    assert_eq!((code, err["error"].as_str()), (1, Some("runtime")));
    assert!(err["message"].as_str().unwrap().contains("Datetime"), "{err}");

    let cfg = write_config(dir.path(), "tiny.json", &tiny_config());
    let out = dir.path().join("empty");
    let (code, err) = sparseload(&["evaluate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], None);
    assert_eq!(code, 1, "{err}");
    assert!(err["message"].as_str().unwrap().contains("train"), "{err}");
}

#[test]
fn chained_commands_reproduce_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "tiny.json", &tiny_config());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("run"), dir.path().join("chain"));
    let (code, summary) = sparseload(&["run", cfg, "--out", a.to_str().unwrap()], Some("1"));
    assert_eq!(code, 0, "{summary}");
    assert_eq!(summary["status"], "ok");
    for step in ["interpolate", "analyze", "train", "evaluate"] {
        let (code, s) = sparseload(&[step, cfg, "--out", b.to_str().unwrap()], Some("1"));
        assert_eq!(code, 0, "{step}: {s}");
    }
    let (fa, fb) = (files(&a), files(&b));
    assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
    for (k, v) in &fa {
        assert!(fb[k] == *v, "{k} differs");
    }

    // The manifest covers every other file, with matching digests.
    let manifest: Manifest = serde_json::from_slice(&fa["manifest.json"]).unwrap();
    let listed: Vec<&String> = manifest.artifacts.keys().collect();
    let present: Vec<&String> = fa.keys().filter(|k| *k != "manifest.json").collect();
    assert_eq!(listed, present);
    for (k, digest) in &manifest.artifacts {
        assert_eq!(*digest, sha256_hex(&fa[k]), "{k}");
    }
    assert_eq!(manifest.seed, 3);
    assert_eq!(summary["artifacts"], manifest.artifacts.len());

    for (k, bytes) in fa.iter().filter(|(k, _)| k.ends_with(".json")) {
        let v: Value = serde_json::from_slice(bytes).unwrap();
        assert_eq!(v["schema_version"], 1, "{k}");
    }
    for name in ["persistence", "sarima", "prophet", "xgboost", "dlinear"] {
        assert!(fa.contains_key(&format!("reports/{name}.json")), "{name}");
    }
    for expected in [
        "interpolation/imputed.csv",
        "interpolation/gaussian_table.json",
        "analysis/statistics.json",
        "analysis/acf.csv",
        "analysis/decomposition.csv",
        "analysis/kde.csv",
        "analysis/fits.csv",
        "comparison.csv",
        "comparison.json",
        "bland_altman/sarima_vs_prophet.csv",
        "models/dlinear_history.csv",
    ] {
        assert!(fa.contains_key(expected), "{expected}");
    }
    let acf = String::from_utf8(fa["analysis/acf.csv"].clone()).unwrap();
    assert_eq!(acf.lines().count(), 1 + 49);
    assert!(acf.lines().nth(1).unwrap().starts_with("0,1"));
}

#[test]
fn worker_count_does_not_change_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config();
    config["models"] = json!(["persistence", "sarima", "xgboost", "dlinear"]);
    let cfg = write_config(dir.path(), "tiny.json", &config);
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("one"), dir.path().join("three"));
    assert_eq!(sparseload(&["train", cfg, "--out", a.to_str().unwrap()], Some("1")).0, 0);
    assert_eq!(sparseload(&["train", cfg, "--out", b.to_str().unwrap()], Some("3")).0, 0);
    assert_eq!(files(&a), files(&b));
}

#[test]
fn bundled_config_produces_the_full_inventory() {
    let dir = tempfile::tempdir().unwrap();
    let bundled = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/synthetic_small.json");
    let mut config: Value = serde_json::from_str(&std::fs::read_to_string(bundled).unwrap()).unwrap();
    // Same layout, shrunk so the inventory check stays quick.
    config["data"]["spec"]["n_days"] = json!(50);
    config["settings"]["train"]["epochs"] = json!(1);
    config["settings"]["forest"] = json!({ "n_trees": 10 });
    config["settings"]["gbt"] = json!({ "n_trees": 10 });
    config["window"]["seq_len"] = json!(24);
    let cfg = write_config(dir.path(), "small.json", &config);
    let out = dir.path().join("out");
    let (code, summary) = sparseload(&["run", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()], Some("2"));
    assert_eq!(code, 0, "{summary}");
    let f = files(&out);
    let reports = f.keys().filter(|k| k.starts_with("reports/") && k.ends_with(".json")).count();
    assert_eq!(reports, 10);
    assert!(f.contains_key("manifest.json") && f.contains_key("comparison.csv"));
    let comparison = String::from_utf8(f["comparison.csv"].clone()).unwrap();
    assert_eq!(comparison.lines().count(), 11);
    assert_eq!(comparison.lines().next().unwrap(), "rank,model,mae,mape,mse,n");
    assert!(f.contains_key("bland_altman/lstm_vs_bilstm.csv"));
}

#[test]
fn csv_source_with_weather_holidays_and_operating_hours() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/dayton_2017.csv");
    let text = std::fs::read_to_string(fixture).unwrap();
    let slice: Vec<&str> = text.lines().take(1 + 24 * 30).collect();
    std::fs::write(dir.path().join("load.csv"), slice.join("\n")).unwrap();
    let mut weather = String::from("timestamp,avg_temperature,wind_speed,relative_humidity,precipitation\n");
    for line in &slice[1..] {
        let ts = line.split(',').next().unwrap();
        weather.push_str(&format!("{ts},21.5,3.0,70,0\n"));
    }
    std::fs::write(dir.path().join("weather.csv"), weather).unwrap();
    std::fs::write(dir.path().join("holidays.txt"), "# new year\n2017-01-01\n2017-01-16\n").unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        &json!({
            "schema_version": 1,
            "seed": 5,
            "data": {
                "source": "csv",
                "path": "load.csv",
                "weather": "weather.csv",
                "holidays": "holidays.txt",
                "operating_hours": [8, 23],
                "sparsity": 0.3
            },
            "output_dir": "out"
        }),
    );
    let cfg = cfg.to_str().unwrap();
    assert_eq!(sparseload(&["interpolate", cfg], None).0, 0);
    let (code, s) = sparseload(&["analyze", cfg], None);
    assert_eq!(code, 0, "{s}");
    let out = dir.path().join("out");
    let table: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("interpolation/gaussian_table.json")).unwrap()).unwrap();
    assert!((table["sparsity"].as_f64().unwrap() - 0.3).abs() < 1e-3);
    assert!(table["table"]["hours"][3].is_null());
    let imputed = std::fs::read_to_string(out.join("interpolation/imputed.csv")).unwrap();
    let first_day: Vec<&str> = imputed.lines().skip(1).take(24).collect();
    assert!(first_day.iter().all(|l| l.contains(",21.5,3,70,0,1,")), "{}", first_day[0]);
    let stats: Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("analysis/statistics.json")).unwrap()).unwrap();
    assert_eq!(stats["period"], 16);
    assert_eq!(stats["n_rows"], 30 * 16);
    assert!(stats["adf"]["statistic"].is_number());
}
