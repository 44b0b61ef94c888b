use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const MIDDLE_THIRDS: &str = r#"{
  "initial_interval": ["0/1", "1/1"],
  "levels": [
    {"n": 2, "c": "1/3", "gaps": ["0/1", "1/3", "0/1"]},
    {"n": 2, "c": "1/3", "gaps": ["0/1", "1/9", "0/1"]},
    {"n": 2, "c": "1/3", "gaps": ["0/1", "1/27", "0/1"]}
  ]
}"#;

fn hps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hps"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn run_in(dir: &Path, command: &str, config: &str, out: &str) -> (Output, std::path::PathBuf) {
    let cfg = write_config(dir, &format!("{out}.json"), config);
    let out_dir = dir.join(out);
    let o = hps(&[command, &cfg, "--out", out_dir.to_str().unwrap()]);
    (o, out_dir)
}

#[test]
fn validate_middle_thirds_succeeds_with_no_violations() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_in(tmp.path(), "validate", MIDDLE_THIRDS, "mt");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["toolkit"], "hps");
    assert_eq!(report["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["command"], "validate");
    assert_eq!(report["config"]["depth"], 3);
    assert_eq!(report["result"]["validation"]["ok"], true);
    assert_eq!(
        report["result"]["validation"]["violations"],
        Value::Array(vec![])
    );
    assert!(out.join("meta.json").exists());
}

#[test]
fn validate_reports_n_c_violation_with_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = r#"{"initial_interval": ["0/1", "1/1"],
        "levels": [{"n": 2, "c": "3/5", "gaps": ["0/1", "0/1", "0/1"]}]}"#;
    let (o, out) = run_in(tmp.path(), "validate", bad, "bad");
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("params/validate"), "{stderr}");
    let report = read_json(&out.join("report.json"));
    let violations = report["result"]["validation"]["violations"]
        .as_array()
        .unwrap();
    assert!(violations.iter().any(|v| v["rule"] == "nc_ge_one"));
    let witness = read_json(&out.join("witness_params_validate.json"));
    assert_eq!(witness["stage"], "params/validate");
    assert!(witness["witness"]["violations"].is_array());
}

#[test]
fn config_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let unknown = r#"{"generator": {"kind": "middle_thirds", "depth": 3}, "colour": "red"}"#;
    let (o, _) = run_in(tmp.path(), "validate", unknown, "unknown");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown field"));

    let both = r#"{"generator": {"kind": "middle_thirds", "depth": 3},
        "initial_interval": ["0/1", "1/1"],
        "levels": [{"n": 2, "c": "1/3", "gaps": ["0/1", "1/3", "0/1"]}]}"#;
    let (o, _) = run_in(tmp.path(), "validate", both, "both");
    assert_eq!(o.status.code(), Some(1));

    let float_rational = r#"{"initial_interval": ["0/1", "1/1"],
        "levels": [{"n": 2, "c": "0.333", "gaps": ["0/1", "1/3", "0/1"]}]}"#;
    let (o, _) = run_in(tmp.path(), "validate", float_rational, "float");
    assert_eq!(o.status.code(), Some(1));

    let o = hps(&[
        "validate",
        tmp.path().join("missing.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = hps(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn catalog_is_sorted_and_stable() {
    let a = hps(&["catalog"]);
    let b = hps(&["catalog"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    let kinds = |key: &str| -> Vec<String> {
        v[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["kind"].as_str().unwrap().to_string())
            .collect()
    };
    let maps = kinds("maps");
    let generators = kinds("generators");
    assert!(maps.contains(&"power".to_string()));
    assert!(generators.contains(&"uniform_cantor".to_string()));
    let mut sorted = maps.clone();
    sorted.sort();
    assert_eq!(maps, sorted);
    let mut sorted = generators.clone();
    sorted.sort();
    assert_eq!(generators, sorted);
}

#[test]
fn depth_and_seed_flags_override_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "g.json",
        r#"{"generator": {"kind": "middle_thirds", "depth": 3}, "seed": 1}"#,
    );
    let out = tmp.path().join("o");
    let o = hps(&[
        "construct",
        &cfg,
        "--depth",
        "5",
        "--seed",
        "9",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["config"]["depth"], 5);
    assert_eq!(report["config"]["seed"], 9);
    assert_eq!(report["result"]["levels"].as_array().unwrap().len(), 6);
}

#[test]
fn construct_dumps_levels_and_star_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let (o, out) = run_in(tmp.path(), "construct", MIDDLE_THIRDS, "c");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(out.join("series_intervals.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("level,word,left,right,star"));
    let rows: Vec<&str> = lines.collect();
    // 1 + 2 + 4 + 8 basic intervals, then star levels 0..=2.
    assert_eq!(rows.len(), 15 + 7);
    assert!(rows.contains(&"2,1.2,2/9,1/3,false"));
    assert!(rows.contains(&"1,2,2/3,1/1,true"));
    let report = read_json(&out.join("report.json"));
    let checks = report["result"]["checks"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["passed"] == true));
}

#[test]
fn hierarchy_regroups_thirteen_children() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"generator": {"kind": "uniform_cantor",
        "params": {"n": [13, 2], "c": ["1/26", "1/3"]}, "depth": 3}}"#;
    let (o, out) = run_in(tmp.path(), "hierarchy", cfg, "h");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["result"]["hierarchy"]["modulus"], 3);
    assert_eq!(report["result"]["hierarchy"]["markers"][1], 2);
    let csv = fs::read_to_string(out.join("series_hierarchy.csv")).unwrap();
    let level_one = csv.lines().filter(|l| l.starts_with("1,")).count();
    assert_eq!(level_one, 3);
    for name in ["level_lengths", "ratios", "subsequence"] {
        assert!(out.join(format!("series_{name}.csv")).exists());
    }
}

#[test]
fn probe_of_identity_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"generator": {"kind": "middle_thirds", "depth": 2},
        "probe": {"samples": 2000, "rho": [3.0]}}"#;
    let (o, out) = run_in(tmp.path(), "probe", cfg, "p");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let env = &read_json(&out.join("report.json"))["result"]["envelope"];
    assert!((env["p"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    assert!((env["q"].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    assert!((env["K"]["3"].as_f64().unwrap() - 3.0).abs() <= 1e-9);
}

#[test]
fn measure_and_dim_write_series() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"generator": {"kind": "middle_thirds", "depth": 8},
        "map": {"kind": "power", "alpha": 2.0},
        "scales": {"base": 3, "min_exp": 1, "max_exp": 8}}"#;
    let (o, out) = run_in(tmp.path(), "measure", cfg, "m");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(out.join("series_ratio_scan.csv").exists());
    assert!(out.join("series_ball_scan.csv").exists());
    let report = read_json(&out.join("report.json"));
    for v in report["result"]["per_d"].as_array().unwrap() {
        assert!(v["max_mass_drift"].as_f64().unwrap() <= 1e-12);
    }

    let (o, out) = run_in(tmp.path(), "dim", cfg, "d");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = fs::read_to_string(out.join("series_box_set.csv")).unwrap();
    let counts: Vec<u64> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(counts, (1..=8).map(|j| 1u64 << j).collect::<Vec<_>>());
    assert!(out.join("series_box_image.csv").exists());
    assert!(out.join("series_formula.csv").exists());
}

#[test]
fn experiment_on_near_full_reaches_the_formula_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"generator": {"kind": "near_full", "depth": 8},
        "map": {"kind": "power", "alpha": 2.0}}"#;
    let (o, out) = run_in(tmp.path(), "experiment", cfg, "e");
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["config"]["formula_depth"], 32);
    assert!(report["result"]["formula"]["tail"].as_f64().unwrap() >= 0.96);
    for name in ["formula", "box_set", "box_image", "d_trend"] {
        assert!(out.join(format!("series_{name}.csv")).exists(), "{name}");
    }
}

#[test]
fn identical_runs_write_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"generator": {"kind": "near_full", "depth": 7},
        "map": {"kind": "shifted_power", "alpha": 0.5, "shift": 0.1},
        "ball": {"points": 8, "radii_per_point": 2}, "seed": 4}"#;
    let (a, out_a) = run_in(tmp.path(), "experiment", cfg, "a");
    let (b, out_b) = run_in(tmp.path(), "experiment", cfg, "b");
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let mut names: Vec<_> = fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .filter(|n| n != "meta.json")
        .collect();
    names.sort();
    assert!(names.len() >= 5);
    for name in names {
        assert_eq!(
            fs::read(out_a.join(&name)).unwrap(),
            fs::read(out_b.join(&name)).unwrap(),
            "{name:?}"
        );
    }
}
