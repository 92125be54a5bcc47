use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use penreflect_cli::commands::{self, RunOptions};
use penreflect_cli::config::LoadedConfig;

const HALF_SPACE: &str = r#"{
  "domain": {"dimension": 2, "shape": {"kind": "half_space", "axis": 1, "offset": 0.0}},
  "coefficients": {
    "drift": {"kind": "constant", "value": [0.0, 0.0]},
    "diffusion": {"kind": "constant", "matrix": [[1.0, 0.0], [0.0, 1.0]]}
  },
  "reflection": {"kind": "constant", "vector": [1.0, 1.0]},
  "penalty": {"family": FAMILY, "n_grid": [4, 16, 64]},
  "integrator": {"horizon": 1.0, "dt": 0.01, "paths": 200, "master_seed": 5, "initial": [0.0, 0.5]},
  "reference": {"kind": "halfspace_oblique", "dt": 0.001},
  "diagnostics": {"checks": ["ks_monotone", "min_phi_monotone", "penalty_direction"]},
  "output": {"timestamped": false}
}"#;

fn config(family: &str) -> String {
    HALF_SPACE.replace("FAMILY", family)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_penreflect")).args(args).output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn options(out: &Path) -> RunOptions {
    RunOptions {
        out: Some(out.to_path_buf()),
        ..RunOptions::default()
    }
}

#[test]
fn config_round_trip() {
    let a = LoadedConfig::parse(&config(r#"{"kind": "exponential"}"#), None).unwrap().config;
    let b = LoadedConfig::parse(&a.to_json(), None).unwrap().config;
    assert_eq!(a, b);
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn certify_verdicts_per_family() {
    let tmp = tempfile::tempdir().unwrap();
    let verdicts = |family: &str| {
        let loaded = LoadedConfig::parse(&config(family), None).unwrap();
        let o = commands::certify(&loaded, &options(tmp.path())).unwrap();
        o.verdicts.iter().map(|v| (v.check.clone(), v.pass)).collect::<Vec<_>>()
    };
    let all = |pass: [bool; 4]| {
        ["spike", "singularity", "emulation", "floor"]
            .iter()
            .map(|s| s.to_string())
            .zip(pass)
            .collect::<Vec<_>>()
    };
    assert_eq!(verdicts(r#"{"kind": "exponential"}"#), all([true; 4]));
    let bump = r#"{"kind": "scaled_bump", "h": "negative_unit_interval", "a_exponent": 2.0, "c_exponent": 1.0}"#;
    assert_eq!(verdicts(bump), all([true; 4]));
    let constant = verdicts(r#"{"kind": "constant", "level": 1.0}"#);
    assert!(!constant[0].1, "{constant:?}");
    let projection = verdicts(r#"{"kind": "projection"}"#);
    assert!(!projection[2].1);
}

#[test]
fn projection_emulation_defect_is_the_angle_gap() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &config(r#"{"kind": "projection"}"#));
    let out = tmp.path().join("out");
    let (code, stdout, _) = run_cli(&["certify", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(stdout.contains("emulation: FAIL"), "{stdout}");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("certify.json")).unwrap()).unwrap();
    let expected = (2.0 - 2.0f64.sqrt()).sqrt();
    for row in report["emulation"].as_array().unwrap() {
        let d = row["defect"].as_f64().unwrap();
        assert!((d - expected).abs() < 1e-3 && (d - 0.7654).abs() < 1e-3, "{d}");
    }
    let csv = fs::read_to_string(out.join("certify.csv")).unwrap();
    assert!(csv.starts_with("check,n,delta,eps,level,value\n"));
    assert!(out.join("metadata.json").exists());
}

#[test]
fn exponential_certify_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &config(r#"{"kind": "exponential"}"#));
    let out = tmp.path().join("out");
    let (code, stdout, stderr) = run_cli(&["certify", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{stdout}{stderr}");
    assert_eq!(stdout.matches(": PASS").count(), 4);
}

#[test]
fn zero_paths_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config(r#"{"kind": "exponential"}"#).replace("\"paths\": 200", "\"paths\": 0");
    let path = write_config(tmp.path(), &text);
    let (code, _, stderr) = run_cli(&["converge", "--config", path.to_str().unwrap(), "--out", "/nonexistent"]);
    assert_eq!(code, 2);
    assert!(stderr.contains("config.json:9:"), "{stderr}");
    assert!(stderr.contains("paths"), "{stderr}");
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config(r#"{"kind": "exponential"}"#).replace("\"n_grid\"", "\"ngrid\"");
    let path = write_config(tmp.path(), &text);
    let (code, _, stderr) = run_cli(&["certify", "--config", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(stderr.contains("config.json:8:") && stderr.contains("ngrid"), "{stderr}");
}

#[test]
fn oblique_reference_on_a_ball_is_refused() {
    let text = config(r#"{"kind": "exponential"}"#)
        .replace(
            r#"{"kind": "half_space", "axis": 1, "offset": 0.0}"#,
            r#"{"kind": "ball", "center": [0.0, 0.0], "radius": 1.0}"#,
        )
        .replace(r#"{"kind": "constant", "vector": [1.0, 1.0]}"#, r#"{"kind": "rotated_normal", "tangent_weight": 0.5}"#)
        .replace("[0.0, 0.5]", "[0.0, 0.0]");
    let loaded = LoadedConfig::parse(&text, None).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let err = commands::converge(&loaded, &options(tmp.path())).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("reference"), "{err}");
}

#[test]
fn converge_is_deterministic_across_workers() {
    let loaded = LoadedConfig::parse(&config(r#"{"kind": "exponential"}"#), None).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let run = |workers: usize, dir: &str| {
        let opts = RunOptions {
            out: Some(tmp.path().join(dir)),
            workers: Some(workers),
            seed: None,
        };
        commands::converge(&loaded, &opts).unwrap()
    };
    let a = run(1, "a");
    let b = run(3, "b");
    for name in ["table.csv", "reference.csv", "ensemble_n4.csv", "ensemble_n64.csv"] {
        assert_eq!(
            fs::read(a.outcome.directory.join(name)).unwrap(),
            fs::read(b.outcome.directory.join(name)).unwrap(),
            "{name}"
        );
    }
    let names: Vec<_> = a.outcome.verdicts.iter().map(|v| v.check.as_str()).collect();
    assert_eq!(names, ["KsMonotone", "MinPhiMonotone", "PenaltyDirection"]);
    let header = fs::read_to_string(&a.table).unwrap();
    assert!(header.starts_with("n,dt,paths,failures,ks_x1,ks_x2,"));
    assert_eq!(a.rows.iter().map(|r| r.n).collect::<Vec<_>>(), [4, 16, 64]);
}

#[test]
fn seed_flag_overrides_config() {
    let loaded = LoadedConfig::parse(&config(r#"{"kind": "exponential"}"#), None).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let run = |seed: Option<u64>, dir: &str| {
        let opts = RunOptions {
            out: Some(tmp.path().join(dir)),
            workers: Some(1),
            seed,
        };
        let o = commands::paths(&loaded, &opts, Some(5), false).unwrap();
        fs::read(o.directory.join("summary_n4.csv")).unwrap()
    };
    assert_eq!(run(None, "a"), run(Some(5), "b"));
    assert_ne!(run(None, "c"), run(Some(6), "d"));
}

#[test]
fn paths_dump_writes_one_trajectory_per_path() {
    let loaded = LoadedConfig::parse(&config(r#"{"kind": "exponential"}"#), None).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let o = commands::paths(&loaded, &options(&tmp.path().join("dump")), Some(3), true).unwrap();
    let mut traces = Vec::new();
    for i in 0..3 {
        let text = fs::read_to_string(o.directory.join(format!("trajectory_n16_path{i}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,phi,f_norm");
        assert_eq!(lines.count(), 101);
        traces.push(text);
    }
    assert!(traces[0] != traces[1] && traces[1] != traces[2]);
    let summary = fs::read_to_string(o.directory.join("summary_n16.csv")).unwrap();
    let seeds: std::collections::HashSet<_> = summary.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().to_string()).collect();
    assert_eq!(seeds.len(), 3);

    let o = commands::paths(&loaded, &options(&tmp.path().join("summary")), Some(3), false).unwrap();
    let files: Vec<_> = fs::read_dir(&o.directory).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert!(files.iter().all(|f| !f.to_string_lossy().starts_with("trajectory")));
    assert_eq!(files.len(), 4);
}

#[test]
fn paths_without_penalty_is_free_euler() {
    let text = config(r#"{"kind": "exponential"}"#).replace(r#""penalty": {"family": {"kind": "exponential"}, "n_grid": [4, 16, 64]},"#, "");
    let loaded = LoadedConfig::parse(&text, None).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let o = commands::paths(&loaded, &options(tmp.path()), Some(1), true).unwrap();
    assert_eq!(o.exit_code(), 0);
    let text = fs::read_to_string(o.directory.join("trajectory_n0_path0.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn timestamped_directories_do_not_collide() {
    let text = config(r#"{"kind": "exponential"}"#).replace("\"timestamped\": false", "\"timestamped\": true");
    let loaded = LoadedConfig::parse(&text, None).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let a = commands::paths(&loaded, &options(tmp.path()), Some(1), false).unwrap();
    let b = commands::paths(&loaded, &options(tmp.path()), Some(1), false).unwrap();
    assert_ne!(a.directory, b.directory);
    assert!(a.directory.file_name().unwrap().to_string_lossy().starts_with("paths-"));
}
