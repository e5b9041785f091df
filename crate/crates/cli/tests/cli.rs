//! End-to-end checks of the runner: exit codes, report and CSV schemas,
//! manifest bookkeeping, caching, seeds and determinism.

use std::fs;
use std::path::Path;
use std::process::Command;

use ccgeo_cli::blocks::{run_config, RunOptions};
use ccgeo_cli::config::parse_config;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ccgeo"))
}

/// euclidean2 with a coarse, instantly buildable field.
fn small_config(experiments: &str) -> String {
    format!(
        r#"{{
  "system": "euclidean2",
  "distance": {{ "tau": 0.05, "cell": 0.04, "budget": 0.7, "step": 0.05,
                 "splits": 1, "box_half_width": 0.8 }},
  "experiments": {experiments}
}}"#
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn read_manifest(dir: &Path) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

const SQUARE: &str =
    r#"{ "label": "sq", "expression": ["add", ["pow", ["coord", 0], 2], ["pow", ["coord", 1], 2]] }"#;
const NEG_SQUARE: &str =
    r#"{ "label": "negsq", "expression": ["sub", 0, ["pow", ["coord", 0], 2]] }"#;

#[test]
fn empty_experiment_list_exits_zero_with_an_empty_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config("[]"));
    let out = tmp.path().join("out");
    let status = bin().args(["--config"]).arg(&cfg).arg("--out").arg(&out).arg("run").status().unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest = read_manifest(&out);
    assert_eq!(manifest["blocks"].as_array().unwrap().len(), 0);
    assert!(out.join("config_echo.json").exists());
}

#[test]
fn failing_verdict_exits_one_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = format!(
        r#"[ {{ "command": "convexity", "parameters": {{ "u": {NEG_SQUARE} }}, "seed": 7 }} ]"#
    );
    let cfg = write_config(tmp.path(), &small_config(&experiments));
    let out = tmp.path().join("out");
    let status = bin().args(["--config"]).arg(&cfg).arg("--out").arg(&out).arg("run").status().unwrap();
    assert_eq!(status.code(), Some(1));
    let manifest = read_manifest(&out);
    assert_eq!(manifest["blocks"][0]["status"], "fail");
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("block_00_convexity.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["pass"], false);
    assert!(report["payload"]["failures"].as_u64().unwrap() > 0);
    let witnesses = report["payload"]["witnesses"].as_array().unwrap();
    assert!(!witnesses.is_empty());
}

#[test]
fn schema_violations_exit_two_with_the_field_path() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{ "system": "euclidean2", "distance": { "tau": "fast" }, "experiments": [] }"#,
    );
    let out = bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .arg("run")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("distance.tau"), "stderr: {stderr}");
}

#[test]
fn unknown_builtin_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{ "system": "sublap9", "experiments": [] }"#);
    let out = bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(tmp.path().join("out"))
        .arg("run")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sublap9"));
}

#[test]
fn missing_config_flag_exits_two() {
    let out = bin().arg("run").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_three_and_later_blocks_still_run() {
    let tmp = tempfile::tempdir().unwrap();
    // Both lipschitz endpoints sit outside the field box, so the pair
    // distance is a runtime failure, not a config one.
    let experiments = format!(
        r#"[ {{ "command": "lipschitz",
               "parameters": {{ "u": {SQUARE}, "pairs": [[[5.0, 5.0], [6.0, 6.0]]] }} }},
             {{ "command": "basis" }} ]"#
    );
    let cfg = write_config(tmp.path(), &small_config(&experiments));
    let out = tmp.path().join("out");
    let status = bin().args(["--config"]).arg(&cfg).arg("--out").arg(&out).arg("run").status().unwrap();
    assert_eq!(status.code(), Some(3));
    let manifest = read_manifest(&out);
    assert_eq!(manifest["blocks"][0]["status"], "error");
    assert_eq!(manifest["blocks"][1]["status"], "pass");
}

#[test]
fn fail_fast_skips_the_remaining_blocks() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = format!(
        r#"[ {{ "command": "convexity", "parameters": {{ "u": {NEG_SQUARE} }} }},
             {{ "command": "basis" }} ]"#
    );
    let cfg = write_config(tmp.path(), &small_config(&experiments));
    let out = tmp.path().join("out");
    let status = bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--fail-fast", "run"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let manifest = read_manifest(&out);
    assert_eq!(manifest["blocks"][0]["status"], "fail");
    assert_eq!(manifest["blocks"][1]["status"], "skipped");
    assert!(!out.join("block_01_basis.json").exists());
}

#[test]
fn shared_distance_fields_hit_the_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = r#"[ { "command": "distance-field" },
                           { "command": "ball", "parameters": { "radii": [0.2], "samples": 1000 } } ]"#;
    let cfg = parse_config(&small_config(experiments)).unwrap();
    let opts = RunOptions {
        out_dir: tmp.path().join("out"),
        fail_fast: false,
        parallel: false,
        seed_override: None,
        config_text: String::new(),
    };
    let outcome = run_config(&cfg, &opts).unwrap();
    assert_eq!(outcome.exit, 0);
    assert!(!outcome.manifest.blocks[0].cache_hit);
    assert!(outcome.manifest.blocks[1].cache_hit);
}

#[test]
fn missing_seeds_are_filled_and_echoed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &small_config(r#"[ { "command": "hormander-check" } ]"#),
    );
    let out = tmp.path().join("out");
    let status = bin().args(["--config"]).arg(&cfg).arg("--out").arg(&out).arg("run").status().unwrap();
    assert_eq!(status.code(), Some(0));
    let echo: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("config_echo.json")).unwrap()).unwrap();
    assert_eq!(echo["experiments"][0]["seed"], 42);
    let report: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("block_00_hormander-check.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(report["seed"], 42);
}

#[test]
fn seed_override_replaces_every_block_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = r#"[ { "command": "hormander-check", "seed": 1 },
                           { "command": "basis", "seed": 2 } ]"#;
    let cfg = write_config(tmp.path(), &small_config(experiments));
    let out = tmp.path().join("out");
    let status = bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["--seed-override", "99", "run"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest = read_manifest(&out);
    for block in manifest["blocks"].as_array().unwrap() {
        assert_eq!(block["seed"], 99);
    }
}

#[test]
fn manifest_outputs_exist_and_are_non_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = format!(
        r#"[ {{ "command": "distance-field" }},
             {{ "command": "convexity", "parameters": {{ "u": {SQUARE} }} }} ]"#
    );
    let cfg = write_config(tmp.path(), &small_config(&experiments));
    let out = tmp.path().join("out");
    let status = bin().args(["--config"]).arg(&cfg).arg("--out").arg(&out).arg("run").status().unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest = read_manifest(&out);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.len() >= 4);
    for name in outputs {
        let path = out.join(name.as_str().unwrap());
        assert!(path.exists(), "missing output {}", path.display());
        assert!(fs::metadata(&path).unwrap().len() > 0);
    }
    // Every experiment appears exactly once in the manifest.
    assert_eq!(manifest["blocks"].as_array().unwrap().len(), 2);
}

#[test]
fn csv_tables_follow_the_documented_schemas() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = format!(
        r#"[ {{ "command": "distance-field" }},
             {{ "command": "ball", "parameters": {{ "radii": [0.2, 0.4], "samples": 2000 }} }},
             {{ "command": "estimates",
                "parameters": {{ "u": {SQUARE}, "radii": [0.1, 0.2], "samples": 500,
                                 "random_pairs": 3, "pair_radius": 0.2 }} }},
             {{ "command": "convexity", "parameters": {{ "u": {SQUARE} }} }} ]"#
    );
    let cfg = write_config(tmp.path(), &small_config(&experiments));
    let out = tmp.path().join("out");
    let status = bin().args(["--config"]).arg(&cfg).arg("--out").arg(&out).arg("run").status().unwrap();
    assert_eq!(status.code(), Some(0));

    let field_csv = fs::read_to_string(out.join("block_00_distance-field.csv")).unwrap();
    let mut lines = field_csv.lines();
    assert_eq!(lines.next().unwrap(), "x1,x2,value");
    let first = lines.next().unwrap();
    assert_eq!(first.split(',').count(), 3);
    assert!(first.split(',').all(|c| c.parse::<f64>().is_ok()));

    let ball_csv = fs::read_to_string(out.join("block_01_ball.csv")).unwrap();
    assert_eq!(ball_csv.lines().next().unwrap(), "r,volume,hits,samples");
    assert_eq!(ball_csv.lines().count(), 3);

    let est_csv = fs::read_to_string(out.join("block_02_estimates.csv")).unwrap();
    assert_eq!(est_csv.lines().next().unwrap(), "r,sup,mean,ratio");
    assert_eq!(est_csv.lines().count(), 3);

    // A passing convexity block has no witnesses: header only.
    let conv_csv = fs::read_to_string(out.join("block_03_convexity.csv")).unwrap();
    assert_eq!(conv_csv, "x1,x2,a1,a2,t,value\n");
}

#[test]
fn identical_runs_produce_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = format!(
        r#"[ {{ "command": "ball", "parameters": {{ "radii": [0.2, 0.4], "samples": 3000 }} }},
             {{ "command": "lambda" }},
             {{ "command": "estimates",
                "parameters": {{ "u": {SQUARE}, "radii": [0.1, 0.2], "samples": 400,
                                 "random_pairs": 2, "pair_radius": 0.2 }} }} ]"#
    );
    let text = small_config(&experiments);
    let cfg = parse_config(&text).unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for dir in &dirs {
        let opts = RunOptions {
            out_dir: dir.clone(),
            fail_fast: false,
            parallel: false,
            seed_override: None,
            config_text: text.clone(),
        };
        assert_eq!(run_config(&cfg, &opts).unwrap().exit, 0);
    }
    for name in [
        "config_echo.json",
        "block_00_ball.json",
        "block_00_ball.csv",
        "block_01_lambda.json",
        "block_02_estimates.json",
        "block_02_estimates.csv",
    ] {
        let a = fs::read(dirs[0].join(name)).unwrap();
        let b = fs::read(dirs[1].join(name)).unwrap();
        assert_eq!(a, b, "outputs differ for {name}");
    }
}

#[test]
fn parallel_runs_match_sequential_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = format!(
        r#"[ {{ "command": "ball", "parameters": {{ "radii": [0.3], "samples": 2000 }} }},
             {{ "command": "convexity", "parameters": {{ "u": {SQUARE} }} }},
             {{ "command": "lambda" }} ]"#
    );
    let text = small_config(&experiments);
    let cfg = parse_config(&text).unwrap();
    let seq_dir = tmp.path().join("seq");
    let par_dir = tmp.path().join("par");
    for (dir, parallel) in [(&seq_dir, false), (&par_dir, true)] {
        let opts = RunOptions {
            out_dir: dir.clone(),
            fail_fast: false,
            parallel,
            seed_override: None,
            config_text: text.clone(),
        };
        assert_eq!(run_config(&cfg, &opts).unwrap().exit, 0);
    }
    for name in [
        "block_00_ball.json",
        "block_01_convexity.json",
        "block_02_lambda.json",
    ] {
        assert_eq!(
            fs::read(seq_dir.join(name)).unwrap(),
            fs::read(par_dir.join(name)).unwrap(),
            "outputs differ for {name}"
        );
    }
}

#[test]
fn single_block_subcommands_run_without_a_block_list() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_config("[]"));
    let out = tmp.path().join("out");
    let status = bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(["lambda", "--params", r#"{"delta": 0.3}"#, "--seed", "5"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("block_00_lambda.json")).unwrap())
            .unwrap();
    assert_eq!(report["seed"], 5);
    assert_eq!(report["parameters"]["delta"], 0.3);
}

#[test]
fn unknown_block_parameters_are_rejected_with_their_name() {
    let tmp = tempfile::tempdir().unwrap();
    let experiments = r#"[ { "command": "doubling", "parameters": { "radius": 0.2 } } ]"#;
    let cfg = write_config(tmp.path(), &small_config(experiments));
    let out = tmp.path().join("out");
    let output = bin()
        .args(["--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .arg("run")
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let manifest = read_manifest(&out);
    let err = manifest["blocks"][0]["error"].as_str().unwrap();
    assert!(err.contains("radius"), "error was: {err}");
}
