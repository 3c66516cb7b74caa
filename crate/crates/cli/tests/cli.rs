//! End-to-end tests that spawn the compiled `enskit` binary.
//!
//! These cover the observable contract of the CLI: exit codes, the exact
//! header row of every CSV artifact, manifest contents, and byte-identical
//! reruns. Numerical behavior of the underlying routines is tested in the
//! core crate; here we only check the plumbing.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn enskit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_enskit"))
}

fn run(args: &[&str]) -> Output {
    enskit().args(args).output().expect("failed to spawn enskit")
}

fn assert_success(out: &Output, context: &str) {
    assert!(
        out.status.success(),
        "{context} failed with status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
}

fn write_json(path: &Path, value: serde_json::Value) {
    fs::write(path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
}

fn first_line(path: &Path) -> String {
    let text = fs::read_to_string(path)
        .unwrap_or_else(|err| panic!("cannot read {}: {err}", path.display()));
    text.lines().next().unwrap_or_default().to_string()
}

fn data_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(str::to_string)
        .collect()
}

/// Small cohort config: two families driven by an explicit signal so no
/// calibration searches run.
fn cohort_config(num_models: usize) -> serde_json::Value {
    serde_json::json!({
        "families": [
            {
                "family": "alpha",
                "num_classes": 4,
                "num_examples": 120,
                "num_models": num_models,
                "signal": 1.5,
                "correlation": 0.3,
                "temperature": 1.0
            },
            {
                "family": "beta",
                "num_classes": 4,
                "num_examples": 120,
                "num_models": num_models,
                "signal": 2.0,
                "correlation": 0.5,
                "temperature": 1.0
            }
        ]
    })
}

fn registry_json(dir: &Path) -> PathBuf {
    let path = dir.join("registry.json");
    write_json(
        &path,
        serde_json::json!([
            {
                "model_id": "alpha",
                "family": "alpha",
                "scale_tag": "s1",
                "flops": 10000000,
                "latency": { "kind": "lognormal", "p50_ms": 3.0, "sigma_log": 0.1 },
                "measured_accuracy": 0.9
            },
            {
                "model_id": "beta",
                "family": "beta",
                "scale_tag": "s1",
                "flops": 40000000,
                "latency": { "kind": "lognormal", "p50_ms": 11.0, "sigma_log": 0.1 },
                "measured_accuracy": 0.93
            }
        ]),
    );
    path
}

/// Runs the cohort command into `out` and returns the dump dir.
fn make_cohort(dir: &Path, num_models: usize) -> PathBuf {
    let config = dir.join("cohort.json");
    write_json(&config, cohort_config(num_models));
    let out = dir.join("cohort-out");
    let res = run(&[
        "cohort",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert_success(&res, "cohort");
    out
}

fn curves_config(dir: &Path, cohort_out: &Path, num_models: usize) -> PathBuf {
    let registry = registry_json(dir);
    let dump = |family: &str, k: usize| {
        cohort_out
            .join(format!("{family}_m{k:02}.csv"))
            .to_str()
            .unwrap()
            .to_string()
    };
    let family_entry = |family: &str| {
        serde_json::json!({
            "model_id": family,
            "dumps": (0..num_models).map(|k| dump(family, k)).collect::<Vec<_>>(),
            "labels": cohort_out.join(format!("{family}_labels.csv")).to_str().unwrap()
        })
    };
    let config = dir.join("curves.json");
    write_json(
        &config,
        serde_json::json!({
            "registry": registry.to_str().unwrap(),
            "replicates": 5,
            "families": [family_entry("alpha"), family_entry("beta")]
        }),
    );
    config
}

#[test]
fn cohort_writes_dumps_labels_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = make_cohort(dir.path(), 3);

    for family in ["alpha", "beta"] {
        for k in 0..3 {
            let dump = out.join(format!("{family}_m{k:02}.csv"));
            assert!(dump.is_file(), "missing {}", dump.display());
            assert_eq!(first_line(&dump), "example_id,label,p_0,p_1,p_2,p_3");
            assert_eq!(data_rows(&dump).len(), 120);
        }
        let labels = out.join(format!("{family}_labels.csv"));
        assert_eq!(first_line(&labels), "example_id,label");
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "cohort");
    assert_eq!(manifest["seed"], 7);
    let outputs = manifest["outputs"].as_array().unwrap();
    // 6 dumps + 2 label files.
    assert_eq!(outputs.len(), 8);
    assert!(outputs.iter().any(|o| o == "alpha_m00.csv"));
}

#[test]
fn eight_member_cohort_yields_sixteen_dumps_for_two_families() {
    let dir = TempDir::new().unwrap();
    let out = make_cohort(dir.path(), 8);
    let dumps = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name().to_string_lossy().to_string();
            name.ends_with(".csv") && name.contains("_m")
        })
        .count();
    assert_eq!(dumps, 16);
}

#[test]
fn every_csv_artifact_has_its_documented_header() {
    let dir = TempDir::new().unwrap();
    let cohort_out = make_cohort(dir.path(), 3);

    // Curves.
    let curves_cfg = curves_config(dir.path(), &cohort_out, 3);
    let curves_out = dir.path().join("curves-out");
    let res = run(&[
        "curves",
        "--config",
        curves_cfg.to_str().unwrap(),
        "--out",
        curves_out.to_str().unwrap(),
    ]);
    assert_success(&res, "curves");
    assert_eq!(
        first_line(&curves_out.join("curves.csv")),
        "family,ensemble_size,cost,cost_unit,accuracy,log10_cost"
    );
    assert_eq!(
        first_line(&curves_out.join("frontier.csv")),
        "family,ensemble_size,cost,cost_unit,accuracy,on_frontier"
    );
    assert_eq!(
        first_line(&curves_out.join("crossovers.csv")),
        "family_a,family_b,crossover_cost,cost_unit"
    );
    assert_eq!(
        first_line(&curves_out.join("aggregation_comparison.csv")),
        "family,ensemble_size,accuracy_geometric,accuracy_arithmetic,difference"
    );
    // One full-pool comparison row per family.
    assert_eq!(data_rows(&curves_out.join("aggregation_comparison.csv")).len(), 2);
    // Three data points per family (sizes 1..=3), flagged rows match curve rows.
    assert_eq!(data_rows(&curves_out.join("curves.csv")).len(), 6);
    assert_eq!(data_rows(&curves_out.join("frontier.csv")).len(), 6);

    // Simulate.
    let registry = registry_json(dir.path());
    let sim_cfg = dir.path().join("simulate.json");
    write_json(
        &sim_cfg,
        serde_json::json!({
            "registry": registry.to_str().unwrap(),
            "members": ["alpha", "beta"],
            "num_workers": 2,
            "num_requests": 100,
            "scheduler": "lpt",
            "agg_overhead_ms": 0.1
        }),
    );
    let sim_out = dir.path().join("simulate-out");
    let res = run(&[
        "simulate",
        "--config",
        sim_cfg.to_str().unwrap(),
        "--out",
        sim_out.to_str().unwrap(),
    ]);
    assert_success(&res, "simulate");
    assert_eq!(first_line(&sim_out.join("report.csv")), "metric,value");
    assert_eq!(
        first_line(&sim_out.join("makespans.csv")),
        "request_id,makespan_ms"
    );
    assert_eq!(data_rows(&sim_out.join("makespans.csv")).len(), 100);
    let metrics: Vec<String> = data_rows(&sim_out.join("report.csv"))
        .iter()
        .map(|row| row.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(
        metrics,
        ["p50_ms", "p95_ms", "p99_ms", "mean_ms", "max_ms", "speedup_vs_sequential"]
    );

    // Search.
    let search_cfg = dir.path().join("search.json");
    write_json(
        &search_cfg,
        serde_json::json!({
            "space": "reduced",
            "ensemble_size": 2,
            "strategy": "evolutionary",
            "budget": 40,
            "target_latency_ms": 10.0,
            "comparison_budget": 24
        }),
    );
    let search_out = dir.path().join("search-out");
    let res = run(&[
        "search",
        "--config",
        search_cfg.to_str().unwrap(),
        "--out",
        search_out.to_str().unwrap(),
    ]);
    assert_success(&res, "search");
    assert_eq!(
        first_line(&search_out.join("points.csv")),
        "candidate_id,ensemble_size,accuracy,max_latency_ms,reward"
    );
    assert_eq!(
        first_line(&search_out.join("frontier.csv")),
        "family,ensemble_size,cost,cost_unit,accuracy,on_frontier"
    );
    assert_eq!(
        first_line(&search_out.join("duplicate_vs_diverse.csv")),
        "strategy,ensemble_size,accuracy,max_latency_ms,reward"
    );
    assert_eq!(data_rows(&search_out.join("points.csv")).len(), 40);
    assert_eq!(data_rows(&search_out.join("duplicate_vs_diverse.csv")).len(), 6);
    let best: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(search_out.join("best_config.json")).unwrap())
            .unwrap();
    assert!(best["point"]["reward"].is_f64() || best["point"]["reward"].is_u64());
    assert_eq!(best["ensemble"]["members"].as_array().unwrap().len(), 2);
}

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("cohort.json");
    let mut value = cohort_config(2);
    value["families"][0]["extra_knob"] = serde_json::json!(true);
    write_json(&config, value);
    let res = run(&[
        "cohort",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("error:"));
}

#[test]
fn invalid_settings_exit_with_config_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("cohort.json");
    write_json(&config, serde_json::json!({ "families": [] }));
    let res = run(&[
        "cohort",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn missing_config_file_exits_with_io_error() {
    let dir = TempDir::new().unwrap();
    let res = run(&[
        "cohort",
        "--config",
        dir.path().join("nope.json").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn malformed_dump_exits_with_data_error() {
    let dir = TempDir::new().unwrap();
    let cohort_out = make_cohort(dir.path(), 3);

    // Swap two data rows in one dump so example ids arrive out of order.
    let victim = cohort_out.join("alpha_m01.csv");
    let mut lines: Vec<String> = fs::read_to_string(&victim)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    lines.swap(1, 2);
    fs::write(&victim, lines.join("\n") + "\n").unwrap();

    let curves_cfg = curves_config(dir.path(), &cohort_out, 3);
    let res = run(&[
        "curves",
        "--config",
        curves_cfg.to_str().unwrap(),
        "--out",
        dir.path().join("curves-out").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(3));
}

#[test]
fn oversized_ensemble_request_exits_with_config_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("search.json");
    write_json(
        &config,
        serde_json::json!({
            "ensemble_size": 4,
            "strategy": "random",
            "budget": 10,
            "target_latency_ms": 10.0
        }),
    );
    let res = run(&[
        "search",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn different_seeds_produce_different_cohorts() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("cohort.json");
    write_json(&config, cohort_config(2));
    let mut bytes = Vec::new();
    for seed in ["1", "2"] {
        let out = dir.path().join(format!("out-{seed}"));
        let res = run(&[
            "cohort",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert_success(&res, "cohort");
        bytes.push(fs::read(out.join("alpha_m00.csv")).unwrap());
    }
    assert_ne!(bytes[0], bytes[1]);
}

#[test]
fn relative_paths_resolve_against_the_config_directory() {
    let dir = TempDir::new().unwrap();
    let cohort_out = make_cohort(dir.path(), 2);

    // Keep the registry and dumps addressed relative to the config file, then
    // invoke the binary from an unrelated working directory.
    let registry = registry_json(dir.path());
    let config = dir.path().join("curves.json");
    let relative_dump = |family: &str, k: usize| {
        format!(
            "{}/{family}_m{k:02}.csv",
            cohort_out.file_name().unwrap().to_string_lossy()
        )
    };
    write_json(
        &config,
        serde_json::json!({
            "registry": registry.file_name().unwrap().to_string_lossy(),
            "replicates": 3,
            "families": [{
                "model_id": "alpha",
                "dumps": [relative_dump("alpha", 0), relative_dump("alpha", 1)],
                "labels": format!(
                    "{}/alpha_labels.csv",
                    cohort_out.file_name().unwrap().to_string_lossy()
                )
            }]
        }),
    );

    let elsewhere = TempDir::new().unwrap();
    let out = dir.path().join("curves-out");
    let res = enskit()
        .current_dir(elsewhere.path())
        .args([
            "curves",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_success(&res, "curves from foreign cwd");
    assert!(out.join("curves.csv").is_file());

    // The manifest must carry the resolved absolute paths so reruns do not
    // depend on the original working directory.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let registry_path = manifest["config"]["registry"].as_str().unwrap();
    assert!(Path::new(registry_path).is_absolute());
}

#[test]
fn rerun_rejects_manifest_with_unknown_command() {
    let dir = TempDir::new().unwrap();
    let manifest = dir.path().join("manifest.json");
    write_json(
        &manifest,
        serde_json::json!({
            "command": "frobnicate",
            "version": "0.0.0",
            "seed": 0,
            "config": {},
            "outputs": []
        }),
    );
    let res = run(&["rerun", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}
