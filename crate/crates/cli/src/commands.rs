//! Implementations of the subcommands. Each returns the manifest it wrote,
//! so reruns and tests can chain on the recorded outputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use enskit::aggregate::{ensemble_accuracy, AggregationRule, MeanKind, DEFAULT_EPSILON};
use enskit::cohort::{calibrate_signal, generate_cohort, CohortSpec};
use enskit::cost::{load_registry, ModelProfile};
use enskit::pareto::{
    build_ensemble_curve, crossover_cost, optimal_ensemble_size, write_frontier_csv, CostUnit,
    CurvePoint, EnsembleCurve,
};
use enskit::prediction::{
    load_label_file, load_prediction_dump, save_label_file, save_prediction_dump, PredictionSet,
};
use enskit::rng::{derive_seed, tag};
use enskit::search::{
    duplicate_vs_diverse_report, search, write_comparison_csv, write_point_cloud_csv,
    RewardParams, SearchSpace, SurrogateParams,
};
use enskit::simulator::{simulate, write_makespans_csv, write_report_csv, SimConfig};

use crate::config::{
    self, CohortConfig, CurvesConfig, SearchConfig, SimulateConfig, SpaceChoice,
};
use crate::manifest::RunManifest;
use crate::{write_atomic, CliError};

const TAG_COHORT: u64 = tag("cli-cohort");
const TAG_CURVES: u64 = tag("cli-curves");
const TAG_SIMULATE: u64 = tag("cli-simulate");
const TAG_SEARCH: u64 = tag("cli-search");
const TAG_SURROGATE: u64 = tag("cli-surrogate");
const TAG_COMPARISON: u64 = tag("cli-comparison");

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

/// Runs a writer against a temp path, then renames the result into place.
fn stage(
    out: &Path,
    name: &str,
    write: impl FnOnce(&Path) -> enskit::Result<()>,
) -> Result<String, CliError> {
    let tmp = out.join(format!(".{name}.partial"));
    write(&tmp)?;
    fs::rename(&tmp, out.join(name)).map_err(|e| CliError::Io {
        path: out.join(name),
        source: e,
    })?;
    Ok(name.to_string())
}

fn stage_text(out: &Path, name: &str, text: &str) -> Result<String, CliError> {
    write_atomic(&out.join(name), text.as_bytes())?;
    Ok(name.to_string())
}

fn to_config_value<T: serde::Serialize>(config: &T) -> Result<serde_json::Value, CliError> {
    serde_json::to_value(config)
        .map_err(|e| CliError::Config(format!("config serialization: {e}")))
}

pub fn cmd_cohort(
    mut config: CohortConfig,
    out: &Path,
    seed: u64,
) -> Result<RunManifest, CliError> {
    config.validate()?;
    ensure_dir(out)?;
    let mut outputs = Vec::new();

    for (j, fam) in config.families.iter_mut().enumerate() {
        let family_seed = derive_seed(seed, &[TAG_COHORT, j as u64]);
        let signal = match fam.signal {
            Some(s) => s,
            None => {
                let target = fam.target_accuracy.expect("validated");
                let s = calibrate_signal(
                    target,
                    fam.num_classes,
                    fam.correlation,
                    fam.temperature,
                    family_seed,
                )?;
                println!(
                    "cohort: family {}: calibrated signal {s:.6} for target accuracy {target}",
                    fam.family
                );
                s
            }
        };
        // Record the resolved signal so a rerun skips calibration.
        fam.signal = Some(signal);
        fam.target_accuracy = None;

        let spec = CohortSpec {
            num_classes: fam.num_classes,
            num_examples: fam.num_examples,
            num_models: fam.num_models,
            signal,
            correlation: fam.correlation,
            temperature: fam.temperature,
            seed: family_seed,
        };
        let (members, labels) = generate_cohort(&spec)?;
        for (k, member) in members.iter().enumerate() {
            let name = format!("{}_m{k:02}.csv", fam.family);
            outputs.push(stage(out, &name, |p| save_prediction_dump(member, None, p))?);
        }
        let label_name = format!("{}_labels.csv", fam.family);
        outputs.push(stage(out, &label_name, |p| save_label_file(&labels, p))?);
        println!(
            "cohort: family {}: {} dumps + labels ({} examples, {} classes)",
            fam.family, fam.num_models, fam.num_examples, fam.num_classes
        );
    }

    let manifest = RunManifest::new("cohort", seed, to_config_value(&config)?, outputs);
    manifest.write(out)?;
    Ok(manifest)
}

pub fn cmd_curves(
    config: CurvesConfig,
    out: &Path,
    seed: u64,
) -> Result<RunManifest, CliError> {
    config.validate()?;
    ensure_dir(out)?;
    let registry = load_registry(&config.registry)?;
    let by_id: BTreeMap<&str, &ModelProfile> =
        registry.iter().map(|p| (p.model_id.as_str(), p)).collect();
    let epsilon = config.rule.epsilon.unwrap_or(DEFAULT_EPSILON);
    let rule = AggregationRule::with_epsilon(config.rule.kind, epsilon)?;

    let mut curves: Vec<EnsembleCurve> = Vec::new();
    let mut comparison = String::from(
        "family,ensemble_size,accuracy_geometric,accuracy_arithmetic,difference\n",
    );
    for (j, fam) in config.families.iter().enumerate() {
        let profile = *by_id.get(fam.model_id.as_str()).ok_or_else(|| {
            CliError::Config(format!(
                "model_id `{}` not found in {}",
                fam.model_id,
                config.registry.display()
            ))
        })?;
        let members: Vec<PredictionSet> = fam
            .dumps
            .iter()
            .map(load_prediction_dump)
            .collect::<enskit::Result<_>>()?;
        let labels = load_label_file(&fam.labels)?;
        let curve_seed = derive_seed(seed, &[TAG_CURVES, j as u64]);
        let curve = build_ensemble_curve(
            profile,
            &members,
            &labels,
            &rule,
            config.replicates,
            curve_seed,
        )?;

        let geometric = ensemble_accuracy(
            &members,
            &labels,
            &AggregationRule::with_epsilon(MeanKind::Geometric, epsilon)?,
        )?;
        let arithmetic =
            ensemble_accuracy(&members, &labels, &AggregationRule::arithmetic())?;
        let difference = geometric - arithmetic;
        writeln!(
            comparison,
            "{},{},{},{},{}",
            curve.family,
            members.len(),
            geometric,
            arithmetic,
            difference
        )
        .expect("string write");
        println!(
            "curves: family {}: {} points, optimal ensemble size {} at min gain {}",
            curve.family,
            curve.points().len(),
            optimal_ensemble_size(&curve, config.min_gain),
            config.min_gain
        );
        println!(
            "curves: family {}: full-pool geometric {geometric} vs arithmetic {arithmetic} \
             (difference {difference:+e})",
            curve.family
        );
        curves.push(curve);
    }

    let mut outputs = Vec::new();

    let mut curve_rows = String::from("family,ensemble_size,cost,cost_unit,accuracy,log10_cost\n");
    for curve in &curves {
        for p in curve.points() {
            writeln!(
                curve_rows,
                "{},{},{},{},{},{}",
                p.family,
                p.ensemble_size,
                p.cost,
                p.cost_unit.as_str(),
                p.accuracy,
                p.cost.log10()
            )
            .expect("string write");
        }
    }
    outputs.push(stage_text(out, "curves.csv", &curve_rows)?);

    let all_points: Vec<CurvePoint> = curves
        .iter()
        .flat_map(|c| c.points().iter().cloned())
        .collect();
    outputs.push(stage(out, "frontier.csv", |p| {
        write_frontier_csv(&all_points, p)
    })?);

    let mut crossover_rows = String::from("family_a,family_b,crossover_cost,cost_unit\n");
    for a in &curves {
        for b in &curves {
            if a.family == b.family {
                continue;
            }
            let cost = crossover_cost(a, b);
            writeln!(
                crossover_rows,
                "{},{},{},{}",
                a.family,
                b.family,
                cost.map(|c| c.to_string()).unwrap_or_default(),
                a.cost_unit().as_str()
            )
            .expect("string write");
        }
    }
    outputs.push(stage_text(out, "crossovers.csv", &crossover_rows)?);
    outputs.push(stage_text(out, "aggregation_comparison.csv", &comparison)?);

    let manifest = RunManifest::new("curves", seed, to_config_value(&config)?, outputs);
    manifest.write(out)?;
    Ok(manifest)
}

pub fn cmd_simulate(
    config: SimulateConfig,
    out: &Path,
    seed: u64,
) -> Result<RunManifest, CliError> {
    ensure_dir(out)?;
    let registry = load_registry(&config.registry)?;
    let by_id: BTreeMap<&str, &ModelProfile> =
        registry.iter().map(|p| (p.model_id.as_str(), p)).collect();
    let members: Vec<ModelProfile> = config
        .members
        .iter()
        .map(|id| {
            by_id.get(id.as_str()).map(|p| (*p).clone()).ok_or_else(|| {
                CliError::Config(format!(
                    "model_id `{id}` not found in {}",
                    config.registry.display()
                ))
            })
        })
        .collect::<Result<_, _>>()?;

    let sim = SimConfig {
        members,
        num_workers: config.num_workers,
        num_requests: config.num_requests,
        scheduler: config.scheduler,
        agg_overhead_ms: config.agg_overhead_ms,
        seed: derive_seed(seed, &[TAG_SIMULATE]),
    };
    let report = simulate(&sim)?;
    println!(
        "simulate: {} requests, {} members over {} workers: p50 {:.3} ms, p95 {:.3} ms, \
         mean {:.3} ms, speedup x{:.3}",
        config.num_requests,
        config.members.len(),
        config.num_workers,
        report.summary.p50_ms,
        report.summary.p95_ms,
        report.summary.mean_ms,
        report.speedup_vs_sequential
    );

    let mut outputs = Vec::new();
    outputs.push(stage(out, "report.csv", |p| write_report_csv(&report, p))?);
    outputs.push(stage(out, "makespans.csv", |p| {
        write_makespans_csv(&report, p)
    })?);

    let manifest = RunManifest::new("simulate", seed, to_config_value(&config)?, outputs);
    manifest.write(out)?;
    Ok(manifest)
}

pub fn cmd_search(config: SearchConfig, out: &Path, seed: u64) -> Result<RunManifest, CliError> {
    ensure_dir(out)?;
    let space = match config.space {
        SpaceChoice::Full => SearchSpace::full(),
        SpaceChoice::Reduced => SearchSpace::reduced(),
    };
    let surrogate = SurrogateParams {
        seed: derive_seed(seed, &[TAG_SURROGATE]),
        a_max: config.surrogate.a_max,
        half_sat_flops: config.surrogate.half_sat_flops,
        perturb_scale: config.surrogate.perturb_scale,
    };
    let reward = RewardParams {
        target_latency_ms: config.target_latency_ms,
        exponent: config.exponent,
    };

    let run = search(
        &space,
        config.ensemble_size,
        config.strategy,
        config.budget,
        &surrogate,
        &reward,
        derive_seed(seed, &[TAG_SEARCH]),
    )?;
    let best = run.best_point();
    println!(
        "search: best reward {} at candidate {} (accuracy {}, max latency {} ms)",
        best.reward, best.candidate_id, best.accuracy, best.max_latency_ms
    );

    let mut outputs = Vec::new();
    outputs.push(stage(out, "points.csv", |p| {
        write_point_cloud_csv(&run.points, p)
    })?);

    let cloud: Vec<CurvePoint> = run
        .points
        .iter()
        .map(|p| CurvePoint {
            family: format!("n{}", p.ensemble_size),
            ensemble_size: p.ensemble_size,
            cost: p.max_latency_ms,
            cost_unit: CostUnit::LatencyMs,
            accuracy: p.accuracy,
        })
        .collect();
    outputs.push(stage(out, "frontier.csv", |p| write_frontier_csv(&cloud, p))?);

    let best_json = serde_json::json!({
        "point": best,
        "ensemble": run.best_candidate(),
    });
    let mut best_text = serde_json::to_string_pretty(&best_json)
        .map_err(|e| CliError::Config(format!("best-config serialization: {e}")))?;
    best_text.push('\n');
    outputs.push(stage_text(out, "best_config.json", &best_text)?);

    let comparison = duplicate_vs_diverse_report(
        &space,
        &surrogate,
        &reward,
        config.comparison_budget,
        derive_seed(seed, &[TAG_COMPARISON]),
    )?;
    println!(
        "search: duplicate-vs-diverse best-reward gap {:+e}",
        comparison.reward_gap
    );
    outputs.push(stage(out, "duplicate_vs_diverse.csv", |p| {
        write_comparison_csv(&comparison, p)
    })?);

    let manifest = RunManifest::new("search", seed, to_config_value(&config)?, outputs);
    manifest.write(out)?;
    Ok(manifest)
}

/// Re-executes the command recorded in a manifest; outputs land in
/// `out_override` or beside the manifest.
pub fn rerun(manifest_path: &Path, out_override: Option<&Path>) -> Result<RunManifest, CliError> {
    let manifest = RunManifest::load(manifest_path)?;
    let out: PathBuf = out_override
        .map(Path::to_path_buf)
        .or_else(|| manifest_path.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    if manifest.version != env!("CARGO_PKG_VERSION") {
        eprintln!(
            "note: manifest was written by version {}, this is {}",
            manifest.version,
            env!("CARGO_PKG_VERSION")
        );
    }

    fn parse<T: serde::de::DeserializeOwned>(v: &serde_json::Value) -> Result<T, CliError> {
        serde_json::from_value(v.clone())
            .map_err(|e| CliError::Config(format!("manifest config: {e}")))
    }

    match manifest.command.as_str() {
        "cohort" => cmd_cohort(parse::<CohortConfig>(&manifest.config)?, &out, manifest.seed),
        "curves" => cmd_curves(parse::<CurvesConfig>(&manifest.config)?, &out, manifest.seed),
        "simulate" => cmd_simulate(
            parse::<SimulateConfig>(&manifest.config)?,
            &out,
            manifest.seed,
        ),
        "search" => cmd_search(parse::<SearchConfig>(&manifest.config)?, &out, manifest.seed),
        other => Err(CliError::Config(format!(
            "manifest names unknown command `{other}`"
        ))),
    }
}

/// Loads a config by type for external callers (tests, tooling).
pub fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    config::load(path)
}
