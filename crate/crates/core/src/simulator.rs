//! Distributed-inference simulation: fan an ensemble's members out over a
//! worker pool, sample per-member latencies, and report makespans.
//!
//! Each request draws one latency sample per member from a stream keyed by
//! (seed, request, member) — worker count and scheduler never perturb the
//! draws, so scheduling policies can be compared on identical sample paths.
//! A request's makespan is the heaviest worker's total load plus a fixed
//! aggregation overhead.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cost::{sequential_latency_ms, ModelProfile};
use crate::error::{Error, Result};
use crate::rng::{derive_rng, tag};

const TAG_SIM: u64 = tag("sim-latency");

/// How member tasks are packed onto workers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheduler {
    /// Task i goes to worker i mod W.
    RoundRobin,
    /// Longest-processing-time greedy: tasks sorted by duration descending,
    /// each placed on the currently least-loaded worker.
    Lpt,
}

/// Everything a simulation run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub members: Vec<ModelProfile>,
    pub num_workers: usize,
    pub num_requests: usize,
    pub scheduler: Scheduler,
    pub agg_overhead_ms: f64,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidSimConfig(reason.to_string());
        if self.members.is_empty() {
            return Err(invalid("members must be non-empty"));
        }
        for member in &self.members {
            member.validate()?;
        }
        if self.num_workers < 1 {
            return Err(invalid("num_workers must be >= 1"));
        }
        if self.num_requests < 1 {
            return Err(invalid("num_requests must be >= 1"));
        }
        if !(self.agg_overhead_ms.is_finite() && self.agg_overhead_ms >= 0.0) {
            return Err(invalid("agg_overhead_ms must be a finite value >= 0"));
        }
        Ok(())
    }
}

/// Five-number summary of the makespan distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub p99_ms: f64,
    pub mean_ms: f64,
    pub max_ms: f64,
}

/// Simulation output: the raw per-request makespans plus summary statistics
/// and the speedup relative to running every member sequentially on one
/// worker (aggregation overhead excluded from the sequential baseline).
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyReport {
    pub makespans_ms: Vec<f64>,
    pub summary: LatencySummary,
    pub speedup_vs_sequential: f64,
}

/// Nearest-rank quantile: the element at 1-indexed rank ⌈p·N⌉ of the sorted
/// sample. `sorted` must be ascending and non-empty.
pub fn nearest_rank_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = (p * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

/// Assigns each task to a worker: longest first, always onto the least
/// loaded worker, ties broken toward the lowest worker index. Returns the
/// worker index per task (in the original task order).
pub fn lpt_assign(durations: &[f64], num_workers: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[b].total_cmp(&durations[a]).then(a.cmp(&b)));
    let mut loads = vec![0.0f64; num_workers];
    let mut assignment = vec![0usize; durations.len()];
    for task in order {
        let mut lightest = 0;
        for (w, &load) in loads.iter().enumerate().skip(1) {
            if load < loads[lightest] {
                lightest = w;
            }
        }
        assignment[task] = lightest;
        loads[lightest] += durations[task];
    }
    assignment
}

fn round_robin_assign(num_tasks: usize, num_workers: usize) -> Vec<usize> {
    (0..num_tasks).map(|task| task % num_workers).collect()
}

/// Runs the simulation. Deterministic given the config (seed included).
pub fn simulate(config: &SimConfig) -> Result<LatencyReport> {
    config.validate()?;
    let n = config.members.len();
    let mut makespans = Vec::with_capacity(config.num_requests);
    let mut total_sequential = 0.0;
    for request in 0..config.num_requests {
        let samples: Vec<f64> = config
            .members
            .iter()
            .enumerate()
            .map(|(member, profile)| {
                let mut rng =
                    derive_rng(config.seed, &[TAG_SIM, request as u64, member as u64]);
                profile.latency_ms.sample(&mut rng)
            })
            .collect();
        let assignment = match config.scheduler {
            Scheduler::RoundRobin => round_robin_assign(n, config.num_workers),
            Scheduler::Lpt => lpt_assign(&samples, config.num_workers),
        };
        let mut loads = vec![0.0f64; config.num_workers];
        for (task, &worker) in assignment.iter().enumerate() {
            loads[worker] += samples[task];
        }
        let busiest = loads.iter().fold(0.0f64, |acc, &l| acc.max(l));
        makespans.push(busiest + config.agg_overhead_ms);
        total_sequential += sequential_latency_ms(&samples);
    }

    let mut sorted = makespans.clone();
    sorted.sort_by(f64::total_cmp);
    let total_makespan: f64 = makespans.iter().sum();
    let count = config.num_requests as f64;
    let summary = LatencySummary {
        p50_ms: nearest_rank_quantile(&sorted, 0.50),
        p95_ms: nearest_rank_quantile(&sorted, 0.95),
        p99_ms: nearest_rank_quantile(&sorted, 0.99),
        mean_ms: total_makespan / count,
        max_ms: sorted[sorted.len() - 1],
    };
    Ok(LatencyReport {
        makespans_ms: makespans,
        summary,
        speedup_vs_sequential: (total_sequential / count) / (total_makespan / count),
    })
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvariantViolation(format!("csv writer: {other:?}")),
    })
}

/// Writes the summary as `metric,value` rows.
pub fn write_report_csv(report: &LatencyReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path)?;
    let rows = [
        ("p50_ms", report.summary.p50_ms),
        ("p95_ms", report.summary.p95_ms),
        ("p99_ms", report.summary.p99_ms),
        ("mean_ms", report.summary.mean_ms),
        ("max_ms", report.summary.max_ms),
        ("speedup_vs_sequential", report.speedup_vs_sequential),
    ];
    writer
        .write_record(["metric", "value"])
        .and_then(|_| {
            rows.iter().try_for_each(|(metric, value)| {
                writer.write_record([metric.to_string(), format!("{value}")])
            })
        })
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvariantViolation(format!("csv write: {other:?}")),
        })?;
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes the raw makespans as `request_id,makespan_ms` rows.
pub fn write_makespans_csv(report: &LatencyReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv_writer(path)?;
    writer
        .write_record(["request_id", "makespan_ms"])
        .and_then(|_| {
            report
                .makespans_ms
                .iter()
                .enumerate()
                .try_for_each(|(request, makespan)| {
                    writer.write_record([request.to_string(), format!("{makespan}")])
                })
        })
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::InvariantViolation(format!("csv write: {other:?}")),
        })?;
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
