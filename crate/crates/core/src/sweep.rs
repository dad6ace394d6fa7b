//! Parameter sweeps across policies and seeds.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::run;
use crate::error::{Result, SimError};
use crate::metrics::{aggregate, compare, write_csv, write_json, MetricsRow, RunLabel, RunMetrics};
use crate::par::{self, Execution};
use crate::request::Request;
use crate::scenario::{Axis, Scenario, ScenarioFile, WorkloadSource};
use crate::sched::Policy;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub base: Scenario,
    pub policies: Vec<Policy>,
    /// Seeds per point: `base.sim.seed + i` for `i < repeats`.
    pub repeats: u32,
}

impl SweepSpec {
    pub fn from_file(file: &ScenarioFile) -> Result<Self> {
        let axis = file
            .axis
            .ok_or_else(|| SimError::config("a sweep needs an axis"))?;
        Ok(SweepSpec {
            axis,
            values: file.values.clone(),
            base: file.resolve()?,
            policies: file.policies.clone(),
            repeats: file.repeats,
        })
    }

    pub fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.repeats as u64).map(|i| self.base.sim.seed.wrapping_add(i))
    }

    /// Configuration of one point of the sweep.
    fn point(&self, value: f64, policy: Policy, seed: u64) -> Result<(Vec<Request>, Scenario)> {
        let mut sc = self.base.clone();
        sc.sim.scheduler.policy = policy;
        sc.sim.seed = seed;
        match (self.axis, &mut sc.workload) {
            (Axis::Rate, WorkloadSource::Synthetic(w)) => w.arrivals.rate_rps = value,
            (Axis::Cv, WorkloadSource::Synthetic(w)) => w.arrivals.cv = value,
            (Axis::Rate | Axis::Cv, WorkloadSource::Trace(_)) => {
                return Err(SimError::config(format!(
                    "cannot vary {} of a trace",
                    self.axis
                )))
            }
            (Axis::BatchSize, _) => sc.sim.batching.max_batch_size = value as usize,
            (Axis::Round, _) => {}
        }
        let mut requests = sc.workload.requests(seed)?;
        if self.axis == Axis::Round {
            for r in &mut requests {
                r.round = Some(value as u32);
            }
        }
        Ok((requests, sc))
    }
}

/// Per-point means over seeds, with deltas against FCFS at the same point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub axis: String,
    pub value: f64,
    pub policy: String,
    pub runs: usize,
    pub completed: f64,
    pub incomplete: f64,
    pub mean_jct_ms: f64,
    pub p99_jct_ms: f64,
    pub mean_queue_ms: f64,
    pub throughput_rps: f64,
    pub jct_reduction_vs_fcfs: Option<f64>,
    pub throughput_ratio_vs_fcfs: Option<f64>,
}

/// Metrics of one simulated run within a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRun {
    pub value: f64,
    pub policy: Policy,
    pub seed: u64,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// One row per (value, policy, seed), in that nesting order.
    pub rows: Vec<MetricsRow>,
    /// Same order as `rows`.
    pub runs: Vec<PointRun>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    pub fn summary_for(&self, value: f64, policy: Policy) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|s| s.value == value && s.policy == policy.as_str())
    }

    /// Runs at one point, in seed order.
    pub fn runs_for(&self, value: f64, policy: Policy) -> impl Iterator<Item = &PointRun> {
        self.runs
            .iter()
            .filter(move |r| r.value == value && r.policy == policy)
    }
}

fn format_value(v: f64) -> String {
    format!("{v}")
}

/// Runs every point. With `out_dir`, writes one per-request file per run,
/// `metrics.csv`, `metrics.json` and `summary.csv`.
pub fn run_sweep(spec: &SweepSpec, out_dir: Option<&Path>, exec: Execution) -> Result<SweepResult> {
    if spec.values.is_empty() || spec.repeats < 1 || spec.policies.is_empty() {
        return Err(SimError::config(
            "a sweep needs values, policies and repeats >= 1",
        ));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    }
    let jobs: Vec<(f64, Policy, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| {
            spec.policies
                .iter()
                .flat_map(move |&p| spec.seeds().map(move |s| (v, p, s)))
        })
        .collect();

    let results = par::map(
        jobs,
        exec,
        |(value, policy, seed)| -> Result<(MetricsRow, PointRun)> {
            let (requests, sc) = spec.point(value, policy, seed)?;
            let outcome = run(&requests, &sc.sim)?;
            let run_id = format!("{}_{}_{}_{}", spec.axis, format_value(value), policy, seed);
            if let Some(dir) = out_dir {
                write_csv(&outcome.records, dir.join(format!("run_{run_id}.csv")))?;
            }
            let metrics = aggregate(&outcome.records, outcome.incomplete.len())?;
            let rate_rps = match &sc.workload {
                WorkloadSource::Synthetic(w) => w.arrivals.rate_rps,
                WorkloadSource::Trace(reqs) => trace_rate(reqs),
            };
            let cv = match &sc.workload {
                WorkloadSource::Synthetic(w) => w.arrivals.cv,
                WorkloadSource::Trace(_) => f64::NAN,
            };
            let label = RunLabel {
                run_id,
                policy: policy.to_string(),
                batch_mode: sc.sim.batching.mode.to_string(),
                max_batch: sc.sim.batching.capacity(),
                rate_rps,
                cv,
                seed,
            };
            let row = MetricsRow::new(label, &metrics);
            Ok((
                row,
                PointRun {
                    value,
                    policy,
                    seed,
                    metrics,
                },
            ))
        },
    );
    let results: Vec<_> = results.into_iter().collect::<Result<_>>()?;

    let (rows, runs): (Vec<MetricsRow>, Vec<PointRun>) = results.into_iter().unzip();

    let mut summary = Vec::new();
    for &value in &spec.values {
        let means: Vec<(Policy, usize, MeanMetrics)> = spec
            .policies
            .iter()
            .map(|&p| {
                let at: Vec<&RunMetrics> = runs
                    .iter()
                    .filter(|r| r.value == value && r.policy == p)
                    .map(|r| &r.metrics)
                    .collect();
                (p, at.len(), mean_metrics(&at))
            })
            .collect();
        let fcfs = means
            .iter()
            .find(|(p, ..)| *p == Policy::Fcfs)
            .map(|(.., m)| m.metrics.clone());
        for (policy, count, m) in means {
            let deltas = fcfs.as_ref().map(|f| compare(&m.metrics, f));
            summary.push(SummaryRow {
                axis: spec.axis.to_string(),
                value,
                policy: policy.to_string(),
                runs: count,
                completed: m.completed,
                incomplete: m.incomplete,
                mean_jct_ms: m.metrics.mean_jct_ms,
                p99_jct_ms: m.p99_jct_ms,
                mean_queue_ms: m.metrics.mean_queue_ms,
                throughput_rps: m.metrics.throughput_rps,
                jct_reduction_vs_fcfs: deltas.map(|d| d.jct_reduction),
                throughput_ratio_vs_fcfs: deltas.map(|d| d.throughput_ratio),
            });
        }
    }

    if let Some(dir) = out_dir {
        write_csv(&rows, dir.join("metrics.csv"))?;
        write_json(&rows, dir.join("metrics.json"))?;
        write_csv(&summary, dir.join("summary.csv"))?;
    }
    Ok(SweepResult {
        rows,
        runs,
        summary,
    })
}

/// Seed-averaged metrics; only the averaged fields of `metrics` are meaningful.
struct MeanMetrics {
    metrics: RunMetrics,
    completed: f64,
    incomplete: f64,
    p99_jct_ms: f64,
}

fn mean_metrics(runs: &[&RunMetrics]) -> MeanMetrics {
    let n = runs.len() as f64;
    let avg = |f: fn(&RunMetrics) -> f64| runs.iter().map(|m| f(m)).sum::<f64>() / n;
    let mut metrics = runs[0].clone();
    metrics.mean_jct_ms = avg(|m| m.mean_jct_ms);
    metrics.mean_queue_ms = avg(|m| m.mean_queue_ms);
    metrics.throughput_rps = avg(|m| m.throughput_rps);
    metrics.throughput_tps = avg(|m| m.throughput_tps);
    MeanMetrics {
        metrics,
        completed: avg(|m| m.completed as f64),
        incomplete: avg(|m| m.incomplete as f64),
        p99_jct_ms: avg(|m| m.p99_jct_ms as f64),
    }
}

fn trace_rate(reqs: &[Request]) -> f64 {
    let span = reqs.iter().map(|r| r.arrival_ms).max().unwrap_or(0)
        - reqs.iter().map(|r| r.arrival_ms).min().unwrap_or(0);
    if span == 0 {
        0.0
    } else {
        (reqs.len() - 1) as f64 * 1000.0 / span as f64
    }
}
