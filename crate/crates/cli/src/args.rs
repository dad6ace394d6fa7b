use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use ssjf_core::par::THREADS_ENV;
use ssjf_core::scenario::PredictorChoice;
use ssjf_core::{Axis, BatchMode, Millis, Policy, ScenarioFile};

#[derive(Debug, Parser)]
#[command(
    name = "ssjf-sim",
    version,
    about = "Simulate LLM serving under FCFS and (speculative) shortest-job-first scheduling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one configuration and report its metrics.
    Run {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Write metrics.csv, metrics.json and records.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the event log (JSON Lines) to this file.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Run every point of a sweep across policies and seeds.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long, env = THREADS_ENV)]
        threads: Option<usize>,
    },
    /// Generate a synthetic workload and save it as a trace.
    GenTrace {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a configuration without running it.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
}

/// A scenario file plus per-field overrides. Flags are named after the
/// file's keys.
#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario file (TOML); built-in defaults otherwise.
    #[arg(long, short)]
    pub config: Option<PathBuf>,

    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    rounds: Option<u32>,
    /// Mean arrival rate (requests/s).
    #[arg(long, conflicts_with = "utilization")]
    rate_rps: Option<f64>,
    /// Arrival rate as a fraction of the estimated saturation rate.
    #[arg(long)]
    utilization: Option<f64>,
    /// Coefficient of variation of inter-arrival gaps.
    #[arg(long)]
    cv: Option<f64>,
    #[arg(long)]
    median_tokens: Option<u32>,
    /// p95/p50 of the output length distribution.
    #[arg(long)]
    tail_ratio: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    #[arg(long)]
    input_median_tokens: Option<u32>,
    #[arg(long)]
    input_tail_ratio: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,

    #[arg(long)]
    c_ms: Option<f64>,
    /// Per-token decode time (ms).
    #[arg(long)]
    k_ms_per_token: Option<f64>,
    /// Relative slowdown per extra batch member.
    #[arg(long)]
    batch_slope: Option<f64>,

    /// oracle, bucket_noise, mult_noise or file.
    #[arg(long)]
    predictor: Option<PredictorChoice>,
    #[arg(long)]
    latency_ms: Option<f64>,
    #[arg(long)]
    class_count: Option<usize>,
    #[arg(long)]
    accuracy: Option<f64>,
    /// Comma-separated accuracies for rounds 1, 2, ...
    #[arg(long, value_delimiter = ',')]
    accuracy_per_round: Option<Vec<f64>>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    #[arg(long)]
    predictions: Option<PathBuf>,

    /// fcfs, sjf_oracle, ssjf or pairwise.
    #[arg(long)]
    policy: Option<Policy>,
    #[arg(long)]
    aging_ms_per_token: Option<f64>,
    #[arg(long)]
    pairwise_accuracy: Option<f64>,

    /// none, dynamic or continuous.
    #[arg(long)]
    batch_mode: Option<BatchMode>,
    #[arg(long)]
    max_batch_size: Option<usize>,
    #[arg(long)]
    batch_wait_timeout_ms: Option<Millis>,
    #[arg(long)]
    horizon_ms: Option<Millis>,

    /// Sweep axis: rate, cv, batch_size or round.
    #[arg(long)]
    axis: Option<Axis>,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
    /// Comma-separated policies.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<Policy>>,
    #[arg(long)]
    repeats: Option<u32>,
}

impl ScenarioArgs {
    /// Loads the file (or defaults) and applies the flags given.
    pub fn resolve(&self) -> ssjf_core::Result<ScenarioFile> {
        let mut f = match &self.config {
            Some(path) => ScenarioFile::load(path)?,
            None => ScenarioFile::default(),
        };
        macro_rules! set {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { f.$field = v.clone(); })*
            };
        }
        macro_rules! set_some {
            ($($field:ident),* $(,)?) => {
                $(if let Some(v) = &self.$field { f.$field = Some(v.clone()); })*
            };
        }
        set!(
            requests,
            rounds,
            cv,
            median_tokens,
            tail_ratio,
            max_tokens,
            input_median_tokens,
            input_tail_ratio,
            seed,
            c_ms,
            k_ms_per_token,
            batch_slope,
            predictor,
            latency_ms,
            class_count,
            accuracy,
            accuracy_per_round,
            noise_sigma,
            policy,
            aging_ms_per_token,
            pairwise_accuracy,
            batch_mode,
            max_batch_size,
            values,
            policies,
            repeats,
        );
        set_some!(trace, predictions, batch_wait_timeout_ms, horizon_ms, axis);
        // a rate given on the command line replaces the file's choice
        if let Some(r) = self.rate_rps {
            f.rate_rps = Some(r);
            f.utilization = None;
        }
        if let Some(u) = self.utilization {
            f.utilization = Some(u);
            f.rate_rps = None;
        }
        Ok(f)
    }
}
