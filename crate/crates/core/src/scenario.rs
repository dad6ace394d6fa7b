//! Flat key-value scenario files.
//!
//! Every key maps onto one field of the simulation, workload or sweep
//! configuration; omitted keys take the defaults below. The workload rate is
//! either given directly (`rate_rps`) or as a fraction of the server's
//! saturation rate (`utilization`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::{validate_config, BatchConfig, BatchMode, SimConfig};
use crate::error::{Result, SimError};
use crate::exec::ExecModel;
use crate::predictor::{
    AccuracyTable, BucketNoiseSpec, PredictorKind, PredictorSpec, DEFAULT_LATENCY_MS,
};
use crate::request::{Millis, Request};
use crate::sched::{Policy, SchedulerConfig};
use crate::workload::{gen_lengths, load_trace, ArrivalSpec, LengthSpec, WorkloadSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorChoice {
    Oracle,
    BucketNoise,
    MultNoise,
    File,
}

impl PredictorChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            PredictorChoice::Oracle => "oracle",
            PredictorChoice::BucketNoise => "bucket_noise",
            PredictorChoice::MultNoise => "mult_noise",
            PredictorChoice::File => "file",
        }
    }
}

impl std::str::FromStr for PredictorChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        use PredictorChoice::*;
        [Oracle, BucketNoise, MultNoise, File]
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown predictor {s:?} (expected oracle, bucket_noise, mult_noise or file)"
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Rate,
    Cv,
    BatchSize,
    Round,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Rate => "rate",
            Axis::Cv => "cv",
            Axis::BatchSize => "batch_size",
            Axis::Round => "round",
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        [Axis::Rate, Axis::Cv, Axis::BatchSize, Axis::Round]
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown axis {s:?} (expected rate, cv, batch_size or round)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    /// Replay this trace instead of generating a workload.
    pub trace: Option<PathBuf>,
    /// Conversations; the workload has `requests × rounds` requests.
    pub requests: usize,
    pub rounds: u32,
    pub rate_rps: Option<f64>,
    /// Fraction of the saturation rate, used when `rate_rps` is absent.
    pub utilization: Option<f64>,
    pub cv: f64,
    pub median_tokens: u32,
    pub tail_ratio: f64,
    pub max_tokens: u32,
    pub input_median_tokens: u32,
    pub input_tail_ratio: f64,
    pub seed: u64,

    pub c_ms: f64,
    pub k_ms_per_token: f64,
    pub batch_slope: f64,

    pub predictor: PredictorChoice,
    pub latency_ms: f64,
    pub class_count: usize,
    pub accuracy: f64,
    /// Accuracy for rounds 1, 2, ...; later rounds use the last entry.
    pub accuracy_per_round: Vec<f64>,
    pub noise_sigma: f64,
    pub predictions: Option<PathBuf>,

    pub policy: Policy,
    pub aging_ms_per_token: f64,
    pub pairwise_accuracy: f64,

    pub batch_mode: BatchMode,
    pub max_batch_size: usize,
    pub batch_wait_timeout_ms: Option<Millis>,
    pub horizon_ms: Option<Millis>,

    pub axis: Option<Axis>,
    pub values: Vec<f64>,
    pub policies: Vec<Policy>,
    pub repeats: u32,
}

pub const DEFAULT_UTILIZATION: f64 = 0.9;

impl Default for ScenarioFile {
    fn default() -> Self {
        let exec = ExecModel::default();
        ScenarioFile {
            trace: None,
            requests: 1000,
            rounds: 1,
            rate_rps: None,
            utilization: None,
            cv: 2.0,
            median_tokens: 100,
            tail_ratio: 10.0,
            max_tokens: 8192,
            input_median_tokens: 100,
            input_tail_ratio: 4.0,
            seed: 1,
            c_ms: exec.c_ms,
            k_ms_per_token: exec.k_ms_per_token,
            batch_slope: exec.batch_slope,
            predictor: PredictorChoice::BucketNoise,
            latency_ms: DEFAULT_LATENCY_MS,
            class_count: 5,
            accuracy: 0.615,
            accuracy_per_round: Vec::new(),
            noise_sigma: 0.5,
            predictions: None,
            policy: Policy::Ssjf,
            aging_ms_per_token: 0.0,
            pairwise_accuracy: 1.0,
            batch_mode: BatchMode::None,
            max_batch_size: 1,
            batch_wait_timeout_ms: None,
            horizon_ms: None,
            axis: None,
            values: Vec::new(),
            policies: vec![Policy::Fcfs, Policy::Ssjf, Policy::SjfOracle],
            repeats: 1,
        }
    }
}

/// Where a scenario's requests come from.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkloadSource {
    Synthetic(WorkloadSpec),
    Trace(Vec<Request>),
}

impl WorkloadSource {
    /// Requests for one seed; traces ignore the seed.
    pub fn requests(&self, seed: u64) -> Result<Vec<Request>> {
        match self {
            WorkloadSource::Synthetic(spec) => spec.clone().with_seed(seed).generate(),
            WorkloadSource::Trace(reqs) => Ok(reqs.clone()),
        }
    }
}

/// A fully resolved scenario: requests plus simulation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub workload: WorkloadSource,
    pub sim: SimConfig,
}

impl ScenarioFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
        toml::from_str(&text).map_err(|e| SimError::Parse {
            path: path.to_path_buf(),
            line: e
                .span()
                .map_or(0, |s| text[..s.start].matches('\n').count() + 1),
            message: e.message().to_string(),
        })
    }

    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        toml::from_str(text).map_err(|e| e.message().to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn exec(&self) -> ExecModel {
        ExecModel::new(self.c_ms, self.k_ms_per_token).with_batch_slope(self.batch_slope)
    }

    pub fn batching(&self) -> BatchConfig {
        BatchConfig {
            mode: self.batch_mode,
            max_batch_size: self.max_batch_size,
            batch_wait_timeout_ms: self.batch_wait_timeout_ms,
        }
    }

    pub fn outputs(&self) -> LengthSpec {
        LengthSpec {
            median_tokens: self.median_tokens,
            tail_ratio: self.tail_ratio,
            max_tokens: self.max_tokens,
            seed: 0,
        }
    }

    pub fn predictor_spec(&self) -> PredictorSpec {
        let kind = match self.predictor {
            PredictorChoice::Oracle => PredictorKind::Oracle,
            PredictorChoice::BucketNoise => {
                let mut spec = BucketNoiseSpec::new(self.class_count, self.accuracy);
                spec.accuracy = AccuracyTable {
                    default: self.accuracy,
                    per_round: self.accuracy_per_round.clone(),
                };
                PredictorKind::BucketNoise(spec)
            }
            PredictorChoice::MultNoise => PredictorKind::MultNoise {
                sigma: self.noise_sigma,
            },
            PredictorChoice::File => PredictorKind::File {
                path: self.predictions.clone().unwrap_or_default(),
            },
        };
        PredictorSpec {
            kind,
            latency_ms: self.latency_ms,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            exec: self.exec(),
            predictor: self.predictor_spec(),
            scheduler: SchedulerConfig {
                policy: self.policy,
                aging_ms_per_token: self.aging_ms_per_token,
                pairwise_accuracy: self.pairwise_accuracy,
            },
            batching: self.batching(),
            horizon_ms: self.horizon_ms,
            seed: self.seed,
            record_events: false,
        }
    }

    /// Arrival rate in requests per second.
    pub fn rate(&self) -> f64 {
        self.rate_rps.unwrap_or_else(|| {
            self.utilization.unwrap_or(DEFAULT_UTILIZATION)
                * saturation_rate_rps(&self.exec(), &self.outputs(), &self.batching())
        })
    }

    pub fn workload_spec(&self) -> WorkloadSpec {
        WorkloadSpec {
            arrivals: ArrivalSpec {
                rate_rps: self.rate(),
                cv: self.cv,
                count: self.requests,
                seed: 0,
            },
            outputs: self.outputs(),
            inputs: LengthSpec {
                median_tokens: self.input_median_tokens,
                tail_ratio: self.input_tail_ratio,
                max_tokens: self.max_tokens,
                seed: 0,
            },
            rounds: self.rounds,
        }
        .with_seed(self.seed)
    }

    /// Every problem with the file, reported at once. Does not touch the
    /// filesystem.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.rate_rps.is_some() && self.utilization.is_some() {
            errors.push("set at most one of rate_rps and utilization".to_string());
        }
        if let Some(u) = self.utilization {
            if !(u.is_finite() && u > 0.0) {
                errors.push(format!("utilization must be > 0, got {u}"));
            }
        }
        if self.predictor == PredictorChoice::File && self.predictions.is_none() {
            errors.push("predictor = \"file\" requires predictions".to_string());
        }
        if let Err(e) = validate_config(&self.sim_config()) {
            errors.extend(e);
        }
        if self.trace.is_none() {
            let mut spec = self.workload_spec();
            if !spec.arrivals.rate_rps.is_finite() {
                spec.arrivals.rate_rps = 1.0; // reported through utilization above
            }
            errors.extend(spec.validate());
        }
        if let Some(axis) = self.axis {
            errors.extend(self.validate_sweep(axis));
        }
        errors
    }

    fn validate_sweep(&self, axis: Axis) -> Vec<String> {
        let mut errors = Vec::new();
        if self.values.is_empty() {
            errors.push("sweep values must not be empty".to_string());
        }
        if self.repeats < 1 {
            errors.push("repeats must be >= 1".to_string());
        }
        if self.policies.is_empty() {
            errors.push("sweep policies must not be empty".to_string());
        }
        let bad = |pred: &dyn Fn(f64) -> bool| {
            self.values
                .iter()
                .copied()
                .filter(|&v| !pred(v))
                .collect::<Vec<_>>()
        };
        let whole = |v: f64| v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64;
        let invalid = match axis {
            Axis::Rate | Axis::Cv => bad(&|v| v.is_finite() && v > 0.0),
            Axis::BatchSize | Axis::Round => bad(&whole),
        };
        if !invalid.is_empty() {
            errors.push(format!("invalid {axis} values {invalid:?}"));
        }
        if self.trace.is_some() && matches!(axis, Axis::Rate | Axis::Cv) {
            errors.push(format!(
                "a {axis} sweep needs a generated workload, not a trace"
            ));
        }
        if axis == Axis::BatchSize && self.batch_mode == BatchMode::None {
            errors.push("a batch_size sweep needs batch_mode dynamic or continuous".to_string());
        }
        errors
    }

    /// Validates and loads any referenced trace.
    pub fn resolve(&self) -> Result<Scenario> {
        let errors = self.validate();
        if !errors.is_empty() {
            return Err(SimError::Config(errors));
        }
        let workload = match &self.trace {
            Some(path) => WorkloadSource::Trace(load_trace(path)?),
            None => WorkloadSource::Synthetic(self.workload_spec()),
        };
        Ok(Scenario {
            workload,
            sim: self.sim_config(),
        })
    }
}

const CAPACITY_SAMPLES: usize = 200_000;
const CAPACITY_SEED: u64 = 0x5eed;

/// Request rate at which the server is fully busy, estimated from a fixed
/// sample of output lengths.
///
/// - none: one request per `C + K·E[N]`.
/// - continuous: each request costs one prefill step `C + K_b` during which
///   the batch stalls, plus `N − 1` decode iterations shared by `b` slots.
/// - dynamic: `b` requests per `C + K_b·E[max of b lengths]`.
pub fn saturation_rate_rps(exec: &ExecModel, outputs: &LengthSpec, batching: &BatchConfig) -> f64 {
    let sample = gen_lengths(
        &LengthSpec {
            seed: CAPACITY_SEED,
            ..outputs.clone()
        },
        CAPACITY_SAMPLES,
    );
    let b = batching.capacity().max(1);
    let c = exec.overhead_nanos() as f64 / 1e6;
    let k = exec.iter_nanos(b) as f64 / 1e6;
    let mean = sample.iter().map(|&n| n as f64).sum::<f64>() / sample.len() as f64;
    let per_request_ms = match batching.mode {
        BatchMode::None => c + k * mean,
        BatchMode::Continuous => c + k + k * (mean - 1.0) / b as f64,
        BatchMode::Dynamic => {
            let groups = sample.chunks_exact(b);
            let count = groups.len() as f64;
            let mean_max = groups.map(|g| *g.iter().max().unwrap() as f64).sum::<f64>() / count;
            (c + k * mean_max) / b as f64
        }
    };
    1000.0 / per_request_ms
}
