//! Aggregate statistics over completed requests.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bucket::nearest_rank;
use crate::error::{Result, SimError};
use crate::request::{Millis, RequestRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub completed: usize,
    pub incomplete: usize,
    pub mean_jct_ms: f64,
    pub p50_jct_ms: Millis,
    pub p95_jct_ms: Millis,
    pub p99_jct_ms: Millis,
    pub mean_queue_ms: f64,
    pub throughput_rps: f64,
    pub throughput_tps: f64,
    /// First arrival to last completion among completed requests.
    pub makespan_ms: Millis,
}

/// Aggregates completed records; `incomplete` is carried through as a count.
pub fn aggregate(records: &[RequestRecord], incomplete: usize) -> Result<RunMetrics> {
    if records.is_empty() {
        return Err(SimError::EmptyInput("no completed requests to aggregate"));
    }
    let n = records.len();
    let mut jcts: Vec<Millis> = records.iter().map(|r| r.jct_ms).collect();
    jcts.sort_unstable();
    let first = records.iter().map(|r| r.arrival_ms).min().unwrap_or(0);
    let last = records.iter().map(|r| r.completion_ms).max().unwrap_or(0);
    // a zero-length window would divide by zero; count it as one ms
    let makespan_ms = last - first;
    let window_s = makespan_ms.max(1) as f64 / 1000.0;
    let tokens: u64 = records.iter().map(|r| r.output_tokens as u64).sum();
    Ok(RunMetrics {
        completed: n,
        incomplete,
        mean_jct_ms: jcts.iter().map(|&j| j as f64).sum::<f64>() / n as f64,
        p50_jct_ms: nearest_rank(&jcts, 50, 100),
        p95_jct_ms: nearest_rank(&jcts, 95, 100),
        p99_jct_ms: nearest_rank(&jcts, 99, 100),
        mean_queue_ms: records.iter().map(|r| r.queue_ms as f64).sum::<f64>() / n as f64,
        throughput_rps: n as f64 / window_s,
        throughput_tps: tokens as f64 / window_s,
        makespan_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    /// `1 - a/b` on mean JCT; positive when `a` is faster.
    pub jct_reduction: f64,
    /// `a/b` on completed-request throughput.
    pub throughput_ratio: f64,
}

pub fn compare(a: &RunMetrics, b: &RunMetrics) -> Deltas {
    Deltas {
        jct_reduction: 1.0 - a.mean_jct_ms / b.mean_jct_ms,
        throughput_ratio: a.throughput_rps / b.throughput_rps,
    }
}

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub policy: String,
    pub batch_mode: String,
    pub max_batch: usize,
    pub rate_rps: f64,
    pub cv: f64,
    pub seed: u64,
    pub completed: usize,
    pub incomplete: usize,
    pub mean_jct_ms: f64,
    pub p50_jct_ms: Millis,
    pub p95_jct_ms: Millis,
    pub p99_jct_ms: Millis,
    pub mean_queue_ms: f64,
    pub throughput_rps: f64,
    pub throughput_tps: f64,
    pub makespan_ms: Millis,
}

/// Identifies the run a [`MetricsRow`] belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLabel {
    pub run_id: String,
    pub policy: String,
    pub batch_mode: String,
    pub max_batch: usize,
    pub rate_rps: f64,
    pub cv: f64,
    pub seed: u64,
}

impl MetricsRow {
    pub fn new(label: RunLabel, m: &RunMetrics) -> Self {
        MetricsRow {
            run_id: label.run_id,
            policy: label.policy,
            batch_mode: label.batch_mode,
            max_batch: label.max_batch,
            rate_rps: label.rate_rps,
            cv: label.cv,
            seed: label.seed,
            completed: m.completed,
            incomplete: m.incomplete,
            mean_jct_ms: m.mean_jct_ms,
            p50_jct_ms: m.p50_jct_ms,
            p95_jct_ms: m.p95_jct_ms,
            p99_jct_ms: m.p99_jct_ms,
            mean_queue_ms: m.mean_queue_ms,
            throughput_rps: m.throughput_rps,
            throughput_tps: m.throughput_tps,
            makespan_ms: m.makespan_ms,
        }
    }
}

pub fn write_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| SimError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SimError::io(path, e))?;
    csv::Reader::from_reader(file)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(Into::into)
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| SimError::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n").map_err(|e| SimError::io(path, e))
}
