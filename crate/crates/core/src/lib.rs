//! Discrete-event simulator for LLM serving under speculative
//! shortest-job-first scheduling.
//!
//! A run takes a list of [`Request`]s, predicts each output length, queues
//! requests under a [`Policy`] and serves them on one instance with a
//! configurable batching discipline ([`BatchMode`]). Execution time follows
//! the affine model `T = C + K·N` ([`ExecModel`]).
//!
//! ```
//! use ssjf_core::{run, BatchConfig, ExecModel, Policy, Request, SchedulerConfig, SimConfig};
//!
//! let requests = vec![Request::new(0, 0, 8, 9), Request::new(1, 0, 8, 3), Request::new(2, 0, 8, 6)];
//! let cfg = SimConfig::new(ExecModel::new(0.0, 1.0), SchedulerConfig::new(Policy::SjfOracle), BatchConfig::none());
//! let outcome = run(&requests, &cfg).unwrap();
//! let mean = outcome.records.iter().map(|r| r.jct_ms).sum::<u64>() as f64 / 3.0;
//! assert_eq!(mean, 10.0);
//! ```

pub mod bucket;
pub mod engine;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod par;
pub mod predictor;
pub mod request;
pub mod scenario;
pub mod sched;
pub mod sweep;
pub mod workload;

pub use bucket::{bucketize, compute_bucket_boundaries, BucketBoundaries};
pub use engine::{
    run, validate_config, BatchConfig, BatchMode, Event, EventKind, SimConfig, SimOutcome,
};
pub use error::{Result, SimError};
pub use exec::{exec_time, iter_time, ExecModel};
pub use metrics::{aggregate, compare, Deltas, MetricsRow, RunMetrics};
pub use predictor::{Predictor, PredictorKind, PredictorSpec};
pub use request::{Millis, Request, RequestRecord};
pub use scenario::{Axis, Scenario, ScenarioFile, WorkloadSource};
pub use sched::{Policy, SchedulerConfig, WaitQueue};
pub use sweep::{run_sweep, SweepResult, SweepSpec};
pub use workload::{load_trace, save_trace, ArrivalSpec, LengthSpec, WorkloadSpec};
