//! Discrete-event simulation of one serving instance.
//!
//! Three batching disciplines share one event loop:
//!
//! - **none**: one request at a time, each occupying the server for
//!   `exec_time`.
//! - **dynamic**: a batch launches when `max_batch_size` requests are waiting,
//!   or when the oldest waiting request has waited `batch_wait_timeout_ms`
//!   and the server is free. The whole batch occupies the server for
//!   `C + K_b·max(N)` and all members complete together.
//! - **continuous**: iteration-level batching. At every iteration boundary
//!   finished requests leave and free slots are refilled from the queue.
//!   Newly admitted requests first run a prefill step of `C + K_b` that
//!   produces their first token while the requests already decoding wait;
//!   after that every occupied slot gains one token per `K_b` iteration.
//!
//! `K_b` is the per-token latency at batch size `b`. Within a stretch where
//! batch membership does not change, iteration durations accumulate exactly
//! and are rounded up to milliseconds when they surface as timestamps; a
//! single request therefore takes exactly `exec_time` in every mode.
//!
//! All events sharing a timestamp are applied (completions, then arrivals,
//! then requests becoming schedulable) before any scheduling decision is
//! made at that timestamp.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::exec::{ceil_ms, exec_time, ms_to_nanos, ExecModel, NANOS_PER_MS};
use crate::predictor::{Predictor, PredictorSpec};
use crate::request::{Millis, Request, RequestRecord};
use crate::sched::{Queued, SchedulerConfig, WaitQueue};
use crate::workload::{derive_seed, rng_for};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchMode {
    None,
    Dynamic,
    Continuous,
}

impl BatchMode {
    pub const ALL: [BatchMode; 3] = [BatchMode::None, BatchMode::Dynamic, BatchMode::Continuous];

    pub fn as_str(self) -> &'static str {
        match self {
            BatchMode::None => "none",
            BatchMode::Dynamic => "dynamic",
            BatchMode::Continuous => "continuous",
        }
    }
}

impl std::fmt::Display for BatchMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BatchMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        BatchMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                format!("unknown batch mode {s:?} (expected none, dynamic or continuous)")
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchConfig {
    pub mode: BatchMode,
    pub max_batch_size: usize,
    pub batch_wait_timeout_ms: Option<Millis>,
}

impl BatchConfig {
    pub fn none() -> Self {
        BatchConfig {
            mode: BatchMode::None,
            max_batch_size: 1,
            batch_wait_timeout_ms: None,
        }
    }

    pub fn dynamic(max_batch_size: usize, batch_wait_timeout_ms: Millis) -> Self {
        BatchConfig {
            mode: BatchMode::Dynamic,
            max_batch_size,
            batch_wait_timeout_ms: Some(batch_wait_timeout_ms),
        }
    }

    pub fn continuous(max_batch_size: usize) -> Self {
        BatchConfig {
            mode: BatchMode::Continuous,
            max_batch_size,
            batch_wait_timeout_ms: None,
        }
    }

    /// Slots actually used by the server.
    pub fn capacity(&self) -> usize {
        match self.mode {
            BatchMode::None => 1,
            _ => self.max_batch_size,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.mode != BatchMode::None && self.max_batch_size < 1 {
            errors.push("max_batch_size must be >= 1".to_string());
        }
        if self.mode == BatchMode::Dynamic && self.batch_wait_timeout_ms.is_none() {
            errors.push("dynamic batching requires batch_wait_timeout_ms".to_string());
        }
        errors
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub exec: ExecModel,
    pub predictor: PredictorSpec,
    pub scheduler: SchedulerConfig,
    pub batching: BatchConfig,
    /// Events after this time are not simulated.
    pub horizon_ms: Option<Millis>,
    pub seed: u64,
    /// Keep the event log in the outcome.
    #[serde(default)]
    pub record_events: bool,
}

impl SimConfig {
    pub fn new(exec: ExecModel, scheduler: SchedulerConfig, batching: BatchConfig) -> Self {
        SimConfig {
            exec,
            predictor: PredictorSpec::oracle(0.0),
            scheduler,
            batching,
            horizon_ms: None,
            seed: 0,
            record_events: false,
        }
    }
}

/// Every invariant violation in `cfg`, reported at once.
pub fn validate_config(cfg: &SimConfig) -> std::result::Result<(), Vec<String>> {
    let mut errors = cfg.exec.validate();
    let k = cfg.exec.k_ms_per_token;
    if k.is_finite() && k > 0.0 && ms_to_nanos(k) == 0 {
        errors.push("k_ms_per_token must be at least 1e-6".to_string());
    }
    errors.extend(cfg.predictor.validate());
    errors.extend(cfg.scheduler.validate());
    errors.extend(cfg.batching.validate());
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Arrive,
    Enqueue,
    Dispatch,
    Complete,
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub t_ms: Millis,
    pub event: EventKind,
    pub request_id: u64,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOutcome {
    /// Completed requests in completion order.
    pub records: Vec<RequestRecord>,
    /// Requests still waiting or in service at the horizon, by arrival.
    pub incomplete: Vec<u64>,
    pub events: Vec<Event>,
    /// Pairwise comparator invocations.
    pub comparisons: u64,
}

impl SimOutcome {
    pub fn submitted(&self) -> usize {
        self.records.len() + self.incomplete.len()
    }
}

pub fn write_event_log(events: &[Event], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(events, path.as_ref())
}

pub fn write_records(records: &[RequestRecord], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(records, path.as_ref())
}

fn write_jsonl<T: Serialize>(items: &[T], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| SimError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| SimError::io(path, e))?;
    }
    out.flush().map_err(|e| SimError::io(path, e))
}

/// Runs one simulation. Requests may be given in any order; they are served
/// as if sorted by `(arrival_ms, id)`.
pub fn run(requests: &[Request], cfg: &SimConfig) -> Result<SimOutcome> {
    validate_config(cfg).map_err(SimError::Config)?;
    let mut reqs = requests.to_vec();
    reqs.sort_by_key(|r| (r.arrival_ms, r.id));
    let mut seen = HashSet::with_capacity(reqs.len());
    for r in &reqs {
        r.validate()?;
        if !seen.insert(r.id) {
            return Err(SimError::DuplicateId(r.id));
        }
    }

    let predictor = Predictor::new(&cfg.predictor, &reqs)?;
    let mut prediction_rng = rng_for(derive_seed(cfg.seed, 11));
    for r in &mut reqs {
        r.predicted_tokens = Some(predictor.predict(r, &mut prediction_rng)?.predicted_tokens);
    }

    let mut sim = Sim::new(&reqs, cfg, ceil_ms(ms_to_nanos(predictor.latency_ms())));
    sim.run()?;
    Ok(sim.finish())
}

struct InFlight {
    idx: usize,
    dispatch_ms: Millis,
}

struct Slot {
    idx: usize,
    admitted_ms: Millis,
    generated: u32,
    prefilled: bool,
}

enum StepKind {
    Prefill,
    Decode(u32),
}

enum Server {
    Solo {
        running: Option<InFlight>,
        end_ms: Millis,
    },
    Static {
        members: Vec<InFlight>,
        end_ms: Millis,
    },
    Continuous {
        slots: Vec<Slot>,
        step: Option<(StepKind, Millis)>,
        anchor_ms: Millis,
        offset_ns: u64,
        changed: bool,
    },
}

impl Server {
    fn next_event(&self) -> Option<Millis> {
        match self {
            Server::Solo { running, end_ms } => running.as_ref().map(|_| *end_ms),
            Server::Static { members, end_ms } => (!members.is_empty()).then_some(*end_ms),
            Server::Continuous { step, .. } => step.as_ref().map(|(_, end)| *end),
        }
    }

    fn is_idle(&self) -> bool {
        match self {
            Server::Solo { running, .. } => running.is_none(),
            Server::Static { members, .. } => members.is_empty(),
            Server::Continuous { slots, .. } => slots.is_empty(),
        }
    }
}

struct Sim<'a> {
    reqs: &'a [Request],
    cfg: &'a SimConfig,
    latency_ms: Millis,
    index: HashMap<u64, usize>,
    queue: WaitQueue,
    server: Server,
    comparator_rng: ChaCha8Rng,
    next_arrival: usize,
    next_ready: usize,
    records: Vec<RequestRecord>,
    events: Vec<Event>,
}

impl<'a> Sim<'a> {
    fn new(reqs: &'a [Request], cfg: &'a SimConfig, latency_ms: Millis) -> Self {
        let server = match cfg.batching.mode {
            BatchMode::None => Server::Solo {
                running: None,
                end_ms: 0,
            },
            BatchMode::Dynamic => Server::Static {
                members: Vec::new(),
                end_ms: 0,
            },
            BatchMode::Continuous => Server::Continuous {
                slots: Vec::new(),
                step: None,
                anchor_ms: 0,
                offset_ns: 0,
                changed: false,
            },
        };
        Sim {
            reqs,
            cfg,
            latency_ms,
            index: reqs.iter().enumerate().map(|(i, r)| (r.id, i)).collect(),
            queue: WaitQueue::new(cfg.scheduler.clone(), cfg.exec.k_ms_per_token),
            server,
            comparator_rng: rng_for(derive_seed(cfg.seed, 12)),
            next_arrival: 0,
            next_ready: 0,
            records: Vec::with_capacity(reqs.len()),
            events: Vec::new(),
        }
    }

    fn log(
        &mut self,
        t_ms: Millis,
        event: EventKind,
        request_id: u64,
        detail: impl FnOnce() -> String,
    ) {
        if self.cfg.record_events {
            self.events.push(Event {
                t_ms,
                event,
                request_id,
                detail: detail(),
            });
        }
    }

    fn ready_ms(&self, idx: usize) -> Millis {
        self.reqs[idx].arrival_ms + self.latency_ms
    }

    fn next_ready_ms(&self) -> Option<Millis> {
        (self.next_ready < self.reqs.len()).then(|| self.ready_ms(self.next_ready))
    }

    /// When a dynamic batch would launch by timeout if nothing else happens.
    fn batch_timer(&self) -> Option<Millis> {
        let batching = &self.cfg.batching;
        if batching.mode != BatchMode::Dynamic || !self.server.is_idle() || self.queue.is_empty() {
            return None;
        }
        let timeout = batching.batch_wait_timeout_ms?;
        Some(self.queue.oldest_enqueue_ms()? + timeout)
    }

    fn run(&mut self) -> Result<()> {
        loop {
            let t_server = self.server.next_event();
            let now = [
                t_server,
                self.reqs.get(self.next_arrival).map(|r| r.arrival_ms),
                self.next_ready_ms(),
                self.batch_timer(),
            ]
            .into_iter()
            .flatten()
            .min();
            let Some(now) = now else { break };
            if self.cfg.horizon_ms.is_some_and(|h| now > h) {
                break;
            }

            if t_server == Some(now) {
                self.on_server_event(now);
            }
            while let Some(r) = self
                .reqs
                .get(self.next_arrival)
                .filter(|r| r.arrival_ms == now)
            {
                let (id, predicted) = (r.id, r.predicted_tokens);
                self.log(now, EventKind::Arrive, id, || {
                    format!("predicted_tokens={}", predicted.unwrap_or_default())
                });
                self.next_arrival += 1;
            }
            while self.next_ready_ms() == Some(now) {
                let req = self.reqs[self.next_ready].clone();
                self.next_ready += 1;
                let id = req.id;
                self.queue.enqueue(req, now, &mut self.comparator_rng)?;
                self.log(now, EventKind::Enqueue, id, String::new);
            }
            self.dispatch(now);
        }
        Ok(())
    }

    fn complete(&mut self, idx: usize, dispatch_ms: Millis, now: Millis) {
        let req = &self.reqs[idx];
        let record = RequestRecord::new(
            req,
            self.ready_ms(idx),
            dispatch_ms,
            now,
            req.predicted_tokens.unwrap_or(req.output_tokens),
        );
        let jct = record.jct_ms;
        self.records.push(record);
        self.log(now, EventKind::Complete, req.id, || format!("jct_ms={jct}"));
    }

    fn on_server_event(&mut self, now: Millis) {
        let mut done: Vec<(usize, Millis)> = Vec::new();
        match &mut self.server {
            Server::Solo { running, .. } => {
                let f = running
                    .take()
                    .expect("completion without a running request");
                done.push((f.idx, f.dispatch_ms));
            }
            Server::Static { members, .. } => {
                done.extend(members.drain(..).map(|f| (f.idx, f.dispatch_ms)));
            }
            Server::Continuous {
                slots,
                step,
                changed,
                ..
            } => {
                let (kind, _) = step.take().expect("boundary without a step");
                for slot in slots.iter_mut() {
                    match kind {
                        StepKind::Prefill if !slot.prefilled => {
                            slot.prefilled = true;
                            slot.generated += 1;
                        }
                        StepKind::Prefill => {}
                        StepKind::Decode(n) => slot.generated += n,
                    }
                }
                let reqs = self.reqs;
                slots.retain(|s| {
                    let finished = s.generated >= reqs[s.idx].output_tokens;
                    if finished {
                        done.push((s.idx, s.admitted_ms));
                    }
                    !finished
                });
                *changed |= !done.is_empty();
            }
        }
        for (idx, dispatch_ms) in done {
            self.complete(idx, dispatch_ms, now);
        }
    }

    fn dispatch(&mut self, now: Millis) {
        match self.cfg.batching.mode {
            BatchMode::None => self.dispatch_solo(now),
            BatchMode::Dynamic => self.dispatch_static(now),
            BatchMode::Continuous => self.dispatch_continuous(now),
        }
    }

    fn log_dispatch(&mut self, now: Millis, admitted: &[Queued], batch: usize) {
        for q in admitted {
            self.log(now, EventKind::Dispatch, q.request.id, || {
                format!("batch={batch}")
            });
        }
    }

    fn dispatch_solo(&mut self, now: Millis) {
        if !self.server.is_idle() {
            return;
        }
        let Some(next) = self.queue.pop_next(now) else {
            return;
        };
        let end = now + exec_time(&next.request, &self.cfg.exec);
        self.log_dispatch(now, std::slice::from_ref(&next), 1);
        self.server = Server::Solo {
            running: Some(InFlight {
                idx: self.index[&next.request.id],
                dispatch_ms: now,
            }),
            end_ms: end,
        };
    }

    fn dispatch_static(&mut self, now: Millis) {
        if !self.server.is_idle() || self.queue.is_empty() {
            return;
        }
        let max = self.cfg.batching.max_batch_size;
        let timeout = self.cfg.batching.batch_wait_timeout_ms.unwrap_or(0);
        let oldest = self.queue.oldest_enqueue_ms().unwrap_or(now);
        if self.queue.len() < max && now < oldest + timeout {
            return;
        }
        let batch = self.queue.pop_batch(max, now);
        let longest = batch
            .iter()
            .map(|q| q.request.output_tokens)
            .max()
            .unwrap_or(1);
        let end = now + self.cfg.exec.batch_time(batch.len(), longest);
        self.log_dispatch(now, &batch, batch.len());
        let members = batch
            .iter()
            .map(|q| InFlight {
                idx: self.index[&q.request.id],
                dispatch_ms: now,
            })
            .collect();
        self.server = Server::Static {
            members,
            end_ms: end,
        };
    }

    fn dispatch_continuous(&mut self, now: Millis) {
        let max = self.cfg.batching.max_batch_size;
        let free = match &self.server {
            Server::Continuous { step: Some(_), .. } => return, // mid-iteration
            Server::Continuous { slots, .. } => max - slots.len(),
            _ => unreachable!(),
        };
        let admitted = self.queue.pop_batch(free, now);
        let batch = max - free + admitted.len();
        self.log_dispatch(now, &admitted, batch);
        let new_slots: Vec<Slot> = admitted
            .iter()
            .map(|q| Slot {
                idx: self.index[&q.request.id],
                admitted_ms: now,
                generated: 0,
                prefilled: false,
            })
            .collect();
        let next_ready = self.next_ready_ms();
        let exec = self.cfg.exec;
        let reqs = self.reqs;

        let Server::Continuous {
            slots,
            step,
            anchor_ms,
            offset_ns,
            changed,
        } = &mut self.server
        else {
            unreachable!()
        };
        *changed |= !new_slots.is_empty();
        slots.extend(new_slots);
        if slots.is_empty() {
            *changed = false;
            return;
        }
        if std::mem::take(changed) {
            *anchor_ms = now;
            *offset_ns = 0;
        }

        let b = slots.len();
        let iter_ns = exec.iter_nanos(b);
        let kind = if slots.iter().any(|s| !s.prefilled) {
            *offset_ns += exec.overhead_nanos() + iter_ns;
            StepKind::Prefill
        } else {
            // Decode until the first exit, or until the first boundary at
            // which a waiting request could take a free slot.
            let mut iters = slots
                .iter()
                .map(|s| reqs[s.idx].output_tokens - s.generated)
                .min()
                .expect("non-empty batch");
            if let Some(ready) = next_ready.filter(|_| b < max) {
                let gap = ready - *anchor_ms; // >= 1: ready lies in the future
                let threshold = (gap - 1) * NANOS_PER_MS;
                let until_ready = if threshold >= *offset_ns {
                    (threshold - *offset_ns) / iter_ns + 1
                } else {
                    1
                };
                iters = iters.min(until_ready.min(u32::MAX as u64) as u32);
            }
            *offset_ns += iter_ns * iters as u64;
            StepKind::Decode(iters)
        };
        *step = Some((kind, *anchor_ms + ceil_ms(*offset_ns)));
    }

    fn finish(self) -> SimOutcome {
        let done: HashSet<u64> = self.records.iter().map(|r| r.id).collect();
        SimOutcome {
            incomplete: self
                .reqs
                .iter()
                .map(|r| r.id)
                .filter(|id| !done.contains(id))
                .collect(),
            records: self.records,
            events: self.events,
            comparisons: self.queue.comparisons(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sched::Policy;

    fn at_zero(ns: &[u32]) -> Vec<Request> {
        ns.iter()
            .enumerate()
            .map(|(i, &n)| Request::new(i as u64, 0, 1, n))
            .collect()
    }

    fn jcts(outcome: &SimOutcome) -> Vec<Millis> {
        let mut by_id: Vec<_> = outcome.records.iter().map(|r| (r.id, r.jct_ms)).collect();
        by_id.sort_unstable();
        by_id.into_iter().map(|(_, j)| j).collect()
    }

    fn cfg(policy: Policy, batching: BatchConfig, c: f64, k: f64) -> SimConfig {
        SimConfig::new(ExecModel::new(c, k), SchedulerConfig::new(policy), batching)
    }

    #[test]
    fn solo_fcfs_and_sjf() {
        let reqs = at_zero(&[9, 3, 6]);
        let fcfs = run(&reqs, &cfg(Policy::Fcfs, BatchConfig::none(), 0.0, 1.0)).unwrap();
        assert_eq!(jcts(&fcfs), vec![9, 12, 18]);
        let sjf = run(
            &reqs,
            &cfg(Policy::SjfOracle, BatchConfig::none(), 0.0, 1.0),
        )
        .unwrap();
        assert_eq!(jcts(&sjf), vec![18, 3, 9]);
    }

    #[test]
    fn dynamic_batch_runs_to_longest() {
        let reqs = at_zero(&[3, 6]);
        let out = run(
            &reqs,
            &cfg(
                Policy::Fcfs,
                BatchConfig::dynamic(2, 1_000_000_000),
                2.0,
                1.0,
            ),
        )
        .unwrap();
        assert_eq!(jcts(&out), vec![8, 8]);
    }

    #[test]
    fn dynamic_timeout_launches_partial_batch() {
        let reqs = at_zero(&[5]);
        let out = run(
            &reqs,
            &cfg(Policy::Fcfs, BatchConfig::dynamic(4, 30), 0.0, 1.0),
        )
        .unwrap();
        assert_eq!(out.records[0].dispatch_ms, 30);
        assert_eq!(out.records[0].jct_ms, 35);
    }

    #[test]
    fn dynamic_waits_for_busy_server_then_takes_what_is_queued() {
        // id 0 (N=10) launches alone at its timeout (t=5); ids 1..3 arrive
        // while it runs and launch together when it ends at t=15.
        let mut reqs = at_zero(&[10]);
        for (i, n) in [(1, 2), (2, 4), (3, 3)] {
            reqs.push(Request::new(i, 6, 1, n));
        }
        let out = run(
            &reqs,
            &cfg(Policy::Fcfs, BatchConfig::dynamic(4, 5), 0.0, 1.0),
        )
        .unwrap();
        let d: Vec<_> = out
            .records
            .iter()
            .map(|r| (r.id, r.dispatch_ms, r.completion_ms))
            .collect();
        assert_eq!(d, vec![(0, 5, 15), (1, 15, 19), (2, 15, 19), (3, 15, 19)]);
    }

    #[test]
    fn continuous_substitutes_finished_requests() {
        let reqs = at_zero(&[1, 2, 4]);
        let mut c = cfg(Policy::Ssjf, BatchConfig::continuous(2), 0.0, 1.0);
        c.predictor = PredictorSpec::oracle(0.0);
        let out = run(&reqs, &c).unwrap();
        assert_eq!(jcts(&out), vec![1, 3, 5]);
        assert_eq!(out.records[2].dispatch_ms, 1);
    }

    #[test]
    fn continuous_admission_pays_overhead() {
        // C = 3, K = 1: solo request takes C + K·N
        let reqs = at_zero(&[4]);
        let out = run(
            &reqs,
            &cfg(Policy::Fcfs, BatchConfig::continuous(4), 3.0, 1.0),
        )
        .unwrap();
        assert_eq!(out.records[0].jct_ms, 7);
    }

    #[test]
    fn continuous_joins_at_next_boundary() {
        // K = 3: a request arriving at t=4 joins at the boundary t=6
        let reqs = vec![Request::new(0, 0, 1, 5), Request::new(1, 4, 1, 1)];
        let out = run(
            &reqs,
            &cfg(Policy::Fcfs, BatchConfig::continuous(2), 0.0, 3.0),
        )
        .unwrap();
        let r1 = out.records.iter().find(|r| r.id == 1).unwrap();
        assert_eq!((r1.dispatch_ms, r1.completion_ms), (6, 9));
        // id 0: tokens at 3, 6; stalls during id 1's prefill; 12, 15, 18
        let r0 = out.records.iter().find(|r| r.id == 0).unwrap();
        assert_eq!(r0.completion_ms, 18);
    }

    #[test]
    fn predictor_latency_delays_eligibility() {
        let reqs = at_zero(&[5]);
        let mut c = cfg(Policy::Fcfs, BatchConfig::none(), 0.0, 1.0);
        c.predictor = PredictorSpec::oracle(7.6);
        let out = run(&reqs, &c).unwrap();
        let r = &out.records[0];
        assert_eq!((r.ready_ms, r.dispatch_ms, r.completion_ms), (8, 8, 13));
    }

    #[test]
    fn horizon_leaves_incomplete() {
        let reqs = at_zero(&[10, 10, 10]);
        let mut c = cfg(Policy::Fcfs, BatchConfig::none(), 0.0, 1.0);
        c.horizon_ms = Some(20);
        let out = run(&reqs, &c).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.incomplete, vec![2]);
        assert_eq!(out.submitted(), 3);
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(Policy::Fcfs, BatchConfig::dynamic(4, 10), 0.0, 1.0);
        c.batching.batch_wait_timeout_ms = None;
        assert_eq!(validate_config(&c).unwrap_err().len(), 1);
        c.batching = BatchConfig::continuous(0);
        assert_eq!(validate_config(&c).unwrap_err().len(), 1);
        c.exec.k_ms_per_token = 0.0;
        c.predictor.latency_ms = -1.0;
        assert_eq!(validate_config(&c).unwrap_err().len(), 3);
        assert!(validate_config(&cfg(Policy::Ssjf, BatchConfig::none(), 0.0, 1.0)).is_ok());
        assert!(matches!(run(&[], &c), Err(SimError::Config(e)) if e.len() == 3));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let reqs = vec![Request::new(1, 0, 1, 1), Request::new(1, 5, 1, 1)];
        let err = run(&reqs, &cfg(Policy::Fcfs, BatchConfig::none(), 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, SimError::DuplicateId(1)));
    }

    #[test]
    fn event_log_is_time_ordered() {
        let reqs = vec![Request::new(0, 0, 1, 3), Request::new(1, 1, 1, 1)];
        let mut c = cfg(Policy::Fcfs, BatchConfig::none(), 0.0, 1.0);
        c.record_events = true;
        let out = run(&reqs, &c).unwrap();
        let kinds: Vec<_> = out
            .events
            .iter()
            .map(|e| (e.t_ms, e.event, e.request_id))
            .collect();
        use EventKind::*;
        assert_eq!(
            kinds,
            vec![
                (0, Arrive, 0),
                (0, Enqueue, 0),
                (0, Dispatch, 0),
                (1, Arrive, 1),
                (1, Enqueue, 1),
                (3, Complete, 0),
                (3, Dispatch, 1),
                (4, Complete, 1),
            ]
        );
    }
}
