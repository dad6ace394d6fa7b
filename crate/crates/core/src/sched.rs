//! Waiting-queue policies.
//!
//! - `fcfs`: arrival order.
//! - `sjf_oracle`: shortest true output length first.
//! - `ssjf`: shortest *predicted* output length first.
//! - `pairwise`: sorted insertion driven by a noisy pairwise comparator.
//!
//! SJF-family policies can age waiting requests: the effective key is
//! `base − aging · (now − enqueue) / K`, so a request gains one token of
//! priority every `K / aging` milliseconds. Ties are broken by
//! `(arrival_ms, id)` everywhere.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashSet, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::predictor;
use crate::request::{Millis, Request};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    Fcfs,
    SjfOracle,
    Ssjf,
    Pairwise,
}

impl Policy {
    pub const ALL: [Policy; 4] = [
        Policy::Fcfs,
        Policy::SjfOracle,
        Policy::Ssjf,
        Policy::Pairwise,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Fcfs => "fcfs",
            Policy::SjfOracle => "sjf_oracle",
            Policy::Ssjf => "ssjf",
            Policy::Pairwise => "pairwise",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Policy::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                format!("unknown policy {s:?} (expected fcfs, sjf_oracle, ssjf or pairwise)")
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub policy: Policy,
    #[serde(default)]
    pub aging_ms_per_token: f64,
    #[serde(default = "one")]
    pub pairwise_accuracy: f64,
}

fn one() -> f64 {
    1.0
}

impl SchedulerConfig {
    pub fn new(policy: Policy) -> Self {
        SchedulerConfig {
            policy,
            aging_ms_per_token: 0.0,
            pairwise_accuracy: 1.0,
        }
    }

    pub fn with_aging(mut self, aging_ms_per_token: f64) -> Self {
        self.aging_ms_per_token = aging_ms_per_token;
        self
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.aging_ms_per_token.is_finite() && self.aging_ms_per_token >= 0.0) {
            errors.push(format!(
                "aging_ms_per_token must be >= 0, got {}",
                self.aging_ms_per_token
            ));
        }
        if self.policy == Policy::Pairwise
            && !(self.pairwise_accuracy > 0.0 && self.pairwise_accuracy <= 1.0)
        {
            errors.push(format!(
                "pairwise_accuracy must be in (0, 1], got {}",
                self.pairwise_accuracy
            ));
        }
        errors
    }
}

/// A request waiting in the queue.
#[derive(Debug, Clone, PartialEq)]
pub struct Queued {
    pub request: Request,
    pub enqueue_ms: Millis,
}

#[derive(Debug)]
struct Keyed {
    /// `base + aging · enqueue / K`; the `now` term of the effective key is
    /// common to every entry and does not affect the order.
    priority: f64,
    entry: Queued,
}

impl Keyed {
    fn tie(&self) -> (Millis, u64) {
        (self.entry.request.arrival_ms, self.entry.request.id)
    }
}

impl PartialEq for Keyed {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Keyed {}

impl PartialOrd for Keyed {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Keyed {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; smallest priority must come out first
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| other.tie().cmp(&self.tie()))
    }
}

#[derive(Debug)]
enum Store {
    Keyed(BinaryHeap<Keyed>),
    Sorted(VecDeque<Queued>),
}

/// The waiting queue of one serving instance.
#[derive(Debug)]
pub struct WaitQueue {
    config: SchedulerConfig,
    k_ms_per_token: f64,
    store: Store,
    ids: HashSet<u64>,
    by_enqueue: BTreeSet<(Millis, u64)>,
    comparisons: u64,
}

impl WaitQueue {
    /// `k_ms_per_token` converts waiting time into aging credit.
    pub fn new(config: SchedulerConfig, k_ms_per_token: f64) -> Self {
        let store = match config.policy {
            Policy::Pairwise => Store::Sorted(VecDeque::new()),
            _ => Store::Keyed(BinaryHeap::new()),
        };
        WaitQueue {
            config,
            k_ms_per_token,
            store,
            ids: HashSet::new(),
            by_enqueue: BTreeSet::new(),
            comparisons: 0,
        }
    }

    pub fn policy(&self) -> Policy {
        self.config.policy
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Comparator invocations made by pairwise insertions so far.
    pub fn comparisons(&self) -> u64 {
        self.comparisons
    }

    /// Enqueue time of the longest-waiting request.
    pub fn oldest_enqueue_ms(&self) -> Option<Millis> {
        self.by_enqueue.first().map(|&(t, _)| t)
    }

    /// Scheduling key before aging: true length for the oracle, predicted
    /// length for SSJF, nothing for FCFS.
    pub fn base_key(&self, req: &Request) -> Result<f64> {
        Ok(match self.config.policy {
            Policy::Fcfs | Policy::Pairwise => 0.0,
            Policy::SjfOracle => req.output_tokens as f64,
            Policy::Ssjf => req
                .predicted_tokens
                .ok_or(SimError::MissingPrediction(req.id))? as f64,
        })
    }

    fn aging_rate(&self) -> f64 {
        match self.config.policy {
            Policy::SjfOracle | Policy::Ssjf => {
                self.config.aging_ms_per_token / self.k_ms_per_token
            }
            _ => 0.0,
        }
    }

    /// Key used to pick the next request at `now_ms`; smaller runs first.
    pub fn effective_key(&self, entry: &Queued, now_ms: Millis) -> Result<f64> {
        let waited = now_ms.saturating_sub(entry.enqueue_ms) as f64;
        Ok(self.base_key(&entry.request)? - self.aging_rate() * waited)
    }

    pub fn enqueue<R: Rng + ?Sized>(
        &mut self,
        req: Request,
        now_ms: Millis,
        rng: &mut R,
    ) -> Result<()> {
        if self.ids.contains(&req.id) {
            return Err(SimError::DuplicateId(req.id));
        }
        let base = self.base_key(&req)?;
        let aging = self.aging_rate();
        let accuracy = self.config.pairwise_accuracy;
        let entry = Queued {
            request: req,
            enqueue_ms: now_ms,
        };
        let id = entry.request.id;
        match &mut self.store {
            Store::Keyed(heap) => {
                let priority = if aging == 0.0 {
                    base
                } else {
                    base + aging * now_ms as f64
                };
                heap.push(Keyed { priority, entry });
            }
            Store::Sorted(list) => {
                let (pos, probes) = pairwise_position(list, &entry.request, accuracy, rng);
                self.comparisons += probes;
                list.insert(pos, entry);
            }
        }
        self.ids.insert(id);
        self.by_enqueue.insert((now_ms, id));
        Ok(())
    }

    /// Removes and returns the request with the smallest effective key.
    pub fn pop_next(&mut self, _now_ms: Millis) -> Option<Queued> {
        let entry = match &mut self.store {
            Store::Keyed(heap) => heap.pop().map(|k| k.entry),
            Store::Sorted(list) => list.pop_front(),
        }?;
        self.ids.remove(&entry.request.id);
        self.by_enqueue
            .remove(&(entry.enqueue_ms, entry.request.id));
        Some(entry)
    }

    pub fn pop_batch(&mut self, k: usize, now_ms: Millis) -> Vec<Queued> {
        std::iter::from_fn(|| self.pop_next(now_ms))
            .take(k)
            .collect()
    }
}

/// Binary-search insertion point for `req` into a queue kept shortest-first.
/// Each probe asks the comparator whether `req` is longer than the probed
/// entry. Returns the position and the number of probes, which is at most
/// `ceil(log2(len + 1))`.
fn pairwise_position<R: Rng + ?Sized>(
    list: &VecDeque<Queued>,
    req: &Request,
    accuracy: f64,
    rng: &mut R,
) -> (usize, u64) {
    let (mut lo, mut hi) = (0, list.len());
    let mut probes = 0;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        probes += 1;
        if predictor::compare(req, &list[mid].request, accuracy, rng) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    (lo, probes)
}
