//! Request streams: gamma-interarrival arrivals with a CV burstiness knob,
//! lognormal output lengths calibrated by median and p95/p50, and the JSON
//! Lines trace format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::request::{Millis, Request};

/// 95th-percentile deviate of the standard normal.
pub const Z95: f64 = 1.6449;

/// Mixes a base seed with a stream index (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSpec {
    pub rate_rps: f64,
    /// Coefficient of variation of the interarrival gaps; 1 is Poisson.
    pub cv: f64,
    pub count: usize,
    pub seed: u64,
}

impl ArrivalSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.rate_rps.is_finite() && self.rate_rps > 0.0) {
            errors.push(format!("rate_rps must be > 0, got {}", self.rate_rps));
        }
        if !(self.cv.is_finite() && self.cv > 0.0) {
            errors.push(format!("cv must be > 0, got {}", self.cv));
        }
        if self.count < 1 {
            errors.push("count must be >= 1".to_string());
        }
        errors
    }

    pub fn mean_gap_ms(&self) -> f64 {
        1000.0 / self.rate_rps
    }

    fn gap_distribution(&self) -> Gamma<f64> {
        let shape = 1.0 / (self.cv * self.cv);
        let scale = self.mean_gap_ms() * self.cv * self.cv;
        Gamma::new(shape, scale).expect("validated gamma parameters")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthSpec {
    pub median_tokens: u32,
    /// p95 / p50 of the length distribution.
    pub tail_ratio: f64,
    pub max_tokens: u32,
    pub seed: u64,
}

impl LengthSpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.median_tokens < 1 {
            errors.push("median_tokens must be >= 1".to_string());
        }
        if self.max_tokens < self.median_tokens {
            errors.push(format!(
                "max_tokens ({}) must be >= median_tokens ({})",
                self.max_tokens, self.median_tokens
            ));
        }
        if !(self.tail_ratio.is_finite() && self.tail_ratio >= 1.0) {
            errors.push(format!("tail_ratio must be >= 1, got {}", self.tail_ratio));
        }
        errors
    }

    /// Log-scale standard deviation matching the configured tail ratio.
    pub fn sigma(&self) -> f64 {
        self.tail_ratio.ln() / Z95
    }

    /// Mean of the uncapped, unrounded lognormal.
    pub fn mean_tokens(&self) -> f64 {
        let s = self.sigma();
        self.median_tokens as f64 * (s * s / 2.0).exp()
    }
}

/// Interarrival gaps in (fractional) milliseconds.
pub fn gen_gaps(spec: &ArrivalSpec) -> Vec<f64> {
    let dist = spec.gap_distribution();
    let mut rng = rng_for(spec.seed);
    (0..spec.count).map(|_| dist.sample(&mut rng)).collect()
}

/// Arrival times: prefix sums of the gaps, rounded up to whole milliseconds.
/// The first request arrives after the first gap.
pub fn gen_arrivals(spec: &ArrivalSpec) -> Vec<Millis> {
    let mut t = 0.0;
    gen_gaps(spec)
        .into_iter()
        .map(|gap| {
            t += gap;
            t.ceil() as Millis
        })
        .collect()
}

/// Lognormal lengths rounded to the nearest token and clamped to
/// `[1, max_tokens]`.
pub fn gen_lengths(spec: &LengthSpec, n: usize) -> Vec<u32> {
    let sigma = spec.sigma();
    let max = spec.max_tokens.max(1);
    if sigma == 0.0 {
        return vec![spec.median_tokens.clamp(1, max); n];
    }
    let dist = LogNormal::new((spec.median_tokens as f64).ln(), sigma)
        .expect("validated lognormal parameters");
    let mut rng = rng_for(spec.seed);
    (0..n)
        .map(|_| {
            let x = dist.sample(&mut rng).round();
            x.clamp(1.0, max as f64) as u32
        })
        .collect()
}

/// A complete synthetic workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    /// `arrivals.count` is the number of conversations; each contributes
    /// `rounds` requests.
    pub arrivals: ArrivalSpec,
    pub outputs: LengthSpec,
    pub inputs: LengthSpec,
    pub rounds: u32,
}

impl WorkloadSpec {
    /// Rebases every stream seed on `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.arrivals.seed = derive_seed(seed, 1);
        self.outputs.seed = derive_seed(seed, 2);
        self.inputs.seed = derive_seed(seed, 3);
        self
    }

    pub fn total_requests(&self) -> usize {
        self.arrivals.count * self.rounds as usize
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = self.arrivals.validate();
        errors.extend(
            self.outputs
                .validate()
                .into_iter()
                .map(|e| format!("output {e}")),
        );
        errors.extend(
            self.inputs
                .validate()
                .into_iter()
                .map(|e| format!("input {e}")),
        );
        if self.rounds < 1 {
            errors.push("rounds must be >= 1".to_string());
        }
        errors
    }

    /// Generates the request list, sorted by arrival.
    ///
    /// With `rounds > 1` the arrival stream is dealt round-robin: the first
    /// `count` arrivals are round 1 of each conversation, the next `count`
    /// are round 2, and so on. Lengths of different rounds are independent.
    pub fn generate(&self) -> Result<Vec<Request>> {
        let errors = self.validate();
        if !errors.is_empty() {
            return Err(SimError::Config(errors));
        }
        let total = self.total_requests();
        let arrivals = gen_arrivals(&ArrivalSpec {
            count: total,
            ..self.arrivals.clone()
        });
        let outputs = gen_lengths(&self.outputs, total);
        let inputs = gen_lengths(&self.inputs, total);
        let convs = self.arrivals.count as u64;
        Ok((0..total)
            .map(|i| {
                let req = Request::new(i as u64, arrivals[i], inputs[i], outputs[i]);
                if self.rounds > 1 {
                    let i = i as u64;
                    req.with_conversation(i % convs, (i / convs) as u32 + 1)
                } else {
                    req
                }
            })
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceLine {
    id: u64,
    arrival_ms: i64,
    input_tokens: i64,
    output_tokens: i64,
    #[serde(deserialize_with = "Option::deserialize")]
    conv_id: Option<u64>,
    #[serde(deserialize_with = "Option::deserialize")]
    round: Option<i64>,
}

impl TraceLine {
    fn into_request(self) -> std::result::Result<Request, String> {
        if self.arrival_ms < 0 {
            return Err(format!("negative arrival_ms {}", self.arrival_ms));
        }
        let count = |name: &str, v: i64| {
            u32::try_from(v)
                .ok()
                .filter(|&v| v >= 1)
                .ok_or_else(|| format!("{name} must be >= 1, got {v}"))
        };
        let round = match self.round {
            Some(r) => Some(count("round", r)?),
            None => None,
        };
        Ok(Request {
            id: self.id,
            arrival_ms: self.arrival_ms as Millis,
            input_tokens: count("input_tokens", self.input_tokens)?,
            output_tokens: count("output_tokens", self.output_tokens)?,
            conv_id: self.conv_id,
            round,
            predicted_tokens: None,
        })
    }
}

/// Reads a JSON Lines trace. Blank lines are skipped; the result is sorted
/// by `(arrival_ms, id)`.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Vec<Request>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SimError::io(path, e))?;
    let mut seen = std::collections::HashSet::new();
    let mut requests = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SimError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| SimError::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let raw: TraceLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let req = raw.into_request().map_err(parse_err)?;
        if !seen.insert(req.id) {
            return Err(parse_err(format!("duplicate id {}", req.id)));
        }
        requests.push(req);
    }
    requests.sort_by_key(|r| (r.arrival_ms, r.id));
    Ok(requests)
}

/// Writes requests as JSON Lines in the given order. Predictions are not
/// part of the trace format.
pub fn save_trace(requests: &[Request], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| SimError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in requests {
        let line = TraceLine {
            id: r.id,
            arrival_ms: r.arrival_ms as i64,
            input_tokens: r.input_tokens as i64,
            output_tokens: r.output_tokens as i64,
            conv_id: r.conv_id,
            round: r.round.map(i64::from),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| SimError::io(path, e))?;
    }
    out.flush().map_err(|e| SimError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lengths(median: u32, ratio: f64) -> LengthSpec {
        LengthSpec {
            median_tokens: median,
            tail_ratio: ratio,
            max_tokens: 1_000_000,
            seed: 7,
        }
    }

    #[test]
    fn unit_ratio_is_constant() {
        assert!(gen_lengths(&lengths(42, 1.0), 100).iter().all(|&n| n == 42));
    }

    #[test]
    fn lengths_respect_cap() {
        let spec = LengthSpec {
            max_tokens: 120,
            ..lengths(100, 20.0)
        };
        let v = gen_lengths(&spec, 10_000);
        assert!(v.iter().all(|&n| (1..=120).contains(&n)));
        assert!(v.contains(&120));
    }

    #[test]
    fn arrivals_non_decreasing_and_seeded() {
        let spec = ArrivalSpec {
            rate_rps: 5.0,
            cv: 3.0,
            count: 2_000,
            seed: 1,
        };
        let a = gen_arrivals(&spec);
        assert!(a.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a, gen_arrivals(&spec));
        let others: Vec<_> = [2, 3, 4]
            .iter()
            .map(|&seed| {
                gen_arrivals(&ArrivalSpec {
                    seed,
                    ..spec.clone()
                })
            })
            .collect();
        assert!(others.iter().all(|o| o != &a));
        assert_ne!(others[0], others[1]);
    }

    #[test]
    fn validation_messages() {
        let bad = ArrivalSpec {
            rate_rps: 0.0,
            cv: -1.0,
            count: 0,
            seed: 0,
        };
        assert_eq!(bad.validate().len(), 3);
        let bad = LengthSpec {
            median_tokens: 10,
            tail_ratio: 0.5,
            max_tokens: 5,
            seed: 0,
        };
        assert_eq!(bad.validate().len(), 2);
    }

    #[test]
    fn multi_round_conversations() {
        let spec = WorkloadSpec {
            arrivals: ArrivalSpec {
                rate_rps: 1.0,
                cv: 1.0,
                count: 3,
                seed: 0,
            },
            outputs: lengths(50, 2.0),
            inputs: lengths(20, 2.0),
            rounds: 2,
        };
        let reqs = spec.generate().unwrap();
        assert_eq!(reqs.len(), 6);
        let tags: Vec<_> = reqs.iter().map(|r| (r.conv_id, r.round)).collect();
        assert_eq!(
            tags,
            vec![
                (Some(0), Some(1)),
                (Some(1), Some(1)),
                (Some(2), Some(1)),
                (Some(0), Some(2)),
                (Some(1), Some(2)),
                (Some(2), Some(2)),
            ]
        );
    }

    #[test]
    fn derive_seed_separates_streams() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(9, 3), derive_seed(9, 3));
    }
}
