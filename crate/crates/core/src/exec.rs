//! Linear service-time model: a request generating `N` tokens takes
//! `C + K·N` milliseconds when served alone.
//!
//! Durations are quantized to whole nanoseconds internally and rounded up to
//! milliseconds wherever they become simulation timestamps.

use serde::{Deserialize, Serialize};

use crate::request::{Millis, Request};

pub(crate) const NANOS_PER_MS: u64 = 1_000_000;

pub(crate) fn ms_to_nanos(ms: f64) -> u64 {
    (ms * NANOS_PER_MS as f64).round() as u64
}

pub(crate) fn ceil_ms(nanos: u64) -> Millis {
    nanos.div_ceil(NANOS_PER_MS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExecModel {
    /// Fixed per-request overhead `C`.
    pub c_ms: f64,
    /// Latency per generated token `K`.
    pub k_ms_per_token: f64,
    /// Relative slowdown of one iteration per additional batch slot.
    #[serde(default)]
    pub batch_slope: f64,
}

impl Default for ExecModel {
    /// OPT-1.3b on one V100: 1243 ms for 512 tokens, no fixed overhead.
    fn default() -> Self {
        ExecModel {
            c_ms: 0.0,
            k_ms_per_token: 1243.0 / 512.0,
            batch_slope: 0.0,
        }
    }
}

impl ExecModel {
    pub fn new(c_ms: f64, k_ms_per_token: f64) -> Self {
        ExecModel {
            c_ms,
            k_ms_per_token,
            batch_slope: 0.0,
        }
    }

    pub fn with_batch_slope(mut self, batch_slope: f64) -> Self {
        self.batch_slope = batch_slope;
        self
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.c_ms.is_finite() && self.c_ms >= 0.0) {
            errors.push(format!("c_ms must be finite and >= 0, got {}", self.c_ms));
        }
        if !(self.k_ms_per_token.is_finite() && self.k_ms_per_token > 0.0) {
            errors.push(format!(
                "k_ms_per_token must be finite and > 0, got {}",
                self.k_ms_per_token
            ));
        }
        if !(self.batch_slope.is_finite() && self.batch_slope >= 0.0) {
            errors.push(format!(
                "batch_slope must be finite and >= 0, got {}",
                self.batch_slope
            ));
        }
        errors
    }

    pub(crate) fn overhead_nanos(&self) -> u64 {
        ms_to_nanos(self.c_ms)
    }

    /// Duration of one decoding iteration with `batch_size` occupied slots.
    pub(crate) fn iter_nanos(&self, batch_size: usize) -> u64 {
        let k = ms_to_nanos(self.k_ms_per_token);
        if batch_size <= 1 || self.batch_slope == 0.0 {
            return k;
        }
        let scale = 1.0 + self.batch_slope * (batch_size - 1) as f64;
        (k as f64 * scale).round() as u64
    }

    /// Solo service time of a request generating `tokens` tokens.
    pub fn exec_time_tokens(&self, tokens: u32) -> Millis {
        ceil_ms(self.overhead_nanos() + self.iter_nanos(1) * tokens as u64)
    }

    /// Occupancy of a static batch of `batch_size` requests whose longest
    /// member generates `max_tokens` tokens.
    pub fn batch_time(&self, batch_size: usize, max_tokens: u32) -> Millis {
        ceil_ms(self.overhead_nanos() + self.iter_nanos(batch_size) * max_tokens as u64)
    }
}

/// `T = C + K·N`, rounded up to whole milliseconds.
pub fn exec_time(req: &Request, m: &ExecModel) -> Millis {
    m.exec_time_tokens(req.output_tokens)
}

/// One iteration at the given batch size: `K·(1 + slope·(b − 1))`, rounded up.
pub fn iter_time(batch_size: usize, m: &ExecModel) -> Millis {
    assert!(batch_size >= 1, "batch size must be >= 1");
    ceil_ms(m.iter_nanos(batch_size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn req(n: u32) -> Request {
        Request::new(0, 0, 1, n)
    }

    #[test]
    fn identity_scaling() {
        assert_eq!(exec_time(&req(5), &ExecModel::new(0.0, 1.0)), 5);
    }

    #[test]
    fn opt_1_3b_calibration() {
        // 1243 ms for a 512-token query at C = 0
        assert_eq!(exec_time(&req(512), &ExecModel::default()), 1243);
        assert_eq!(
            exec_time(&req(512), &ExecModel::new(100.0, 1243.0 / 512.0)),
            1343
        );
        // 100 + 2.43 * 512 = 1344.16, rounded up
        assert_eq!(exec_time(&req(512), &ExecModel::new(100.0, 2.43)), 1345);
    }

    #[test]
    fn rounds_up_fractional_ms() {
        assert_eq!(exec_time(&req(1), &ExecModel::new(50.0, 0.5)), 51);
        assert_eq!(exec_time(&req(2), &ExecModel::new(50.0, 0.5)), 51);
    }

    #[test]
    fn iteration_time() {
        assert_eq!(iter_time(8, &ExecModel::new(0.0, 2.0)), 2);
        let m = ExecModel::new(0.0, 10.0).with_batch_slope(0.1);
        assert_eq!(iter_time(3, &m), 12);
        assert_eq!(
            iter_time(1, &ExecModel::new(0.0, 2.2).with_batch_slope(5.0)),
            3
        );
    }

    #[test]
    fn batch_time_uses_longest_member() {
        let m = ExecModel::new(2.0, 1.0);
        assert_eq!(m.batch_time(2, 6), 8);
        let m = ExecModel::new(0.0, 10.0).with_batch_slope(0.1);
        assert_eq!(m.batch_time(3, 4), 48);
    }

    #[test]
    fn validate_reports_everything() {
        let bad = ExecModel {
            c_ms: -1.0,
            k_ms_per_token: 0.0,
            batch_slope: f64::NAN,
        };
        assert_eq!(bad.validate().len(), 3);
        assert!(ExecModel::default().validate().is_empty());
    }

    proptest! {
        #[test]
        fn exec_time_increasing(c in 0.0f64..500.0, k in 0.01f64..50.0, n in 1u32..100_000) {
            let m = ExecModel::new(c, k);
            prop_assert!(m.exec_time_tokens(n) <= m.exec_time_tokens(n + 1));
            // below 1 ms/token two lengths can round up to the same millisecond
            if k >= 1.0 {
                prop_assert!(m.exec_time_tokens(n) < m.exec_time_tokens(n + 1));
            }
            prop_assert!(m.exec_time_tokens(n) as f64 >= c + k - 1e-6);
        }

        #[test]
        fn iter_time_monotone(k in 0.01f64..50.0, slope in 0.0f64..2.0, b in 1usize..64) {
            let m = ExecModel::new(0.0, k).with_batch_slope(slope);
            prop_assert!(iter_time(b, &m) <= iter_time(b + 1, &m));
        }
    }
}
