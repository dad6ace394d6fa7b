//! Requests flowing through the simulator and the per-request outcome records.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Simulation time in whole milliseconds.
pub type Millis = u64;

/// One inference job.
///
/// `output_tokens` is the ground-truth generated length; schedulers other
/// than the oracle only ever see `predicted_tokens`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Request {
    pub id: u64,
    pub arrival_ms: Millis,
    pub input_tokens: u32,
    pub output_tokens: u32,
    pub conv_id: Option<u64>,
    pub round: Option<u32>,
    pub predicted_tokens: Option<u32>,
}

impl Request {
    pub fn new(id: u64, arrival_ms: Millis, input_tokens: u32, output_tokens: u32) -> Self {
        Request {
            id,
            arrival_ms,
            input_tokens,
            output_tokens,
            conv_id: None,
            round: None,
            predicted_tokens: None,
        }
    }

    pub fn with_conversation(mut self, conv_id: u64, round: u32) -> Self {
        self.conv_id = Some(conv_id);
        self.round = Some(round);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: &str| {
            Err(SimError::InvalidRequest {
                id: self.id,
                message: message.to_string(),
            })
        };
        if self.input_tokens < 1 {
            return fail("input_tokens must be >= 1");
        }
        if self.output_tokens < 1 {
            return fail("output_tokens must be >= 1");
        }
        if self.round == Some(0) {
            return fail("round must be >= 1");
        }
        if self.predicted_tokens == Some(0) {
            return fail("predicted_tokens must be >= 1");
        }
        Ok(())
    }
}

/// Outcome of one completed request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub id: u64,
    pub arrival_ms: Millis,
    /// Arrival plus predictor latency.
    pub ready_ms: Millis,
    /// First time the request entered execution.
    pub dispatch_ms: Millis,
    pub completion_ms: Millis,
    /// Time spent in service, `completion_ms - dispatch_ms`.
    pub exec_ms: Millis,
    pub queue_ms: Millis,
    pub jct_ms: Millis,
    pub output_tokens: u32,
    pub predicted_tokens: u32,
}

impl RequestRecord {
    pub(crate) fn new(
        req: &Request,
        ready_ms: Millis,
        dispatch_ms: Millis,
        completion_ms: Millis,
        predicted_tokens: u32,
    ) -> Self {
        debug_assert!(req.arrival_ms <= ready_ms && ready_ms <= dispatch_ms);
        debug_assert!(dispatch_ms <= completion_ms);
        RequestRecord {
            id: req.id,
            arrival_ms: req.arrival_ms,
            ready_ms,
            dispatch_ms,
            completion_ms,
            exec_ms: completion_ms - dispatch_ms,
            queue_ms: dispatch_ms - req.arrival_ms,
            jct_ms: completion_ms - req.arrival_ms,
            output_tokens: req.output_tokens,
            predicted_tokens,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_output() {
        let r = Request::new(3, 0, 1, 0);
        assert!(matches!(
            r.validate(),
            Err(SimError::InvalidRequest { id: 3, .. })
        ));
    }

    #[test]
    fn rejects_zero_prediction_and_round() {
        let mut r = Request::new(1, 0, 1, 5);
        r.predicted_tokens = Some(0);
        assert!(r.validate().is_err());
        let r = Request::new(1, 0, 1, 5).with_conversation(7, 0);
        assert!(r.validate().is_err());
        assert!(Request::new(1, 0, 1, 5)
            .with_conversation(7, 1)
            .validate()
            .is_ok());
    }

    #[test]
    fn record_derives_intervals() {
        let r = Request::new(1, 10, 4, 5);
        let rec = RequestRecord::new(&r, 18, 30, 45, 6);
        assert_eq!(rec.queue_ms, 20);
        assert_eq!(rec.exec_ms, 15);
        assert_eq!(rec.jct_ms, 35);
    }
}
