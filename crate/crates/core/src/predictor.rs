//! Output-length predictors backing speculative SJF.
//!
//! A [`PredictorSpec`] is resolved against the request set into a
//! [`Predictor`], which draws one [`Prediction`] per request. Backends:
//!
//! - `oracle`: the true length.
//! - `bucket_noise`: percentile-bucket classification with a configured
//!   accuracy (optionally per conversation round, or a full confusion
//!   matrix); a class is turned back into a length via its midpoint.
//! - `mult_noise`: `N·exp(ε)` with Gaussian `ε`.
//! - `file`: lengths read from a JSON Lines prediction file.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::bucket::{bucketize, compute_bucket_boundaries, BucketBoundaries};
use crate::error::{Result, SimError};
use crate::request::Request;

/// Mean proxy-model latency measured on a V100.
pub const DEFAULT_LATENCY_MS: f64 = 7.6;
/// Token budget of the proxy model's input.
pub const CONTEXT_BUDGET: u32 = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub latency_ms: f64,
}

impl Default for PredictorSpec {
    fn default() -> Self {
        PredictorSpec {
            kind: PredictorKind::Oracle,
            latency_ms: DEFAULT_LATENCY_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictorKind {
    Oracle,
    BucketNoise(BucketNoiseSpec),
    MultNoise { sigma: f64 },
    File { path: PathBuf },
}

impl PredictorKind {
    pub fn name(&self) -> &'static str {
        match self {
            PredictorKind::Oracle => "oracle",
            PredictorKind::BucketNoise(_) => "bucket_noise",
            PredictorKind::MultNoise { .. } => "mult_noise",
            PredictorKind::File { .. } => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketNoiseSpec {
    pub class_count: usize,
    pub accuracy: AccuracyTable,
    pub boundaries: BoundarySource,
    /// Row-stochastic `P×P` matrix; row `k` is the distribution of the
    /// predicted class given true class `k`. Overrides `accuracy`.
    #[serde(default)]
    pub confusion: Option<Vec<Vec<f64>>>,
}

impl BucketNoiseSpec {
    pub fn new(class_count: usize, accuracy: f64) -> Self {
        BucketNoiseSpec {
            class_count,
            accuracy: AccuracyTable::uniform(accuracy),
            boundaries: BoundarySource::Workload,
            confusion: None,
        }
    }
}

/// Where bucket boundaries come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySource {
    /// Percentiles of the simulated requests' own output lengths.
    Workload,
    /// Percentiles of a historical sample of output lengths.
    History(Vec<u32>),
    Explicit(BucketBoundaries),
}

/// Classification accuracy, optionally varying with the conversation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    /// Used for requests without a round, or past the end of `per_round`.
    pub default: f64,
    /// `per_round[r - 1]` applies to round `r`.
    #[serde(default)]
    pub per_round: Vec<f64>,
}

impl AccuracyTable {
    pub fn uniform(accuracy: f64) -> Self {
        AccuracyTable {
            default: accuracy,
            per_round: Vec::new(),
        }
    }

    pub fn for_round(&self, round: Option<u32>) -> f64 {
        round
            .and_then(|r| self.per_round.get(r as usize - 1))
            .copied()
            .unwrap_or(self.default)
    }
}

impl PredictorSpec {
    pub fn oracle(latency_ms: f64) -> Self {
        PredictorSpec {
            kind: PredictorKind::Oracle,
            latency_ms,
        }
    }

    pub fn bucket_noise(class_count: usize, accuracy: f64, latency_ms: f64) -> Self {
        PredictorSpec {
            kind: PredictorKind::BucketNoise(BucketNoiseSpec::new(class_count, accuracy)),
            latency_ms,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if !(self.latency_ms.is_finite() && self.latency_ms >= 0.0) {
            errors.push(format!(
                "predictor latency_ms must be >= 0, got {}",
                self.latency_ms
            ));
        }
        let in_unit = |a: f64| a > 0.0 && a <= 1.0;
        match &self.kind {
            PredictorKind::Oracle | PredictorKind::File { .. } => {}
            PredictorKind::MultNoise { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    errors.push(format!("noise sigma must be >= 0, got {sigma}"));
                }
            }
            PredictorKind::BucketNoise(b) => {
                if b.class_count < 2 {
                    errors.push(format!("class_count must be >= 2, got {}", b.class_count));
                }
                for &a in std::iter::once(&b.accuracy.default).chain(&b.accuracy.per_round) {
                    if !in_unit(a) {
                        errors.push(format!("accuracy must be in (0, 1], got {a}"));
                    }
                }
                if let BoundarySource::Explicit(bounds) = &b.boundaries {
                    if bounds.class_count() != b.class_count {
                        errors.push(format!(
                            "explicit boundaries have {} classes, class_count is {}",
                            bounds.class_count(),
                            b.class_count
                        ));
                    }
                }
                if let Some(m) = &b.confusion {
                    if m.len() != b.class_count || m.iter().any(|row| row.len() != b.class_count) {
                        errors.push(format!("confusion matrix must be {0}x{0}", b.class_count));
                    } else if m.iter().any(|row| {
                        row.iter().any(|&p| !(p.is_finite() && p >= 0.0))
                            || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9
                    }) {
                        errors.push("confusion matrix rows must be probability vectors".into());
                    }
                }
            }
        }
        errors
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted_tokens: u32,
    pub predicted_class: Option<usize>,
    pub latency_ms: f64,
}

#[derive(Debug, Clone)]
enum Backend {
    Oracle,
    Bucket {
        bounds: BucketBoundaries,
        accuracy: AccuracyTable,
        confusion: Option<Vec<Vec<f64>>>,
    },
    Mult(Normal<f64>),
    Table(HashMap<u64, u32>),
}

/// A predictor resolved against a concrete request set.
#[derive(Debug, Clone)]
pub struct Predictor {
    backend: Backend,
    latency_ms: f64,
}

impl Predictor {
    /// Resolves boundaries and loads prediction files. A file must cover
    /// every request in `requests`.
    pub fn new(spec: &PredictorSpec, requests: &[Request]) -> Result<Self> {
        let errors = spec.validate();
        if !errors.is_empty() {
            return Err(SimError::Config(errors));
        }
        let backend = match &spec.kind {
            PredictorKind::Oracle => Backend::Oracle,
            PredictorKind::MultNoise { sigma } => {
                Backend::Mult(Normal::new(0.0, *sigma).expect("validated sigma"))
            }
            PredictorKind::BucketNoise(b) => {
                let bounds = match &b.boundaries {
                    BoundarySource::Workload => {
                        let lengths: Vec<u32> = requests.iter().map(|r| r.output_tokens).collect();
                        compute_bucket_boundaries(&lengths, b.class_count)?
                    }
                    BoundarySource::History(lengths) => {
                        compute_bucket_boundaries(lengths, b.class_count)?
                    }
                    BoundarySource::Explicit(bounds) => bounds.clone(),
                };
                Backend::Bucket {
                    bounds,
                    accuracy: b.accuracy.clone(),
                    confusion: b.confusion.clone(),
                }
            }
            PredictorKind::File { path } => {
                let table = load_predictions(path)?;
                if let Some(missing) = requests.iter().find(|r| !table.contains_key(&r.id)) {
                    return Err(SimError::MissingPrediction(missing.id));
                }
                Backend::Table(table)
            }
        };
        Ok(Predictor {
            backend,
            latency_ms: spec.latency_ms,
        })
    }

    pub fn latency_ms(&self) -> f64 {
        self.latency_ms
    }

    pub fn boundaries(&self) -> Option<&BucketBoundaries> {
        match &self.backend {
            Backend::Bucket { bounds, .. } => Some(bounds),
            _ => None,
        }
    }

    pub fn predict<R: Rng + ?Sized>(&self, req: &Request, rng: &mut R) -> Result<Prediction> {
        let (predicted_tokens, predicted_class) = match &self.backend {
            Backend::Oracle => (req.output_tokens, None),
            Backend::Mult(noise) => {
                let eps = noise.sample(rng);
                let x = (req.output_tokens as f64 * eps.exp()).round();
                (x.clamp(1.0, u32::MAX as f64) as u32, None)
            }
            Backend::Bucket {
                bounds,
                accuracy,
                confusion,
            } => {
                let truth = bucketize(req.output_tokens, bounds);
                let class = match confusion {
                    Some(m) => sample_row(&m[truth], rng),
                    None => noisy_class(
                        truth,
                        bounds.class_count(),
                        accuracy.for_round(req.round),
                        rng,
                    ),
                };
                (bounds.midpoint(class), Some(class))
            }
            Backend::Table(table) => (
                *table
                    .get(&req.id)
                    .ok_or(SimError::MissingPrediction(req.id))?,
                None,
            ),
        };
        Ok(Prediction {
            predicted_tokens,
            predicted_class,
            latency_ms: self.latency_ms,
        })
    }
}

/// The true class with probability `accuracy`, otherwise a uniformly random
/// other class.
fn noisy_class<R: Rng + ?Sized>(truth: usize, classes: usize, accuracy: f64, rng: &mut R) -> usize {
    if rng.random::<f64>() < accuracy {
        return truth;
    }
    let other = rng.random_range(0..classes - 1);
    if other >= truth {
        other + 1
    } else {
        other
    }
}

fn sample_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>();
    let mut acc = 0.0;
    for (k, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // rounding slack: fall back to the last class with mass
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// One-shot prediction without resolving a [`Predictor`] first. Bucket
/// boundaries for `BoundarySource::Workload` are computed from `req` alone,
/// so prefer [`Predictor::new`] for anything but oracle and noise kinds.
pub fn predict<R: Rng + ?Sized>(
    req: &Request,
    spec: &PredictorSpec,
    rng: &mut R,
) -> Result<Prediction> {
    Predictor::new(spec, std::slice::from_ref(req))?.predict(req, rng)
}

/// Noisy pairwise comparator: "is `q1` longer than `q2`?".
///
/// Equal lengths count as "not longer"; the answer is then flipped with
/// probability `1 - accuracy`.
pub fn compare<R: Rng + ?Sized>(q1: &Request, q2: &Request, accuracy: f64, rng: &mut R) -> bool {
    let truth = q1.output_tokens > q2.output_tokens;
    if accuracy >= 1.0 || rng.random::<f64>() < accuracy {
        truth
    } else {
        !truth
    }
}

/// Proxy-model input after concatenating conversation history and keeping
/// only the most recent `token_budget` tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub token_budget: u32,
    pub retained_tokens: u32,
}

pub fn build_context(
    prompt_tokens: &[u32],
    response_tokens: &[u32],
    current_prompt: u32,
    budget: u32,
) -> Result<ContextWindow> {
    if prompt_tokens.len() != response_tokens.len() {
        return Err(SimError::config(format!(
            "history has {} prompts but {} responses",
            prompt_tokens.len(),
            response_tokens.len()
        )));
    }
    let total: u64 = prompt_tokens
        .iter()
        .chain(response_tokens)
        .map(|&t| t as u64)
        .sum::<u64>()
        + current_prompt as u64;
    Ok(ContextWindow {
        token_budget: budget,
        retained_tokens: total.min(budget as u64) as u32,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionLine {
    id: u64,
    predicted_tokens: i64,
}

/// Reads a JSON Lines prediction file into an id → length table.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<HashMap<u64, u32>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| SimError::io(path, e))?;
    let mut table = HashMap::new();
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
        let raw: PredictionLine =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let tokens = u32::try_from(raw.predicted_tokens)
            .ok()
            .filter(|&t| t >= 1)
            .ok_or_else(|| {
                parse_err(format!(
                    "predicted_tokens must be >= 1, got {}",
                    raw.predicted_tokens
                ))
            })?;
        if table.insert(raw.id, tokens).is_some() {
            return Err(parse_err(format!("duplicate id {}", raw.id)));
        }
    }
    Ok(table)
}

pub fn save_predictions(
    predictions: impl IntoIterator<Item = (u64, u32)>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| SimError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (id, predicted_tokens) in predictions {
        serde_json::to_writer(
            &mut out,
            &PredictionLine {
                id,
                predicted_tokens: predicted_tokens as i64,
            },
        )?;
        out.write_all(b"\n").map_err(|e| SimError::io(path, e))?;
    }
    out.flush().map_err(|e| SimError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::rng_for;

    fn req(id: u64, n: u32) -> Request {
        Request::new(id, 0, 1, n)
    }

    #[test]
    fn oracle_is_identity() {
        let p = predict(&req(1, 123), &PredictorSpec::default(), &mut rng_for(0)).unwrap();
        assert_eq!(p.predicted_tokens, 123);
        assert_eq!(p.latency_ms, DEFAULT_LATENCY_MS);
    }

    #[test]
    fn perfect_bucket_predictor() {
        let reqs: Vec<_> = (0..10_000)
            .map(|i| req(i, 1 + (i as u32 * 7919) % 3000))
            .collect();
        let pred = Predictor::new(&PredictorSpec::bucket_noise(5, 1.0, 0.0), &reqs).unwrap();
        let bounds = pred.boundaries().unwrap().clone();
        let mut rng = rng_for(3);
        for r in &reqs {
            let p = pred.predict(r, &mut rng).unwrap();
            assert_eq!(p.predicted_class, Some(bucketize(r.output_tokens, &bounds)));
            assert_eq!(
                p.predicted_tokens,
                bounds.midpoint(p.predicted_class.unwrap())
            );
        }
    }

    #[test]
    fn per_round_accuracy_lookup() {
        let t = AccuracyTable {
            default: 0.615,
            per_round: vec![0.619, 0.60],
        };
        assert_eq!(t.for_round(None), 0.615);
        assert_eq!(t.for_round(Some(1)), 0.619);
        assert_eq!(t.for_round(Some(2)), 0.60);
        assert_eq!(t.for_round(Some(5)), 0.615);
    }

    #[test]
    fn wrong_class_is_never_truth() {
        let mut rng = rng_for(11);
        let mut seen = [0usize; 5];
        for _ in 0..5_000 {
            let k = noisy_class(2, 5, f64::MIN_POSITIVE, &mut rng);
            assert_ne!(k, 2);
            seen[k] += 1;
        }
        assert!(seen.iter().enumerate().all(|(k, &c)| k == 2 || c > 1_000));
    }

    #[test]
    fn confusion_matrix_rows_are_sampled() {
        let mut spec = BucketNoiseSpec::new(2, 0.5);
        spec.boundaries =
            BoundarySource::Explicit(BucketBoundaries::from_parts(vec![10], vec![5, 20]).unwrap());
        spec.confusion = Some(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let spec = PredictorSpec {
            kind: PredictorKind::BucketNoise(spec),
            latency_ms: 0.0,
        };
        let pred = Predictor::new(&spec, &[]).unwrap();
        let mut rng = rng_for(0);
        assert_eq!(
            pred.predict(&req(0, 3), &mut rng).unwrap().predicted_tokens,
            20
        );
        assert_eq!(
            pred.predict(&req(0, 30), &mut rng)
                .unwrap()
                .predicted_tokens,
            5
        );
    }

    #[test]
    fn rejects_bad_specs() {
        let mut b = BucketNoiseSpec::new(1, 1.5);
        b.confusion = Some(vec![vec![0.5, 0.4]]);
        let spec = PredictorSpec {
            kind: PredictorKind::BucketNoise(b),
            latency_ms: -1.0,
        };
        assert_eq!(spec.validate().len(), 4);
        let spec = PredictorSpec {
            kind: PredictorKind::MultNoise { sigma: -0.1 },
            latency_ms: 0.0,
        };
        assert_eq!(spec.validate().len(), 1);
    }

    #[test]
    fn mult_noise_stays_positive() {
        let spec = PredictorSpec {
            kind: PredictorKind::MultNoise { sigma: 3.0 },
            latency_ms: 0.0,
        };
        let pred = Predictor::new(&spec, &[]).unwrap();
        let mut rng = rng_for(5);
        for _ in 0..10_000 {
            assert!(pred.predict(&req(0, 1), &mut rng).unwrap().predicted_tokens >= 1);
        }
    }

    #[test]
    fn comparator_noise_free_and_ties() {
        let mut rng = rng_for(0);
        assert!(compare(&req(1, 10), &req(2, 3), 1.0, &mut rng));
        assert!(!compare(&req(1, 3), &req(2, 10), 1.0, &mut rng));
        assert!(!compare(&req(1, 7), &req(2, 7), 1.0, &mut rng));
    }

    #[test]
    fn context_truncation() {
        let ctx = build_context(&[], &[], 40, CONTEXT_BUDGET).unwrap();
        assert_eq!(ctx.retained_tokens, 40);
        let ctx = build_context(&[200, 100], &[250, 50], 100, CONTEXT_BUDGET).unwrap();
        assert_eq!(ctx.retained_tokens, 512);
        let ctx = build_context(&[100], &[200], 100, CONTEXT_BUDGET).unwrap();
        assert_eq!(ctx.retained_tokens, 400);
        assert!(build_context(&[1, 2], &[3], 4, CONTEXT_BUDGET).is_err());
    }

    #[test]
    fn prediction_file_round_trip_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.jsonl");
        save_predictions([(1, 10), (2, 20)], &path).unwrap();
        let table = load_predictions(&path).unwrap();
        assert_eq!(table[&1], 10);
        assert_eq!(table[&2], 20);

        let spec = PredictorSpec {
            kind: PredictorKind::File { path: path.clone() },
            latency_ms: 0.0,
        };
        let err = Predictor::new(&spec, &[req(1, 5), req(3, 5)]).unwrap_err();
        assert!(matches!(err, SimError::MissingPrediction(3)), "{err}");

        std::fs::write(
            &path,
            "{\"id\":1,\"predicted_tokens\":4}\n{\"id\":1,\"predicted_tokens\":5}\n",
        )
        .unwrap();
        let err = load_predictions(&path).unwrap_err();
        assert!(matches!(err, SimError::Parse { line: 2, .. }), "{err}");
        std::fs::write(&path, "{\"id\":1,\"predicted_tokens\":0}\n").unwrap();
        assert!(matches!(
            load_predictions(&path),
            Err(SimError::Parse { line: 1, .. })
        ));
        std::fs::write(&path, "{\"id\":1}\n").unwrap();
        assert!(load_predictions(&path).is_err());
    }
}
