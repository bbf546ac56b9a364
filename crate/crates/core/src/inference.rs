//! Deconfounded scoring.
//!
//! The fusion `β·m̂ + (1−β)·t̂` is evaluated either at the impression's
//! observed interval (policy 1) or marginalized over the training interval
//! prior `P̂(A)` (policy 2), which never reads the impression's interval.

use std::collections::{BTreeMap, HashMap};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbones::{MatchingModel, ModelError};
use crate::dataio::{EncodedExample, EncodedSet};
use crate::numerics::{sigmoid, Mode, Tape};
use crate::perceptron::RecencyVector;
use crate::trainer::ModelBundle;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("interval {interval} outside [0, {horizon})")]
    IntervalOutOfRange { interval: usize, horizon: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("policy2 needs an interval prior in the bundle")]
    MissingPrior,
    #[error("{0:?} needs a recency perceptron in the bundle")]
    MissingPerceptron(Policy),
    #[error("schema hash mismatch: bundle {bundle}, data {data}")]
    SchemaMismatch { bundle: String, data: String },
    #[error("no examples to estimate the interval prior from")]
    EmptyInput,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    Policy1,
    Policy2,
    BackboneOnly,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Policy1 => "policy1",
            Policy::Policy2 => "policy2",
            Policy::BackboneOnly => "backbone-only",
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

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "policy1" => Ok(Policy::Policy1),
            "policy2" => Ok(Policy::Policy2),
            "backbone-only" => Ok(Policy::BackboneOnly),
            other => Err(format!("unknown policy `{other}` (expected policy1, policy2 or backbone-only)")),
        }
    }
}

/// What policy 2 feeds into its outer sigmoid as the matching term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingInput {
    #[default]
    Probability,
    Logit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub beta: f64,
    pub policy: Policy,
    #[serde(default)]
    pub policy2_matching_input: MatchingInput,
}

impl FusionConfig {
    pub fn new(policy: Policy, beta: f64) -> Self {
        Self { beta, policy, policy2_matching_input: MatchingInput::Probability }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.policy != Policy::BackboneOnly && !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(format!("beta must lie in (0,1), got {}", self.beta));
        }
        Ok(())
    }
}

/// Empirical frequency of each release interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalPrior {
    pub probabilities: Vec<f64>,
}

impl IntervalPrior {
    /// `Σ_a t̂_a · P̂(a)`.
    pub fn expectation(&self, scores: &RecencyVector) -> Result<f64, InferenceError> {
        if scores.len() != self.probabilities.len() {
            return Err(InferenceError::LengthMismatch(scores.len(), self.probabilities.len()));
        }
        Ok(scores.0.iter().zip(&self.probabilities).map(|(t, p)| t * p).sum())
    }
}

pub fn estimate_interval_prior(examples: &[EncodedExample], horizon: usize) -> Result<IntervalPrior, InferenceError> {
    if examples.is_empty() {
        return Err(InferenceError::EmptyInput);
    }
    let mut counts = vec![0usize; horizon];
    for e in examples {
        let a = e.interval.value();
        if a >= horizon {
            return Err(InferenceError::IntervalOutOfRange { interval: a, horizon });
        }
        counts[a] += 1;
    }
    let n = examples.len() as f64;
    Ok(IntervalPrior { probabilities: counts.into_iter().map(|c| c as f64 / n).collect() })
}

/// Elementwise `β·m̂ + (1−β)·t̂_a`.
pub fn fuse(matching: f64, scores: &RecencyVector, beta: f64) -> Vec<f64> {
    scores.0.iter().map(|t| beta * matching + (1.0 - beta) * t).collect()
}

/// `β·m̂ + (1−β)·σ(t̂_a)` at the observed interval `a`.
pub fn infer_policy1(matching: f64, scores: &RecencyVector, interval: usize, beta: f64) -> Result<f64, InferenceError> {
    if interval >= scores.len() {
        return Err(InferenceError::IntervalOutOfRange { interval, horizon: scores.len() });
    }
    Ok(beta * matching + (1.0 - beta) * sigmoid(scores.at(interval)))
}

/// `σ(Σ_a [β·m + (1−β)·t̂_a]·P̂(a)) = σ(β·m + (1−β)·Σ_a t̂_a·P̂(a))`.
pub fn infer_policy2(matching: f64, scores: &RecencyVector, prior: &IntervalPrior, beta: f64) -> Result<f64, InferenceError> {
    Ok(sigmoid(beta * matching + (1.0 - beta) * prior.expectation(scores)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub user_id: String,
    pub video_id: String,
    pub interval: usize,
    pub label: u8,
    pub matching_logit: f64,
    pub m_hat: f64,
    /// `σ(t̂_a)` at the observed interval, when a perceptron is present.
    pub recency: Option<f64>,
    pub y_hat: f64,
    /// 1-based position within the user's ranking.
    pub rank: usize,
}

type VideoKey = (Vec<u32>, Vec<u64>);

fn video_key(e: &EncodedExample) -> VideoKey {
    (e.video_indices.clone(), e.video_dense.iter().map(|d| d.to_bits()).collect())
}

/// `t̂` for every distinct video-side input in `examples`.
pub fn recency_vectors(bundle: &ModelBundle, examples: &[EncodedExample]) -> Result<HashMap<VideoKey, RecencyVector>, InferenceError> {
    let Some(perceptron) = &bundle.perceptron else {
        return Ok(HashMap::new());
    };
    let mut distinct: HashMap<VideoKey, &EncodedExample> = HashMap::new();
    for e in examples {
        distinct.entry(video_key(e)).or_insert(e);
    }
    let mut keyed: Vec<(VideoKey, &EncodedExample)> = distinct.into_iter().collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed
        .into_par_iter()
        .map(|(k, e)| {
            let v = perceptron.recency_forward(&bundle.params, e, &mut Mode::<ChaCha8Rng>::Eval)?;
            Ok((k, v))
        })
        .collect()
}

/// Scores every example under `fusion` and ranks each user's candidates by
/// descending `ŷ`, ties broken by ascending video id.
pub fn score_batch(bundle: &ModelBundle, set: &EncodedSet, fusion: &FusionConfig) -> Result<Vec<ScoredExample>, InferenceError> {
    if set.schema_hash != bundle.schema_hash {
        return Err(InferenceError::SchemaMismatch { bundle: bundle.schema_hash.clone(), data: set.schema_hash.clone() });
    }
    score_examples(bundle, &set.examples, fusion)
}

/// [`score_batch`] without the schema-hash guard, for callers holding
/// examples encoded by `bundle.schema` directly.
pub fn score_examples(bundle: &ModelBundle, examples: &[EncodedExample], fusion: &FusionConfig) -> Result<Vec<ScoredExample>, InferenceError> {
    let needs_t = fusion.policy != Policy::BackboneOnly;
    if needs_t && bundle.perceptron.is_none() {
        return Err(InferenceError::MissingPerceptron(fusion.policy));
    }
    let prior = match (fusion.policy, &bundle.prior) {
        (Policy::Policy2, None) => return Err(InferenceError::MissingPrior),
        (_, p) => p.as_ref(),
    };
    let vectors = recency_vectors(bundle, examples)?;
    let mut out: Vec<ScoredExample> = examples
        .par_iter()
        .map(|e| {
            let mut tape = Tape::new();
            let node = bundle.backbone.logit(&bundle.params, &mut tape, e, &mut Mode::<ChaCha8Rng>::Eval)?;
            let z = tape.scalar(node);
            let m = sigmoid(z);
            let t = vectors.get(&video_key(e));
            let a = e.interval.value();
            let recency = match t {
                Some(t) if a < t.len() => Some(sigmoid(t.at(a))),
                _ => None,
            };
            let y_hat = match fusion.policy {
                Policy::BackboneOnly => m,
                Policy::Policy1 => infer_policy1(m, t.expect("perceptron present"), a, fusion.beta)?,
                Policy::Policy2 => {
                    let input = match fusion.policy2_matching_input {
                        MatchingInput::Probability => m,
                        MatchingInput::Logit => z,
                    };
                    infer_policy2(input, t.expect("perceptron present"), prior.expect("prior present"), fusion.beta)?
                }
            };
            Ok(ScoredExample {
                user_id: e.user_id.clone(),
                video_id: e.video_id.clone(),
                interval: a,
                label: e.label,
                matching_logit: z,
                m_hat: m,
                recency,
                y_hat,
                rank: 0,
            })
        })
        .collect::<Result<_, InferenceError>>()?;
    assign_ranks(&mut out);
    Ok(out)
}

/// Orders by (user id, descending ŷ, ascending video id) and sets `rank`.
pub fn assign_ranks(scores: &mut [ScoredExample]) {
    scores.sort_by(|a, b| {
        a.user_id
            .cmp(&b.user_id)
            .then(b.y_hat.total_cmp(&a.y_hat))
            .then(a.video_id.cmp(&b.video_id))
    });
    let mut i = 0;
    while i < scores.len() {
        let mut j = i;
        while j < scores.len() && scores[j].user_id == scores[i].user_id {
            scores[j].rank = j - i + 1;
            j += 1;
        }
        i = j;
    }
}

pub fn write_scores_csv<W: std::io::Write>(writer: W, scores: &[ScoredExample], policy: Policy) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "video_id", "interval", "m_hat", "recency", "y_hat", "policy", "rank"])?;
    for s in scores {
        w.write_record([
            s.user_id.clone(),
            s.video_id.clone(),
            s.interval.to_string(),
            s.m_hat.to_string(),
            s.recency.map(|r| r.to_string()).unwrap_or_default(),
            s.y_hat.to_string(),
            policy.as_str().to_string(),
            s.rank.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Precomputed `t̂` per video id, tied to one bundle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecencyCache {
    pub schema_hash: String,
    pub bundle_fingerprint: String,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

impl RecencyCache {
    pub fn build(bundle: &ModelBundle, examples: &[EncodedExample]) -> Result<Self, InferenceError> {
        let vectors = recency_vectors(bundle, examples)?;
        let mut by_id = BTreeMap::new();
        for e in examples {
            if let Some(v) = vectors.get(&video_key(e)) {
                by_id.entry(e.video_id.clone()).or_insert_with(|| v.0.clone());
            }
        }
        Ok(Self { schema_hash: bundle.schema_hash.clone(), bundle_fingerprint: bundle.fingerprint(), vectors: by_id })
    }

    pub fn is_valid_for(&self, bundle: &ModelBundle) -> bool {
        self.schema_hash == bundle.schema_hash && self.bundle_fingerprint == bundle.fingerprint()
    }

    pub fn get(&self, video_id: &str) -> Option<RecencyVector> {
        self.vectors.get(video_id).map(|v| RecencyVector(v.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::ReleaseInterval;

    fn example(interval: usize) -> EncodedExample {
        EncodedExample {
            user_id: "u".into(),
            video_id: "v".into(),
            user_indices: vec![],
            video_indices: vec![],
            user_dense: vec![],
            video_dense: vec![],
            interval: ReleaseInterval::clamped(interval as i64, 30),
            label: 0,
        }
    }

    #[test]
    fn prior_examples() {
        let ex: Vec<_> = [0, 0, 1, 2].iter().map(|a| example(*a)).collect();
        let p = estimate_interval_prior(&ex, 30).unwrap();
        assert_eq!(&p.probabilities[..4], &[0.5, 0.25, 0.25, 0.0]);
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ex: Vec<_> = (0..7).map(|_| example(5)).collect();
        let p = estimate_interval_prior(&ex, 30).unwrap();
        assert_eq!(p.probabilities[5], 1.0);
        assert!(matches!(estimate_interval_prior(&[], 30), Err(InferenceError::EmptyInput)));
    }

    #[test]
    fn fuse_examples() {
        let t = RecencyVector(vec![0.6, 0.2]);
        let f = fuse(0.8, &t, 0.5);
        assert!((f[0] - 0.7).abs() < 1e-12 && (f[1] - 0.5).abs() < 1e-12);
        assert_eq!(fuse(0.8, &t, 1.0), vec![0.8, 0.8]);
        assert_eq!(fuse(0.8, &RecencyVector(vec![0.0; 3]), 0.25), vec![0.2; 3]);
    }

    #[test]
    fn policy1_examples() {
        let t = RecencyVector(vec![0.0, (0.6f64 / 0.4).ln()]);
        assert!((infer_policy1(0.8, &t, 0, 0.5).unwrap() - 0.65).abs() < 1e-12);
        assert!((infer_policy1(0.8, &t, 1, 0.5).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(infer_policy1(0.3, &t, 1, 1.0).unwrap(), 0.3);
        assert!(matches!(infer_policy1(0.3, &t, 2, 0.5), Err(InferenceError::IntervalOutOfRange { .. })));
    }

    #[test]
    fn policy2_examples() {
        let prior = IntervalPrior { probabilities: vec![0.75, 0.25] };
        let t = RecencyVector(vec![1.0, -1.0]);
        let y = infer_policy2(0.8, &t, &prior, 0.5).unwrap();
        assert!((y - sigmoid(0.65)).abs() < 1e-12);
        assert!((y - 0.657010).abs() < 1e-6);
        let c = RecencyVector(vec![0.3, 0.3]);
        assert!((infer_policy2(0.8, &c, &prior, 0.5).unwrap() - sigmoid(0.4 + 0.15)).abs() < 1e-12);
        let one_hot = IntervalPrior { probabilities: vec![0.0, 1.0] };
        assert!((infer_policy2(0.8, &t, &one_hot, 0.5).unwrap() - sigmoid(0.4 - 0.5)).abs() < 1e-12);
        let short = IntervalPrior { probabilities: vec![1.0] };
        assert!(matches!(infer_policy2(0.8, &t, &short, 0.5), Err(InferenceError::LengthMismatch(2, 1))));
    }

    #[test]
    fn ranks_break_ties_by_video_id() {
        let mk = |u: &str, v: &str, y: f64| ScoredExample {
            user_id: u.into(),
            video_id: v.into(),
            interval: 0,
            label: 0,
            matching_logit: 0.0,
            m_hat: y,
            recency: None,
            y_hat: y,
            rank: 0,
        };
        let mut s = vec![mk("b", "v2", 0.5), mk("a", "v9", 0.1), mk("b", "v1", 0.5), mk("a", "v3", 0.9), mk("b", "v0", 0.2)];
        assign_ranks(&mut s);
        let order: Vec<(&str, &str, usize)> = s.iter().map(|x| (x.user_id.as_str(), x.video_id.as_str(), x.rank)).collect();
        assert_eq!(order, vec![("a", "v3", 1), ("a", "v9", 2), ("b", "v1", 1), ("b", "v2", 2), ("b", "v0", 3)]);
    }

    #[test]
    fn config_validation() {
        assert!(FusionConfig::new(Policy::Policy1, 0.5).validate().is_ok());
        assert!(FusionConfig::new(Policy::Policy1, 1.0).validate().is_err());
        assert!(FusionConfig::new(Policy::BackboneOnly, 1.0).validate().is_ok());
        assert_eq!("backbone-only".parse::<Policy>().unwrap(), Policy::BackboneOnly);
        assert_eq!(serde_json::to_string(&Policy::BackboneOnly).unwrap(), "\"backbone-only\"");
    }
}
