//! Joint training of a backbone and the recency perceptron.
//!
//! Each batch computes `L = α·L_m + (1−α)·L_t` on the same examples,
//! accumulates gradients through per-example tapes and takes one Adam step.
//! After every epoch the validation split is scored under the selection
//! policy; the best epoch's parameters are kept.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backbones::{Backbone, BackboneKind, MatchingModel, ModelError};
use crate::dataio::{DatasetSplit, EncodedExample, EncodedSet, FeatureSchema};
use crate::evaluation::mean_ndcg;
use crate::inference::{estimate_interval_prior, score_examples, FusionConfig, InferenceError, IntervalPrior, Policy};
use crate::numerics::{adam_step, bce, grad_check, sigmoid, GradCheckReport, Mode, NumericsError, OptimizerConfig, ParamStore, Tape};
use crate::perceptron::{recency_loss, RecencyPerceptron, RecencyVector, WindowConfig};

pub const CHECKPOINT_FORMAT: &str = "ldri-bundle";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("{0} split is empty")]
    EmptySplit(&'static str),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
    #[error("schema hash of data ({data}) differs from schema ({schema})")]
    SchemaMismatch { schema: String, data: String },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("checkpoint is corrupt: {0}")]
    Corrupt(String),
    #[error("checkpoint version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checksum mismatch")]
    Checksum,
}

/// Which losses drive the update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainObjective {
    /// `α·L_m + (1−α)·L_t`.
    #[default]
    Joint,
    /// `L_m` alone, no perceptron. The backbone-only comparator.
    MatchingOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneKind,
    pub embedding_dim: usize,
    pub dropout: f64,
    /// `|A|`.
    pub horizon: usize,
    pub window: WindowConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { backbone: BackboneKind::DeepFm, embedding_dim: 16, dropout: 0.3, horizon: 30, window: WindowConfig { half_width: 1 } }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.embedding_dim == 0 {
            return Err("embedding_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout must lie in [0,1), got {}", self.dropout));
        }
        WindowConfig::new(self.window.half_width, self.horizon).map(|_| ())
    }
}

/// Model-selection criterion: mean NDCG@k on validation under `policy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetric {
    pub policy: Policy,
    pub beta: f64,
    pub k: usize,
}

impl Default for ValidationMetric {
    fn default() -> Self {
        Self { policy: Policy::Policy1, beta: 0.5, k: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub seed: u64,
    pub early_stop_patience: usize,
    pub validation_metric: ValidationMetric,
    pub objective: TrainObjective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = OptimizerConfig::default();
        Self {
            alpha: 0.6,
            epochs: 50,
            batch_size: opt.batch_size,
            learning_rate: opt.learning_rate,
            adam_beta1: opt.beta1,
            adam_beta2: opt.beta2,
            adam_epsilon: opt.epsilon,
            seed: 0,
            early_stop_patience: 5,
            validation_metric: ValidationMetric::default(),
            objective: TrainObjective::Joint,
        }
    }
}

impl TrainConfig {
    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            batch_size: self.batch_size,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("alpha must lie in (0,1), got {}", self.alpha));
        }
        if self.epochs == 0 {
            return Err("epochs must be positive".into());
        }
        if self.validation_metric.k == 0 {
            return Err("validation k must be positive".into());
        }
        self.optimizer().validate().map_err(|e| e.to_string())?;
        if self.objective == TrainObjective::Joint {
            FusionConfig::new(self.validation_metric.policy, self.validation_metric.beta).validate()?;
        }
        Ok(())
    }

    /// The policy used for selection; a matching-only run has no perceptron.
    pub fn selection_fusion(&self) -> FusionConfig {
        let policy = match self.objective {
            TrainObjective::Joint => self.validation_metric.policy,
            TrainObjective::MatchingOnly => Policy::BackboneOnly,
        };
        FusionConfig::new(policy, self.validation_metric.beta)
    }
}

/// Everything needed to score: parameters, architecture, schema and prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub schema_hash: String,
    pub schema: FeatureSchema,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub params: ParamStore,
    pub backbone: Backbone,
    pub perceptron: Option<RecencyPerceptron>,
    pub prior: Option<IntervalPrior>,
    pub best_epoch: Option<usize>,
    pub best_validation_metric: Option<f64>,
}

impl ModelBundle {
    /// Freshly initialized bundle; parameter creation order is backbone first.
    pub fn init(schema: &FeatureSchema, model: ModelConfig, train: TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(train.seed);
        let mut params = ParamStore::new();
        let backbone = Backbone::new(model.backbone, &mut params, schema, model.embedding_dim, model.dropout, &mut rng);
        let perceptron = match train.objective {
            TrainObjective::Joint => Some(RecencyPerceptron::new(&mut params, schema, model.embedding_dim, model.dropout, &mut rng)),
            TrainObjective::MatchingOnly => None,
        };
        Self {
            schema_hash: schema.hash(),
            schema: schema.clone(),
            model,
            train,
            params,
            backbone,
            perceptron,
            prior: None,
            best_epoch: None,
            best_validation_metric: None,
        }
    }

    /// Hex SHA-256 over parameter values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in self.params.tensors() {
            h.update(t.name.as_bytes());
            for v in &t.values {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn window(&self) -> WindowConfig {
        self.model.window
    }
}

/// Loss components for one example.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLoss {
    pub total: f64,
    pub matching: f64,
    pub recency: f64,
}

/// `α·L_m + (1−α)·L_t`; accepts the closed interval for limit checks.
pub fn combine_losses(matching: f64, recency: f64, alpha: f64) -> f64 {
    alpha * matching + (1.0 - alpha) * recency
}

/// Joint loss of one example from `m̂`, `t̂`, its interval and label.
pub fn joint_loss(m_hat: f64, scores: &RecencyVector, interval: usize, window: WindowConfig, label: u8, alpha: f64) -> JointLoss {
    let matching = bce(m_hat, f64::from(label));
    let recency = recency_loss(scores, interval, window, label);
    JointLoss { total: combine_losses(matching, recency, alpha), matching, recency }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub matching_loss: f64,
    pub recency_loss: f64,
    pub validation_loss: f64,
    pub validation_metric: f64,
}

/// Records the example's loss on `tape` and returns `(L node, L_m, L_t)`.
pub fn example_loss<R: rand::Rng>(
    bundle: &ModelBundle,
    tape: &mut Tape,
    example: &EncodedExample,
    alpha: f64,
    mode: &mut Mode<'_, R>,
) -> Result<(crate::numerics::NodeId, f64, f64), ModelError> {
    objective_node(bundle, &bundle.params, tape, example, alpha, mode)
}

/// [`example_loss`] evaluated against `store` instead of the bundle's own parameters.
pub fn objective_node<R: rand::Rng>(
    bundle: &ModelBundle,
    store: &ParamStore,
    tape: &mut Tape,
    example: &EncodedExample,
    alpha: f64,
    mode: &mut Mode<'_, R>,
) -> Result<(crate::numerics::NodeId, f64, f64), ModelError> {
    let y = f64::from(example.label);
    let z = bundle.backbone.logit(store, tape, example, mode)?;
    let m = tape.sigmoid(z);
    let lm = tape.bce(m, y)?;
    let lm_v = tape.scalar(lm);
    match &bundle.perceptron {
        None => Ok((lm, lm_v, 0.0)),
        Some(p) => {
            let t = p.forward_node(store, tape, example, mode)?;
            let lt = RecencyPerceptron::loss_node(tape, t, example.interval.value(), bundle.model.window, y)?;
            let lt_v = tape.scalar(lt);
            let l = tape.linear(vec![(lm, alpha), (lt, 1.0 - alpha)])?;
            Ok((l, lm_v, lt_v))
        }
    }
}

/// Central-difference check of the mean objective over `examples` with
/// dropout off. `alpha = 1` isolates `L_m`, `alpha = 0` isolates `L_t`.
pub fn grad_check_objective(bundle: &ModelBundle, examples: &[EncodedExample], alpha: f64, step: f64, seed: u64) -> Result<GradCheckReport, NumericsError> {
    if examples.is_empty() {
        return Err(NumericsError::Shape("grad check needs at least one example".into()));
    }
    let mut store = bundle.params.clone();
    let scale = 1.0 / examples.len() as f64;
    grad_check(&mut store, step, seed, |store, tape| {
        let mut terms = Vec::with_capacity(examples.len());
        for e in examples {
            let (l, _, _) = objective_node(bundle, store, tape, e, alpha, &mut Mode::<ChaCha8Rng>::Eval).map_err(|err| match err {
                ModelError::Numerics(n) => n,
                other => NumericsError::Shape(other.to_string()),
            })?;
            terms.push((l, scale));
        }
        tape.linear(terms)
    })
}

/// Mean losses over `examples` in eval mode: `(L, L_m, L_t)`.
pub fn evaluate_loss(bundle: &ModelBundle, examples: &[EncodedExample]) -> Result<(f64, f64, f64), ModelError> {
    let alpha = bundle.train.alpha;
    let parts: Vec<(f64, f64)> = examples
        .par_iter()
        .map(|e| {
            let mut tape = Tape::new();
            let (_, lm, lt) = example_loss(bundle, &mut tape, e, alpha, &mut Mode::<ChaCha8Rng>::Eval)?;
            Ok((lm, lt))
        })
        .collect::<Result<_, ModelError>>()?;
    let n = parts.len().max(1) as f64;
    let lm = parts.iter().map(|p| p.0).sum::<f64>() / n;
    let lt = parts.iter().map(|p| p.1).sum::<f64>() / n;
    let total = if bundle.perceptron.is_some() { combine_losses(lm, lt, alpha) } else { lm };
    Ok((total, lm, lt))
}

/// Validation NDCG@k under the configured selection policy.
pub fn validation_metric(bundle: &ModelBundle, validation: &[EncodedExample]) -> Result<f64, TrainError> {
    let fusion = bundle.train.selection_fusion();
    let scores = score_examples(bundle, validation, &fusion)?;
    Ok(mean_ndcg(&scores, bundle.train.validation_metric.k))
}

fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Trains on `data.train`, selecting on `data.validation`. Returns the best
/// bundle and one record per completed epoch.
pub fn train(data: &DatasetSplit, schema: &FeatureSchema, model: ModelConfig, config: TrainConfig) -> Result<(ModelBundle, Vec<EpochRecord>), TrainError> {
    train_with_log(data, schema, model, config, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_log<F: FnMut(&EpochRecord)>(
    data: &DatasetSplit,
    schema: &FeatureSchema,
    model: ModelConfig,
    config: TrainConfig,
    mut on_epoch: F,
) -> Result<(ModelBundle, Vec<EpochRecord>), TrainError> {
    config.validate().map_err(TrainError::Config)?;
    model.validate().map_err(TrainError::Config)?;
    if schema.horizon != model.horizon {
        return Err(TrainError::Config(format!("schema horizon {} differs from model horizon {}", schema.horizon, model.horizon)));
    }
    let hash = schema.hash();
    for set in [&data.train, &data.validation] {
        if set.schema_hash != hash {
            return Err(TrainError::SchemaMismatch { schema: hash, data: set.schema_hash.clone() });
        }
    }
    if data.train.is_empty() {
        return Err(TrainError::EmptySplit("train"));
    }
    if data.validation.is_empty() {
        return Err(TrainError::EmptySplit("validation"));
    }

    let mut bundle = ModelBundle::init(schema, model, config);
    bundle.prior = Some(estimate_interval_prior(&data.train.examples, schema.horizon)?);
    let optimizer = config.optimizer();
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    let mut tape = Tape::new();
    let mut step: u64 = 0;
    let mut best: Option<(usize, f64, ParamStore)> = None;
    let mut since_best = 0;
    let mut log = Vec::new();

    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(config.seed, epoch)));
        let (mut sum_l, mut sum_m, mut sum_t) = (0.0, 0.0, 0.0);
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let scale = 1.0 / chunk.len() as f64;
            let mut batch_loss = 0.0;
            for &i in chunk {
                let ex = &data.train.examples[i];
                tape.clear();
                let (l, lm, lt) = example_loss(&bundle, &mut tape, ex, config.alpha, &mut Mode::Train(&mut dropout_rng))?;
                let lv = tape.scalar(l);
                batch_loss += lv;
                sum_l += lv;
                sum_m += lm;
                sum_t += lt;
                tape.backward(l, scale, &mut bundle.params)?;
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            step += 1;
            adam_step(&mut bundle.params, &optimizer, step)?;
        }
        let n = data.train.len() as f64;
        let (validation_loss, _, _) = evaluate_loss(&bundle, &data.validation.examples)?;
        let metric = validation_metric(&bundle, &data.validation.examples)?;
        let record = EpochRecord {
            epoch,
            loss: sum_l / n,
            matching_loss: sum_m / n,
            recency_loss: sum_t / n,
            validation_loss,
            validation_metric: metric,
        };
        on_epoch(&record);
        log.push(record);
        if best.as_ref().is_none_or(|b| metric > b.1) {
            best = Some((epoch, metric, bundle.params.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    let (epoch, metric, params) = best.expect("at least one epoch");
    bundle.params = params;
    bundle.best_epoch = Some(epoch);
    bundle.best_validation_metric = Some(metric);
    Ok((bundle, log))
}

/// Trains one bundle per seed in parallel; results are in `seeds` order.
pub fn seed_sweep(
    data: &DatasetSplit,
    schema: &FeatureSchema,
    model: ModelConfig,
    config: TrainConfig,
    seeds: &[u64],
) -> Vec<Result<(ModelBundle, Vec<EpochRecord>), TrainError>> {
    seeds
        .par_iter()
        .map(|s| train(data, schema, model, TrainConfig { seed: *s, ..config }))
        .collect()
}

/// Encoded set check used by callers scoring with a restored bundle.
pub fn ensure_schema(bundle: &ModelBundle, set: &EncodedSet) -> Result<(), TrainError> {
    if bundle.schema_hash != set.schema_hash {
        return Err(TrainError::SchemaMismatch { schema: bundle.schema_hash.clone(), data: set.schema_hash.clone() });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    sha256: String,
    payload_len: usize,
}

/// Bytes of a checkpoint: a JSON header line, then the JSON payload.
pub fn checkpoint_bytes(bundle: &ModelBundle) -> Vec<u8> {
    let payload = serde_json::to_vec(bundle).expect("bundle serializes");
    let header = CheckpointHeader {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        sha256: hex::encode(Sha256::digest(&payload)),
        payload_len: payload.len(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.extend_from_slice(&payload);
    out
}

pub fn restore_bytes(bytes: &[u8]) -> Result<ModelBundle, CheckpointError> {
    let nl = bytes.iter().position(|b| *b == b'\n').ok_or_else(|| CheckpointError::Corrupt("missing header".into()))?;
    let header: CheckpointHeader = serde_json::from_slice(&bytes[..nl]).map_err(|e| CheckpointError::Corrupt(format!("header: {e}")))?;
    if header.format != CHECKPOINT_FORMAT {
        return Err(CheckpointError::Corrupt(format!("unknown format `{}`", header.format)));
    }
    if header.version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version { found: header.version, expected: CHECKPOINT_VERSION });
    }
    let payload = &bytes[nl + 1..];
    if payload.len() != header.payload_len || hex::encode(Sha256::digest(payload)) != header.sha256 {
        return Err(CheckpointError::Checksum);
    }
    serde_json::from_slice(payload).map_err(|e| CheckpointError::Corrupt(format!("payload: {e}")))
}

pub fn checkpoint(bundle: &ModelBundle, path: &Path) -> Result<(), CheckpointError> {
    fs::write(path, checkpoint_bytes(bundle)).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
}

pub fn restore(path: &Path) -> Result<ModelBundle, CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
    restore_bytes(&bytes)
}

pub fn write_log<W: Write>(mut writer: W, log: &[EpochRecord]) -> std::io::Result<()> {
    for r in log {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// `m̂` of one example in eval mode.
pub fn matching_probability(bundle: &ModelBundle, example: &EncodedExample) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let z = bundle.backbone.logit(&bundle.params, &mut tape, example, &mut Mode::<ChaCha8Rng>::Eval)?;
    Ok(sigmoid(tape.scalar(z)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::tests::{tiny_columns, tiny_records};
    use crate::dataio::{build_schema, holdout, SplitMode};

    fn toy(n: usize, seed: u64) -> (FeatureSchema, DatasetSplit) {
        let recs = tiny_records(n, seed);
        let test = tiny_records(20, seed + 100);
        let s = holdout(recs, test, &SplitMode::Holdout { validation: 0.2, seed }).unwrap();
        let schema = build_schema(&s.train, &tiny_columns(), 10).unwrap();
        let data = s.encode(&schema);
        (schema, data)
    }

    fn small_model() -> ModelConfig {
        ModelConfig { backbone: BackboneKind::DeepFm, embedding_dim: 4, dropout: 0.3, horizon: 10, window: WindowConfig { half_width: 1 } }
    }

    #[test]
    fn loss_combination_examples() {
        assert!((combine_losses(1.0, 0.5, 0.6) - 0.8).abs() < 1e-12);
        assert_eq!(combine_losses(1.3, 0.2, 1.0), 1.3);
        assert_eq!(combine_losses(1.3, 0.2, 0.0), 0.2);
        let t = RecencyVector(vec![0.0; 5]);
        let l = joint_loss(0.5, &t, 2, WindowConfig { half_width: 1 }, 1, 0.6);
        assert!((l.total - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn defaults_match_published_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!((c.alpha, c.batch_size, c.learning_rate), (0.6, 1024, 1e-4));
        let m = ModelConfig::default();
        assert_eq!((m.dropout, m.window.half_width, m.horizon), (0.3, 1, 30));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { alpha: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
        assert!(ModelConfig { horizon: 2, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn one_epoch_is_deterministic() {
        let (schema, data) = toy(40, 3);
        let cfg = TrainConfig { epochs: 1, batch_size: 8, learning_rate: 1e-2, seed: 9, ..Default::default() };
        let (a, la) = train(&data, &schema, small_model(), cfg).unwrap();
        let (b, lb) = train(&data, &schema, small_model(), cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(checkpoint_bytes(&a), checkpoint_bytes(&b));
        let (c, _) = train(&data, &schema, small_model(), TrainConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn selection_keeps_best_epoch() {
        let (schema, data) = toy(60, 4);
        let cfg = TrainConfig { epochs: 6, batch_size: 8, learning_rate: 1e-2, seed: 1, early_stop_patience: 100, ..Default::default() };
        let (b, log) = train(&data, &schema, small_model(), cfg).unwrap();
        assert_eq!(log.len(), 6);
        let max = log.iter().map(|r| r.validation_metric).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(b.best_validation_metric, Some(max));
        assert_eq!(validation_metric(&b, &data.validation.examples).unwrap(), max);
        let prior = b.prior.as_ref().unwrap();
        assert!((prior.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn early_stopping_respects_patience() {
        let (schema, data) = toy(60, 5);
        let cfg = TrainConfig { epochs: 40, batch_size: 8, learning_rate: 1e-2, seed: 2, early_stop_patience: 2, ..Default::default() };
        let (b, log) = train(&data, &schema, small_model(), cfg).unwrap();
        let best = b.best_epoch.unwrap();
        assert!(log.len() <= best + 2);
        assert!(log.len() == 40 || log.len() == best + 2);
    }

    #[test]
    fn matching_only_has_no_perceptron() {
        let (schema, data) = toy(30, 6);
        let cfg = TrainConfig { epochs: 2, batch_size: 8, objective: TrainObjective::MatchingOnly, ..Default::default() };
        let (b, log) = train(&data, &schema, small_model(), cfg).unwrap();
        assert!(b.perceptron.is_none());
        assert!(log.iter().all(|r| r.recency_loss == 0.0 && r.loss == r.matching_loss));
    }

    #[test]
    fn empty_validation_rejected() {
        let (schema, mut data) = toy(30, 7);
        data.validation.examples.clear();
        assert!(matches!(train(&data, &schema, small_model(), TrainConfig::default()), Err(TrainError::EmptySplit("validation"))));
    }

    #[test]
    fn checkpoint_round_trip_and_guards() {
        let (schema, data) = toy(30, 8);
        let cfg = TrainConfig { epochs: 1, batch_size: 8, learning_rate: 1e-2, ..Default::default() };
        let (b, _) = train(&data, &schema, small_model(), cfg).unwrap();
        let bytes = checkpoint_bytes(&b);
        let back = restore_bytes(&bytes).unwrap();
        assert_eq!(back, b);
        assert_eq!(back.fingerprint(), b.fingerprint());
        assert!(matches!(restore_bytes(&bytes[..bytes.len() - 10]), Err(CheckpointError::Checksum)));
        let mut flipped = bytes.clone();
        let last = flipped.len() - 3;
        flipped[last] ^= 1;
        assert!(matches!(restore_bytes(&flipped), Err(CheckpointError::Checksum)));
        let text = String::from_utf8(bytes.clone()).unwrap().replacen("\"version\":1", "\"version\":99", 1);
        assert!(matches!(restore_bytes(text.as_bytes()), Err(CheckpointError::Version { found: 99, .. })));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.ckpt");
        checkpoint(&b, &p).unwrap();
        assert_eq!(restore(&p).unwrap(), b);
    }

    #[test]
    fn log_is_jsonl() {
        let r = EpochRecord { epoch: 1, loss: 0.5, matching_loss: 0.4, recency_loss: 0.6, validation_loss: 0.55, validation_metric: 0.3 };
        let mut buf = Vec::new();
        write_log(&mut buf, &[r.clone(), r.clone()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        let back: EpochRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
