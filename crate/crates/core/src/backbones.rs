//! User–video matching models behind one interface.
//!
//! A backbone maps an [`EncodedExample`] to a matching logit; `m̂` is its
//! sigmoid. Two implementations ship: a plain factorization machine and
//! DeepFM-lite (FM plus an MLP over the concatenated field embeddings and
//! dense features). A third backbone only needs to provide
//! [`MatchingModel::logit`] and [`MatchingModel::param_ids`].

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{EncodedExample, FeatureSchema, Side};
use crate::numerics::{bce, sigmoid, Affine, Mode, NodeId, NumericsError, ParamId, ParamStore, Tape};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("example does not match the model's schema: {0}")]
    SchemaMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackboneKind {
    Fm,
    #[serde(rename = "deepfm")]
    DeepFm,
}

impl std::str::FromStr for BackboneKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fm" => Ok(BackboneKind::Fm),
            "deepfm" => Ok(BackboneKind::DeepFm),
            other => Err(format!("unknown backbone `{other}` (expected fm or deepfm)")),
        }
    }
}

impl std::fmt::Display for BackboneKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BackboneKind::Fm => "fm",
            BackboneKind::DeepFm => "deepfm",
        })
    }
}

pub trait MatchingModel {
    /// Matching logit; records the computation on `tape`.
    fn logit<R: Rng>(&self, store: &ParamStore, tape: &mut Tape, example: &EncodedExample, mode: &mut Mode<'_, R>) -> Result<NodeId, ModelError>;

    fn param_ids(&self) -> Vec<ParamId>;
}

/// `(logit, m̂)` for one example.
pub fn match_forward<M: MatchingModel, R: Rng>(
    model: &M,
    store: &ParamStore,
    tape: &mut Tape,
    example: &EncodedExample,
    mode: &mut Mode<'_, R>,
) -> Result<(f64, f64), ModelError> {
    let logit = model.logit(store, tape, example, mode)?;
    let z = tape.scalar(logit);
    Ok((z, sigmoid(z)))
}

/// Mean BCE of matching probabilities against labels.
pub fn matching_loss(predictions: &[f64], labels: &[u8]) -> f64 {
    let n = predictions.len().max(1) as f64;
    predictions.iter().zip(labels).map(|(p, y)| bce(*p, f64::from(*y))).sum::<f64>() / n
}

pub(crate) fn check_fields(example: &EncodedExample, user_vocab: &[usize], video_vocab: &[usize], video_only: bool) -> Result<(), ModelError> {
    let check = |side: &str, idx: &[u32], vocab: &[usize]| {
        if idx.len() != vocab.len() {
            return Err(ModelError::SchemaMismatch(format!("{side} fields: example has {}, model expects {}", idx.len(), vocab.len())));
        }
        for (i, (v, n)) in idx.iter().zip(vocab).enumerate() {
            if *v as usize >= *n {
                return Err(ModelError::SchemaMismatch(format!("{side} field {i}: index {v} outside vocabulary of {n}")));
            }
        }
        Ok(())
    };
    if !video_only {
        check("user", &example.user_indices, user_vocab)?;
    }
    check("video", &example.video_indices, video_vocab)
}

/// `bias + Σ first-order weights + Σ_{i<j} <e_i, e_j>` over all categorical fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmBackbone {
    pub bias: ParamId,
    pub first_order: Vec<ParamId>,
    pub embeddings: Vec<ParamId>,
    pub user_vocab: Vec<usize>,
    pub video_vocab: Vec<usize>,
    pub dim: usize,
}

impl FmBackbone {
    pub fn new<R: Rng>(store: &mut ParamStore, schema: &FeatureSchema, dim: usize, rng: &mut R) -> Self {
        let bias = store.add_zeros("fm.bias", vec![1]);
        let mut first_order = Vec::new();
        let mut embeddings = Vec::new();
        for f in &schema.categorical {
            first_order.push(store.add_zeros(&format!("fm.linear.{}", f.name), vec![f.vocab_size(), 1]));
            embeddings.push(store.add_embedding(&format!("fm.embedding.{}", f.name), f.vocab_size(), dim, rng));
        }
        Self {
            bias,
            first_order,
            embeddings,
            user_vocab: schema.vocab_sizes(Side::User),
            video_vocab: schema.vocab_sizes(Side::Video),
            dim,
        }
    }

    fn indices<'a>(&self, example: &'a EncodedExample) -> impl Iterator<Item = usize> + 'a {
        example.user_indices.iter().chain(&example.video_indices).map(|i| *i as usize)
    }

    /// FM logit plus the per-field embedding nodes (shared with DeepFM's MLP).
    pub fn forward_parts(&self, store: &ParamStore, tape: &mut Tape, example: &EncodedExample) -> Result<(NodeId, Vec<NodeId>), ModelError> {
        check_fields(example, &self.user_vocab, &self.video_vocab, false)?;
        let mut terms = vec![(tape.param(store, self.bias), 1.0)];
        let mut embs = Vec::with_capacity(self.embeddings.len());
        for ((row, lin), emb) in self.indices(example).zip(&self.first_order).zip(&self.embeddings) {
            terms.push((tape.lookup(store, *lin, row)?, 1.0));
            embs.push(tape.lookup(store, *emb, row)?);
        }
        terms.push((tape.fm_pairwise(embs.clone())?, 1.0));
        Ok((tape.linear(terms)?, embs))
    }
}

impl MatchingModel for FmBackbone {
    fn logit<R: Rng>(&self, store: &ParamStore, tape: &mut Tape, example: &EncodedExample, _mode: &mut Mode<'_, R>) -> Result<NodeId, ModelError> {
        Ok(self.forward_parts(store, tape, example)?.0)
    }

    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = vec![self.bias];
        ids.extend(&self.first_order);
        ids.extend(&self.embeddings);
        ids
    }
}

pub const DEEPFM_HIDDEN: [usize; 2] = [64, 32];

/// FM logit plus an MLP logit over `[e_1, …, e_F, dense]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeepFmLite {
    pub fm: FmBackbone,
    pub hidden: Vec<Affine>,
    pub head: Affine,
    pub dropout: f64,
    pub dense_dim: usize,
}

impl DeepFmLite {
    pub fn new<R: Rng>(store: &mut ParamStore, schema: &FeatureSchema, dim: usize, hidden: &[usize], dropout: f64, rng: &mut R) -> Self {
        let fm = FmBackbone::new(store, schema, dim, rng);
        let dense_dim = schema.dense.len();
        let mut width = dim * schema.categorical.len() + dense_dim;
        let mut layers = Vec::new();
        for (i, h) in hidden.iter().enumerate() {
            layers.push(Affine::new(store, &format!("deepfm.mlp{i}"), width, *h, rng));
            width = *h;
        }
        let head = Affine::new(store, "deepfm.head", width, 1, rng);
        Self { fm, hidden: layers, head, dropout, dense_dim }
    }

    pub fn mlp_param_ids(&self) -> Vec<ParamId> {
        self.hidden.iter().chain(std::iter::once(&self.head)).flat_map(Affine::params).collect()
    }
}

impl MatchingModel for DeepFmLite {
    fn logit<R: Rng>(&self, store: &ParamStore, tape: &mut Tape, example: &EncodedExample, mode: &mut Mode<'_, R>) -> Result<NodeId, ModelError> {
        let (fm_logit, embs) = self.fm.forward_parts(store, tape, example)?;
        let dense_len = example.user_dense.len() + example.video_dense.len();
        if dense_len != self.dense_dim {
            return Err(ModelError::SchemaMismatch(format!("{dense_len} dense values, model expects {}", self.dense_dim)));
        }
        let mut parts = embs;
        let mut dense = example.user_dense.clone();
        dense.extend_from_slice(&example.video_dense);
        parts.push(tape.constant(dense));
        let mut h = tape.concat(parts);
        for layer in &self.hidden {
            let z = layer.forward(tape, store, h)?;
            let a = tape.relu(z);
            h = tape.dropout(a, self.dropout, mode);
        }
        let out = self.head.forward(tape, store, h)?;
        let mlp_logit = tape.sum(out);
        Ok(tape.add(fm_logit, mlp_logit)?)
    }

    fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.fm.param_ids();
        ids.extend(self.mlp_param_ids());
        ids
    }
}

/// Backbone selected by name in the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Backbone {
    Fm(FmBackbone),
    #[serde(rename = "deepfm")]
    DeepFm(DeepFmLite),
}

impl Backbone {
    pub fn new<R: Rng>(kind: BackboneKind, store: &mut ParamStore, schema: &FeatureSchema, dim: usize, dropout: f64, rng: &mut R) -> Self {
        match kind {
            BackboneKind::Fm => Backbone::Fm(FmBackbone::new(store, schema, dim, rng)),
            BackboneKind::DeepFm => Backbone::DeepFm(DeepFmLite::new(store, schema, dim, &DEEPFM_HIDDEN, dropout, rng)),
        }
    }

    pub fn kind(&self) -> BackboneKind {
        match self {
            Backbone::Fm(_) => BackboneKind::Fm,
            Backbone::DeepFm(_) => BackboneKind::DeepFm,
        }
    }
}

impl MatchingModel for Backbone {
    fn logit<R: Rng>(&self, store: &ParamStore, tape: &mut Tape, example: &EncodedExample, mode: &mut Mode<'_, R>) -> Result<NodeId, ModelError> {
        match self {
            Backbone::Fm(m) => m.logit(store, tape, example, mode),
            Backbone::DeepFm(m) => m.logit(store, tape, example, mode),
        }
    }

    fn param_ids(&self) -> Vec<ParamId> {
        match self {
            Backbone::Fm(m) => m.param_ids(),
            Backbone::DeepFm(m) => m.param_ids(),
        }
    }
}
