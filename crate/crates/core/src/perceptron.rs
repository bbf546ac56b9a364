//! Recency-sensitivity perceptron: a residual MLP from video-side features to
//! one raw score per release interval, supervised through a truncated window
//! average around the observed interval.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::backbones::{check_fields, ModelError};
use crate::dataio::{EncodedExample, FeatureSchema, Side};
use crate::numerics::{bce, sigmoid, window_mean, Affine, Mode, NodeId, ParamId, ParamStore, Tape};

pub const PERCEPTRON_HIDDEN: usize = 64;

/// Half-width `N` of the supervision window (`2N + 1` intervals).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub half_width: usize,
}

impl WindowConfig {
    pub fn new(half_width: usize, horizon: usize) -> Result<Self, String> {
        if 2 * half_width + 1 > horizon {
            return Err(format!("window 2*{half_width}+1 exceeds horizon {horizon}"));
        }
        Ok(Self { half_width })
    }
}

/// Raw per-interval scores `t̂` of one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecencyVector(pub Vec<f64>);

impl RecencyVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn at(&self, interval: usize) -> f64 {
        self.0[interval]
    }
}

/// Input projection → residual block (two 64→64 ReLU layers with a skip
/// around both) → output head of width `|A|`. Dropout on hidden activations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecencyPerceptron {
    pub embeddings: Vec<ParamId>,
    pub video_vocab: Vec<usize>,
    pub dense_dim: usize,
    pub input: Affine,
    pub block: [Affine; 2],
    pub head: Affine,
    pub dropout: f64,
    pub horizon: usize,
}

impl RecencyPerceptron {
    pub fn new<R: Rng>(store: &mut ParamStore, schema: &FeatureSchema, dim: usize, dropout: f64, rng: &mut R) -> Self {
        let embeddings: Vec<ParamId> = schema
            .fields(Side::Video)
            .map(|f| store.add_embedding(&format!("recency.embedding.{}", f.name), f.vocab_size(), dim, rng))
            .collect();
        let dense_dim = schema.dense_count(Side::Video);
        let in_dim = dim * embeddings.len() + dense_dim;
        let h = PERCEPTRON_HIDDEN;
        Self {
            video_vocab: schema.vocab_sizes(Side::Video),
            embeddings,
            dense_dim,
            input: Affine::new(store, "recency.input", in_dim, h, rng),
            block: [Affine::new(store, "recency.block0", h, h, rng), Affine::new(store, "recency.block1", h, h, rng)],
            head: Affine::new(store, "recency.head", h, schema.horizon, rng),
            dropout,
            horizon: schema.horizon,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.embeddings.clone();
        for layer in [&self.input, &self.block[0], &self.block[1], &self.head] {
            ids.extend(layer.params());
        }
        ids
    }

    /// Node holding `t̂`. Reads video-side inputs only.
    pub fn forward_node<R: Rng>(&self, store: &ParamStore, tape: &mut Tape, example: &EncodedExample, mode: &mut Mode<'_, R>) -> Result<NodeId, ModelError> {
        check_fields(example, &[], &self.video_vocab, true)?;
        if example.video_dense.len() != self.dense_dim {
            return Err(ModelError::SchemaMismatch(format!(
                "{} video dense values, perceptron expects {}",
                example.video_dense.len(),
                self.dense_dim
            )));
        }
        let mut parts = Vec::with_capacity(self.embeddings.len() + 1);
        for (emb, row) in self.embeddings.iter().zip(&example.video_indices) {
            parts.push(tape.lookup(store, *emb, *row as usize)?);
        }
        parts.push(tape.constant(example.video_dense.clone()));
        let x = tape.concat(parts);

        let z = self.input.forward(tape, store, x)?;
        let h0 = tape.relu(z);
        let h0 = tape.dropout(h0, self.dropout, mode);
        let z1 = self.block[0].forward(tape, store, h0)?;
        let h1 = tape.relu(z1);
        let z2 = self.block[1].forward(tape, store, h1)?;
        let h2 = tape.relu(z2);
        let h = tape.add(h0, h2)?;
        let h = tape.dropout(h, self.dropout, mode);
        Ok(self.head.forward(tape, store, h)?)
    }

    pub fn recency_forward<R: Rng>(&self, store: &ParamStore, example: &EncodedExample, mode: &mut Mode<'_, R>) -> Result<RecencyVector, ModelError> {
        let mut tape = Tape::new();
        let node = self.forward_node(store, &mut tape, example, mode)?;
        Ok(RecencyVector(tape.value(node).to_vec()))
    }

    /// Recency loss node `BCE(σ(t̂′_a), y)` on an existing `t̂` node.
    pub fn loss_node(tape: &mut Tape, scores: NodeId, interval: usize, window: WindowConfig, label: f64) -> Result<NodeId, ModelError> {
        let smoothed = tape.window_mean(scores, interval, window.half_width)?;
        let p = tape.sigmoid(smoothed);
        Ok(tape.bce(p, label)?)
    }
}

/// Window-smoothed score `t̂′_a`.
pub fn window_smooth(scores: &RecencyVector, interval: usize, window: WindowConfig) -> f64 {
    window_mean(&scores.0, interval, window.half_width)
}

/// `BCE(σ(t̂′_a), y)`.
pub fn recency_loss(scores: &RecencyVector, interval: usize, window: WindowConfig, label: u8) -> f64 {
    bce(sigmoid(window_smooth(scores, interval, window)), f64::from(label))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbones::tests::{tiny_records, tiny_schema};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eval() -> Mode<'static, ChaCha8Rng> {
        Mode::Eval
    }

    fn w(n: usize) -> WindowConfig {
        WindowConfig { half_width: n }
    }

    #[test]
    fn smoothing_examples() {
        let t = RecencyVector(vec![0.2, 0.4, 0.6]);
        assert!((window_smooth(&t, 1, w(1)) - 0.4).abs() < 1e-12);
        assert!((window_smooth(&t, 0, w(1)) - 0.3).abs() < 1e-12);
        assert_eq!(window_smooth(&t, 2, w(0)), 0.6);
    }

    #[test]
    fn loss_examples() {
        let zero = RecencyVector(vec![0.0; 3]);
        assert!((recency_loss(&zero, 1, w(1), 1) - std::f64::consts::LN_2).abs() < 1e-12);
        let big = RecencyVector(vec![40.0; 3]);
        assert!(recency_loss(&big, 1, w(1), 1) < 1e-6);
        let two = RecencyVector(vec![2.0; 3]);
        for a in 0..3 {
            assert!((recency_loss(&two, a, w(1), 1) - 0.126928).abs() < 1e-6);
        }
    }

    #[test]
    fn window_config_bounds() {
        assert!(WindowConfig::new(1, 30).is_ok());
        assert!(WindowConfig::new(15, 30).is_err());
        assert!(WindowConfig::new(14, 29).is_ok());
    }

    #[test]
    fn zero_parameters_give_zero_vector() {
        let schema = tiny_schema();
        let mut store = ParamStore::new();
        let p = RecencyPerceptron::new(&mut store, &schema, 4, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        store.zero_values(&p.param_ids());
        let v = p.recency_forward(&store, &schema.encode(&tiny_records(1, 2)[0]), &mut eval()).unwrap();
        assert_eq!(v.0, vec![0.0; schema.horizon]);
    }

    #[test]
    fn user_features_do_not_matter() {
        let schema = tiny_schema();
        let mut store = ParamStore::new();
        let p = RecencyPerceptron::new(&mut store, &schema, 4, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        let mut a = schema.encode(&tiny_records(1, 2)[0]);
        let base = p.recency_forward(&store, &a, &mut eval()).unwrap();
        a.user_indices.iter_mut().for_each(|i| *i = 0);
        a.user_dense.iter_mut().for_each(|d| *d = 0.77);
        a.user_id = "someone-else".into();
        assert_eq!(p.recency_forward(&store, &a, &mut eval()).unwrap(), base);
    }

    #[test]
    fn unseen_video_yields_finite_vector() {
        let schema = tiny_schema();
        let mut store = ParamStore::new();
        let p = RecencyPerceptron::new(&mut store, &schema, 4, 0.3, &mut ChaCha8Rng::seed_from_u64(1));
        let mut r = tiny_records(1, 2).remove(0);
        r.video_id = "never-seen".into();
        let ex = schema.encode(&r);
        assert_eq!(ex.video_indices[0], 0);
        let v = p.recency_forward(&store, &ex, &mut eval()).unwrap();
        assert_eq!(v.len(), schema.horizon);
        assert!(v.0.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn gradient_flows_only_inside_window() {
        let schema = tiny_schema();
        let mut store = ParamStore::new();
        let p = RecencyPerceptron::new(&mut store, &schema, 4, 0.0, &mut ChaCha8Rng::seed_from_u64(1));
        let ex = schema.encode(&tiny_records(1, 2)[0]);
        let horizon = schema.horizon;
        for (a, n) in [(0usize, 1usize), (4, 1), (horizon - 1, 2), (5, 0)] {
            let mut tape = Tape::new();
            let t = p.forward_node(&store, &mut tape, &ex, &mut eval()).unwrap();
            let l = RecencyPerceptron::loss_node(&mut tape, t, a, w(n), 1.0).unwrap();
            store.zero_grad();
            tape.backward(l, 1.0, &mut store).unwrap();
            // gradient w.r.t. t̂ is visible as the head bias gradient
            let g = &store.get(p.head.bias).grad;
            for (j, gj) in g.iter().enumerate() {
                let inside = j + n >= a && j <= a + n;
                assert_eq!(*gj != 0.0, inside, "a={a} n={n} j={j}");
            }
        }
    }
}
