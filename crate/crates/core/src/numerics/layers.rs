use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NodeId, NumericsError, ParamId, ParamStore, Tape};

/// Dense layer `W x + b`, Glorot-initialized weights and zero bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Affine {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let weight = store.add_glorot(&format!("{name}.weight"), out_dim, in_dim, rng);
        let bias = store.add_zeros(&format!("{name}.bias"), vec![out_dim]);
        Self { weight, bias, in_dim, out_dim }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> Result<NodeId, NumericsError> {
        tape.affine(store, x, self.weight, self.bias)
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}
