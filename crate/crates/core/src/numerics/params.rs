use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// A trainable tensor together with its gradient and Adam moments.
///
/// Storage is row-major. Rank-2 tensors are `[rows, cols]`; an embedding table
/// of `n` rows of width `d` is `[n, d]`, an affine weight is `[out, in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
    pub moment1: Vec<f64>,
    pub moment2: Vec<f64>,
}

impl ParamTensor {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            values: vec![0.0; n],
            grad: vec![0.0; n],
            moment1: vec![0.0; n],
            moment2: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Width of one row (last dimension); 1 for rank-1 tensors.
    pub fn row_width(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[self.shape.len() - 1]
        } else {
            1
        }
    }

    pub fn rows(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[0]
        } else {
            self.values.len()
        }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.row_width();
        &self.values[r * w..(r + 1) * w]
    }
}

/// Owner of every trainable tensor of a model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    tensors: Vec<ParamTensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, tensor: ParamTensor) -> ParamId {
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Embedding table with entries drawn from uniform(-0.01, 0.01).
    pub fn add_embedding<R: Rng>(&mut self, name: &str, rows: usize, dim: usize, rng: &mut R) -> ParamId {
        let mut t = ParamTensor::zeros(name, vec![rows, dim]);
        for v in &mut t.values {
            *v = rng.random_range(-0.01..0.01);
        }
        self.add(t)
    }

    /// Affine weight `[out, in]` with Glorot-uniform entries.
    pub fn add_glorot<R: Rng>(&mut self, name: &str, out_dim: usize, in_dim: usize, rng: &mut R) -> ParamId {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut t = ParamTensor::zeros(name, vec![out_dim, in_dim]);
        for v in &mut t.values {
            *v = rng.random_range(-bound..bound);
        }
        self.add(t)
    }

    pub fn add_zeros(&mut self, name: &str, shape: Vec<usize>) -> ParamId {
        self.add(ParamTensor::zeros(name, shape))
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.tensors[id.0]
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_entries(&self) -> usize {
        self.tensors.iter().map(ParamTensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Sets every value of the listed tensors to zero.
    pub fn zero_values(&mut self, ids: &[ParamId]) {
        for id in ids {
            self.tensors[id.0].values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Fails on the first tensor holding a non-finite value.
    pub fn check_finite(&self) -> Result<(), NumericsError> {
        for t in &self.tensors {
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(NumericsError::NonFinite {
                    what: "value",
                    param: t.name.clone(),
                });
            }
        }
        Ok(())
    }
}
