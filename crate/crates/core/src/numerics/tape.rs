//! Reverse-mode differentiation over small dense vectors.
//!
//! Every operation appends a node holding its forward value and enough
//! context to push adjoints back to its inputs. Nodes are created in
//! topological order, so [`Tape::backward`] is a single reverse sweep.

use rand::Rng;

use super::{NumericsError, ParamId, ParamStore};

/// Lower clamp applied to probabilities before taking logs in [`bce`].
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Constant,
    Param(ParamId),
    Lookup { param: ParamId, row: usize },
    Affine { input: NodeId, weight: ParamId, bias: ParamId },
    Concat(Vec<NodeId>),
    Relu(NodeId),
    Sigmoid(NodeId),
    Dropout { input: NodeId, mask: Vec<f64> },
    Add(NodeId, NodeId),
    Sum(NodeId),
    FmPairwise(Vec<NodeId>),
    WindowMean { input: NodeId, lo: usize, hi: usize },
    Index { input: NodeId, index: usize },
    Linear(Vec<(NodeId, f64)>),
    Bce { input: NodeId, label: f64 },
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    op: Op,
}

/// Execution mode for layers that behave differently while training.
pub enum Mode<'a, R: Rng> {
    Eval,
    Train(&'a mut R),
}

impl<R: Rng> Mode<'_, R> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of a probability against a {0,1} label, with the
/// probability clamped to `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce(prediction: f64, label: f64) -> f64 {
    let p = prediction.clamp(BCE_EPS, 1.0 - BCE_EPS);
    -(label * p.ln() + (1.0 - label) * (1.0 - p).ln())
}

/// Plain FM pairwise term: sum over unordered field pairs of dot products.
pub fn fm_second_order(embeddings: &[&[f64]]) -> Result<f64, NumericsError> {
    if embeddings.len() < 2 {
        return Err(NumericsError::TooFewFields(embeddings.len()));
    }
    let d = embeddings[0].len();
    if embeddings.iter().any(|e| e.len() != d) {
        return Err(NumericsError::Shape("fm fields have unequal embedding width".into()));
    }
    let mut out = 0.0;
    for f in 0..d {
        let s: f64 = embeddings.iter().map(|e| e[f]).sum();
        let sq: f64 = embeddings.iter().map(|e| e[f] * e[f]).sum();
        out += s * s - sq;
    }
    Ok(0.5 * out)
}

/// Mean of `values[a-n ..= a+n]`, truncated to valid indices and divided by
/// the number of indices actually included.
pub fn window_mean(values: &[f64], center: usize, half_width: usize) -> f64 {
    let (lo, hi) = window_bounds(values.len(), center, half_width);
    values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
}

pub(crate) fn window_bounds(len: usize, center: usize, half_width: usize) -> (usize, usize) {
    let lo = center.saturating_sub(half_width);
    let hi = (center + half_width).min(len - 1);
    (lo, hi)
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    spent: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all recorded nodes without propagating.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.spent = false;
    }

    /// Side of every non-smooth point on the tape: one flag per ReLU input
    /// entry (`> 0`) and per BCE input (inside the clamp). Two evaluations
    /// with equal patterns lie on the same smooth piece.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for n in &self.nodes {
            match &n.op {
                Op::Relu(x) => out.extend(self.nodes[x.0].value.iter().map(|v| *v > 0.0)),
                Op::Bce { input, .. } => {
                    let p = self.nodes[input.0].value[0];
                    out.push(p > BCE_EPS && p < 1.0 - BCE_EPS);
                }
                _ => {}
            }
        }
        out
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value[0]
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> NodeId {
        self.spent = false;
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> NodeId {
        self.push(value, Op::Constant)
    }

    /// The whole tensor as a flat vector.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> NodeId {
        let value = store.get(id).values.clone();
        self.push(value, Op::Param(id))
    }

    /// One row of an embedding table.
    pub fn lookup(&mut self, store: &ParamStore, id: ParamId, row: usize) -> Result<NodeId, NumericsError> {
        let t = store.get(id);
        if row >= t.rows() {
            return Err(NumericsError::Shape(format!(
                "row {row} out of range for `{}` with {} rows",
                t.name,
                t.rows()
            )));
        }
        let value = t.row(row).to_vec();
        Ok(self.push(value, Op::Lookup { param: id, row }))
    }

    /// `weight · input + bias` with `weight` shaped `[out, in]`.
    pub fn affine(
        &mut self,
        store: &ParamStore,
        input: NodeId,
        weight: ParamId,
        bias: ParamId,
    ) -> Result<NodeId, NumericsError> {
        let w = store.get(weight);
        let b = store.get(bias);
        let x = &self.nodes[input.0].value;
        if w.shape.len() != 2 || w.shape[1] != x.len() || b.len() != w.shape[0] {
            return Err(NumericsError::Shape(format!(
                "affine `{}` {:?} with bias {:?} cannot take input of length {}",
                w.name,
                w.shape,
                b.shape,
                x.len()
            )));
        }
        let (out_dim, in_dim) = (w.shape[0], w.shape[1]);
        let mut out = b.values.clone();
        for (o, acc) in out.iter_mut().enumerate() {
            let row = &w.values[o * in_dim..(o + 1) * in_dim];
            *acc += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        debug_assert_eq!(out.len(), out_dim);
        Ok(self.push(out, Op::Affine { input, weight, bias }))
    }

    pub fn concat(&mut self, parts: Vec<NodeId>) -> NodeId {
        let mut value = Vec::new();
        for p in &parts {
            value.extend_from_slice(&self.nodes[p.0].value);
        }
        self.push(value, Op::Concat(parts))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|v| v.max(0.0)).collect();
        self.push(value, Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let value = self.nodes[x.0].value.iter().map(|v| sigmoid(*v)).collect();
        self.push(value, Op::Sigmoid(x))
    }

    /// Inverted dropout. Identity in eval mode or when `rate == 0`.
    pub fn dropout<R: Rng>(&mut self, x: NodeId, rate: f64, mode: &mut Mode<'_, R>) -> NodeId {
        let rng = match mode {
            Mode::Train(rng) if rate > 0.0 => rng,
            _ => return x,
        };
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.nodes[x.0].value.len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let value = self.nodes[x.0].value.iter().zip(&mask).map(|(v, m)| v * m).collect();
        self.push(value, Op::Dropout { input: x, mask })
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericsError> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.len() != vb.len() {
            return Err(NumericsError::Shape(format!("add of lengths {} and {}", va.len(), vb.len())));
        }
        let value = va.iter().zip(vb).map(|(x, y)| x + y).collect();
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.nodes[x.0].value.iter().sum();
        self.push(vec![s], Op::Sum(x))
    }

    /// FM second-order interaction over field embeddings, via the
    /// `0.5 * sum_f [(sum_i e_if)^2 - sum_i e_if^2]` identity.
    pub fn fm_pairwise(&mut self, fields: Vec<NodeId>) -> Result<NodeId, NumericsError> {
        let value = {
            let views: Vec<&[f64]> = fields.iter().map(|f| self.nodes[f.0].value.as_slice()).collect();
            fm_second_order(&views)?
        };
        Ok(self.push(vec![value], Op::FmPairwise(fields)))
    }

    /// Truncated window mean around `center`; see [`window_mean`].
    pub fn window_mean(&mut self, x: NodeId, center: usize, half_width: usize) -> Result<NodeId, NumericsError> {
        let v = &self.nodes[x.0].value;
        if center >= v.len() {
            return Err(NumericsError::Shape(format!("window center {center} for length {}", v.len())));
        }
        let (lo, hi) = window_bounds(v.len(), center, half_width);
        let m = v[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64;
        Ok(self.push(vec![m], Op::WindowMean { input: x, lo, hi }))
    }

    pub fn index(&mut self, x: NodeId, index: usize) -> Result<NodeId, NumericsError> {
        let v = &self.nodes[x.0].value;
        let value = *v
            .get(index)
            .ok_or_else(|| NumericsError::Shape(format!("index {index} for length {}", v.len())))?;
        Ok(self.push(vec![value], Op::Index { input: x, index }))
    }

    /// `sum_i c_i * x_i` over scalar nodes.
    pub fn linear(&mut self, terms: Vec<(NodeId, f64)>) -> Result<NodeId, NumericsError> {
        let mut s = 0.0;
        for (n, c) in &terms {
            let v = &self.nodes[n.0].value;
            if v.len() != 1 {
                return Err(NumericsError::Shape("linear combination of non-scalar".into()));
            }
            s += c * v[0];
        }
        Ok(self.push(vec![s], Op::Linear(terms)))
    }

    /// BCE of a scalar probability node against `label`.
    pub fn bce(&mut self, p: NodeId, label: f64) -> Result<NodeId, NumericsError> {
        let v = &self.nodes[p.0].value;
        if v.len() != 1 {
            return Err(NumericsError::Shape("bce of non-scalar".into()));
        }
        let value = bce(v[0], label);
        Ok(self.push(vec![value], Op::Bce { input: p, label }))
    }

    /// Propagates `seed * d(loss)/d(param)` into the gradients of every
    /// participating parameter, then clears the tape.
    pub fn backward(&mut self, loss: NodeId, seed: f64, store: &mut ParamStore) -> Result<(), NumericsError> {
        if self.spent {
            return Err(NumericsError::BackwardTwice);
        }
        if self.nodes.is_empty() {
            return Err(NumericsError::EmptyTape);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NumericsError::Shape("backward from non-scalar node".into()));
        }
        let mut adj: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        adj[loss.0] = vec![seed];

        for i in (0..=loss.0).rev() {
            if adj[i].is_empty() {
                continue;
            }
            let g = std::mem::take(&mut adj[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => {
                    let t = store.get_mut(*pid);
                    t.grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Lookup { param, row } => {
                    let t = store.get_mut(*param);
                    let w = t.row_width();
                    t.grad[row * w..(row + 1) * w].iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::Affine { input, weight, bias } => {
                    let x = &self.nodes[input.0].value;
                    let in_dim = x.len();
                    {
                        let wt = store.get_mut(*weight);
                        for (o, go) in g.iter().enumerate() {
                            if *go == 0.0 {
                                continue;
                            }
                            let row = &mut wt.grad[o * in_dim..(o + 1) * in_dim];
                            row.iter_mut().zip(x).for_each(|(a, xi)| *a += go * xi);
                        }
                    }
                    {
                        let bt = store.get_mut(*bias);
                        bt.grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                    }
                    let wt = store.get(*weight);
                    let dx = accumulate(&mut adj[input.0], in_dim);
                    for (o, go) in g.iter().enumerate() {
                        if *go == 0.0 {
                            continue;
                        }
                        let row = &wt.values[o * in_dim..(o + 1) * in_dim];
                        dx.iter_mut().zip(row).for_each(|(a, w)| *a += go * w);
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let n = self.nodes[p.0].value.len();
                        let dx = accumulate(&mut adj[p.0], n);
                        dx.iter_mut().zip(&g[offset..offset + n]).for_each(|(a, b)| *a += b);
                        offset += n;
                    }
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.0].value;
                    let dx = accumulate(&mut adj[x.0], xv.len());
                    for ((a, gi), xi) in dx.iter_mut().zip(&g).zip(xv) {
                        if *xi > 0.0 {
                            *a += gi;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    let dx = accumulate(&mut adj[x.0], y.len());
                    for ((a, gi), yi) in dx.iter_mut().zip(&g).zip(y) {
                        *a += gi * yi * (1.0 - yi);
                    }
                }
                Op::Dropout { input, mask } => {
                    let dx = accumulate(&mut adj[input.0], mask.len());
                    for ((a, gi), m) in dx.iter_mut().zip(&g).zip(mask) {
                        *a += gi * m;
                    }
                }
                Op::Add(a, b) => {
                    let n = g.len();
                    for target in [a, b] {
                        let dx = accumulate(&mut adj[target.0], n);
                        dx.iter_mut().zip(&g).for_each(|(s, gi)| *s += gi);
                    }
                }
                Op::Sum(x) => {
                    let n = self.nodes[x.0].value.len();
                    let dx = accumulate(&mut adj[x.0], n);
                    dx.iter_mut().for_each(|s| *s += g[0]);
                }
                Op::FmPairwise(fields) => {
                    let d = self.nodes[fields[0].0].value.len();
                    let mut sums = vec![0.0; d];
                    for f in fields {
                        sums.iter_mut().zip(&self.nodes[f.0].value).for_each(|(s, e)| *s += e);
                    }
                    for f in fields {
                        let e = &self.nodes[f.0].value;
                        let dx = accumulate(&mut adj[f.0], d);
                        for k in 0..d {
                            dx[k] += g[0] * (sums[k] - e[k]);
                        }
                    }
                }
                Op::WindowMean { input, lo, hi } => {
                    let n = self.nodes[input.0].value.len();
                    let share = g[0] / (hi - lo + 1) as f64;
                    let dx = accumulate(&mut adj[input.0], n);
                    dx[*lo..=*hi].iter_mut().for_each(|s| *s += share);
                }
                Op::Index { input, index } => {
                    let n = self.nodes[input.0].value.len();
                    let dx = accumulate(&mut adj[input.0], n);
                    dx[*index] += g[0];
                }
                Op::Linear(terms) => {
                    for (n, c) in terms {
                        let dx = accumulate(&mut adj[n.0], 1);
                        dx[0] += c * g[0];
                    }
                }
                Op::Bce { input, label } => {
                    // Straight-through at the clamp: saturated predictions keep
                    // a nonzero gradient towards the label.
                    let p = self.nodes[input.0].value[0].clamp(BCE_EPS, 1.0 - BCE_EPS);
                    let d = -label / p + (1.0 - label) / (1.0 - p);
                    let dx = accumulate(&mut adj[input.0], 1);
                    dx[0] += g[0] * d;
                }
            }
        }
        self.nodes.clear();
        self.spent = true;
        Ok(())
    }
}

fn accumulate(slot: &mut Vec<f64>, len: usize) -> &mut Vec<f64> {
    if slot.is_empty() {
        slot.resize(len, 0.0);
    }
    slot
}
