//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive applied during a forward pass together
//! with the produced value. [`Tape::backward`] replays the record in exact
//! reverse order, accumulating adjoints, and returns the gradients of all
//! parameters that were bound to the tape. One tape per forward pass; tapes
//! are independent, so a batch can run one tape per item on separate threads
//! and merge the resulting [`Gradients`] afterwards.

use std::collections::BTreeMap;

use super::matrix::{Axis, DenseMatrix};
use super::params::{ParamId, ParamSet};
use super::TensorError;

/// Probabilities are clamped into `[LOSS_CLAMP, 1 - LOSS_CLAMP]` before logs.
pub const LOSS_CLAMP: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Expr {
    /// Constant input; no gradient is tracked past it.
    Leaf,
    /// Trainable parameter leaf.
    Param(ParamId),
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    LeakyRelu(NodeId, f64),
    SoftmaxRows(NodeId),
    /// ln(clamp(x, LOSS_CLAMP, 1 - LOSS_CLAMP)), elementwise.
    LogClamped(NodeId),
    Transpose(NodeId),
    Concat(NodeId, NodeId, Axis),
    SliceCols(NodeId, usize),
    MeanRows(NodeId),
    GatherRows(NodeId, Vec<usize>),
    AddRowBroadcast(NodeId, NodeId),
}

/// Gradients produced by one backward pass, keyed by parameter.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_param: BTreeMap<ParamId, DenseMatrix>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&DenseMatrix> {
        self.by_param.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &DenseMatrix)> {
        self.by_param.iter().map(|(id, g)| (*id, g))
    }

    /// Adds `other`, matrix by matrix. Accumulation order is the caller's
    /// responsibility when bit-reproducibility matters.
    pub fn merge(&mut self, other: Gradients) {
        for (id, g) in other.by_param {
            match self.by_param.get_mut(&id) {
                Some(acc) => *acc = acc.add(&g).expect("gradient shapes agree"),
                None => {
                    self.by_param.insert(id, g);
                }
            }
        }
    }
}

/// Recorded forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    values: Vec<DenseMatrix>,
    exprs: Vec<Expr>,
    bound: BTreeMap<ParamId, NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, node: NodeId) -> &DenseMatrix {
        &self.values[node.0]
    }

    fn push(&mut self, value: DenseMatrix, expr: Expr) -> NodeId {
        value.debug_check_finite();
        self.values.push(value);
        self.exprs.push(expr);
        NodeId(self.values.len() - 1)
    }

    /// Records a constant input.
    pub fn input(&mut self, value: DenseMatrix) -> NodeId {
        self.push(value, Expr::Leaf)
    }

    /// Binds a parameter's current value to the tape. Binding the same
    /// parameter twice returns the same node.
    pub fn param(&mut self, set: &ParamSet, id: ParamId) -> NodeId {
        if let Some(&node) = self.bound.get(&id) {
            return node;
        }
        let node = self.push(set.value(id).clone(), Expr::Param(id));
        self.bound.insert(id, node);
        node
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.values[a.0].matmul(&self.values[b.0])?;
        Ok(self.push(v, Expr::Matmul(a, b)))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.values[a.0].add(&self.values[b.0])?;
        Ok(self.push(v, Expr::Add(a, b)))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let v = self.values[a.0].mul_elem(&self.values[b.0])?;
        Ok(self.push(v, Expr::Mul(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.values[a.0].scale(c);
        self.push(v, Expr::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let v = self.values[a.0].add_scalar(c);
        self.push(v, Expr::AddScalar(a))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].tanh_elem();
        self.push(v, Expr::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].sigmoid_elem();
        self.push(v, Expr::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: NodeId, slope: f64) -> NodeId {
        let v = self.values[a.0].leaky_relu_elem(slope);
        self.push(v, Expr::LeakyRelu(a, slope))
    }

    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].softmax_rows();
        self.push(v, Expr::SoftmaxRows(a))
    }

    pub fn log_clamped(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].map(|x| x.clamp(LOSS_CLAMP, 1.0 - LOSS_CLAMP).ln());
        self.push(v, Expr::LogClamped(a))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].transpose();
        self.push(v, Expr::Transpose(a))
    }

    pub fn concat(&mut self, a: NodeId, b: NodeId, axis: Axis) -> Result<NodeId, TensorError> {
        let v = self.values[a.0].concat(&self.values[b.0], axis)?;
        Ok(self.push(v, Expr::Concat(a, b, axis)))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId, TensorError> {
        let v = self.values[a.0].slice_cols(start, len)?;
        Ok(self.push(v, Expr::SliceCols(a, start)))
    }

    pub fn mean_rows(&mut self, a: NodeId) -> NodeId {
        let v = self.values[a.0].mean_rows();
        self.push(v, Expr::MeanRows(a))
    }

    pub fn gather_rows(&mut self, a: NodeId, indices: &[usize]) -> Result<NodeId, TensorError> {
        let v = self.values[a.0].gather_rows(indices)?;
        Ok(self.push(v, Expr::GatherRows(a, indices.to_vec())))
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, row: NodeId) -> Result<NodeId, TensorError> {
        let v = self.values[a.0].add_row_broadcast(&self.values[row.0])?;
        Ok(self.push(v, Expr::AddRowBroadcast(a, row)))
    }

    /// Reverse pass from a scalar (1x1) loss node. Visits recorded ops in
    /// exact reverse order and returns gradients for every bound parameter;
    /// parameters the loss does not depend on get zero gradients.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, TensorError> {
        let loss_val = &self.values[loss.0];
        if loss_val.shape() != (1, 1) {
            return Err(TensorError::NonScalarLoss {
                shape: loss_val.shape(),
            });
        }

        let mut adj: Vec<Option<DenseMatrix>> = vec![None; self.values.len()];
        adj[loss.0] = Some(DenseMatrix::from_vec(1, 1, vec![1.0]));

        for idx in (0..self.exprs.len()).rev() {
            let Some(out_grad) = adj[idx].take() else {
                continue;
            };
            match &self.exprs[idx] {
                Expr::Leaf | Expr::Param(_) => {
                    adj[idx] = Some(out_grad);
                }
                Expr::Matmul(a, b) => {
                    let da = out_grad.matmul(&self.values[b.0].transpose())?;
                    let db = self.values[a.0].transpose().matmul(&out_grad)?;
                    accumulate(&mut adj, a.0, da)?;
                    accumulate(&mut adj, b.0, db)?;
                }
                Expr::Add(a, b) => {
                    accumulate(&mut adj, a.0, out_grad.clone())?;
                    accumulate(&mut adj, b.0, out_grad)?;
                }
                Expr::Mul(a, b) => {
                    let da = out_grad.mul_elem(&self.values[b.0])?;
                    let db = out_grad.mul_elem(&self.values[a.0])?;
                    accumulate(&mut adj, a.0, da)?;
                    accumulate(&mut adj, b.0, db)?;
                }
                Expr::Scale(a, c) => {
                    accumulate(&mut adj, a.0, out_grad.scale(*c))?;
                }
                Expr::AddScalar(a) => {
                    accumulate(&mut adj, a.0, out_grad)?;
                }
                Expr::Tanh(a) => {
                    let y = &self.values[idx];
                    let da = out_grad.mul_elem(&y.map(|t| 1.0 - t * t))?;
                    accumulate(&mut adj, a.0, da)?;
                }
                Expr::Sigmoid(a) => {
                    let y = &self.values[idx];
                    let da = out_grad.mul_elem(&y.map(|s| s * (1.0 - s)))?;
                    accumulate(&mut adj, a.0, da)?;
                }
                Expr::LeakyRelu(a, slope) => {
                    let x = &self.values[a.0];
                    let da = out_grad.mul_elem(&x.map(|v| if v >= 0.0 { 1.0 } else { *slope }))?;
                    accumulate(&mut adj, a.0, da)?;
                }
                Expr::SoftmaxRows(a) => {
                    let y = &self.values[idx];
                    let mut da = DenseMatrix::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f64 = (0..y.cols())
                            .map(|c| out_grad.get(r, c) * y.get(r, c))
                            .sum();
                        for c in 0..y.cols() {
                            da.set(r, c, y.get(r, c) * (out_grad.get(r, c) - dot));
                        }
                    }
                    accumulate(&mut adj, a.0, da)?;
                }
                Expr::LogClamped(a) => {
                    let x = &self.values[a.0];
                    let da = out_grad.mul_elem(&x.map(|v| {
                        if v > LOSS_CLAMP && v < 1.0 - LOSS_CLAMP {
                            1.0 / v
                        } else {
                            0.0
                        }
                    }))?;
                    accumulate(&mut adj, a.0, da)?;
                }
                Expr::Transpose(a) => {
                    accumulate(&mut adj, a.0, out_grad.transpose())?;
                }
                Expr::Concat(a, b, axis) => {
                    let (ar, ac) = self.values[a.0].shape();
                    let (da, db) = match axis {
                        Axis::Cols => {
                            let da = out_grad.slice_cols(0, ac)?;
                            let db = out_grad.slice_cols(ac, out_grad.cols() - ac)?;
                            (da, db)
                        }
                        Axis::Rows => {
                            let mut da = DenseMatrix::zeros(ar, ac);
                            let mut db =
                                DenseMatrix::zeros(out_grad.rows() - ar, ac);
                            for r in 0..out_grad.rows() {
                                for c in 0..ac {
                                    if r < ar {
                                        da.set(r, c, out_grad.get(r, c));
                                    } else {
                                        db.set(r - ar, c, out_grad.get(r, c));
                                    }
                                }
                            }
                            (da, db)
                        }
                    };
                    accumulate(&mut adj, a.0, da)?;
                    accumulate(&mut adj, b.0, db)?;
                }
                Expr::SliceCols(a, start) => {
                    let (ar, ac) = self.values[a.0].shape();
                    let mut da = DenseMatrix::zeros(ar, ac);
                    for r in 0..out_grad.rows() {
                        for c in 0..out_grad.cols() {
                            da.set(r, start + c, out_grad.get(r, c));
                        }
                    }
                    accumulate(&mut adj, a.0, da)?;
                }
                Expr::MeanRows(a) => {
                    let (ar, ac) = self.values[a.0].shape();
                    let inv = 1.0 / ar as f64;
                    let mut da = DenseMatrix::zeros(ar, ac);
                    for r in 0..ar {
                        for c in 0..ac {
                            da.set(r, c, out_grad.get(0, c) * inv);
                        }
                    }
                    accumulate(&mut adj, a.0, da)?;
                }
                Expr::GatherRows(a, indices) => {
                    let (ar, ac) = self.values[a.0].shape();
                    let mut da = DenseMatrix::zeros(ar, ac);
                    for (i, &idx) in indices.iter().enumerate() {
                        for c in 0..ac {
                            da.set(idx, c, da.get(idx, c) + out_grad.get(i, c));
                        }
                    }
                    accumulate(&mut adj, a.0, da)?;
                }
                Expr::AddRowBroadcast(a, row) => {
                    let mut drow = DenseMatrix::zeros(1, out_grad.cols());
                    for r in 0..out_grad.rows() {
                        for c in 0..out_grad.cols() {
                            drow.set(0, c, drow.get(0, c) + out_grad.get(r, c));
                        }
                    }
                    accumulate(&mut adj, a.0, out_grad)?;
                    accumulate(&mut adj, row.0, drow)?;
                }
            }
        }

        let mut grads = Gradients::default();
        for (idx, expr) in self.exprs.iter().enumerate() {
            if let Expr::Param(id) = expr {
                let g = adj[idx].take().unwrap_or_else(|| {
                    DenseMatrix::zeros(self.values[idx].rows(), self.values[idx].cols())
                });
                grads.by_param.insert(*id, g);
            }
        }
        Ok(grads)
    }
}

fn accumulate(
    adj: &mut [Option<DenseMatrix>],
    idx: usize,
    grad: DenseMatrix,
) -> Result<(), TensorError> {
    match &mut adj[idx] {
        Some(existing) => {
            *existing = existing.add(&grad)?;
        }
        slot @ None => {
            *slot = Some(grad);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::params::ParamSet;

    #[test]
    fn backward_matmul_sum_gives_outer_structure() {
        // loss = sum(W x) with fixed x, so dW = 1 * x^T per output row.
        let mut set = ParamSet::new();
        let w = set.register("w", DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let mut tape = Tape::new();
        let wn = tape.param(&set, w);
        let x = tape.input(DenseMatrix::from_vec(2, 1, vec![5.0, 7.0]));
        let y = tape.matmul(wn, x).unwrap();
        let ones = tape.input(DenseMatrix::from_vec(1, 2, vec![1.0, 1.0]));
        let loss = tape.matmul(ones, y).unwrap();
        let grads = tape.backward(loss).unwrap();
        let gw = grads.get(w).unwrap();
        assert_eq!(gw.values(), &[5.0, 7.0, 5.0, 7.0]);
    }

    #[test]
    fn untouched_parameter_has_zero_gradient() {
        let mut set = ParamSet::new();
        let w = set.register("w", DenseMatrix::from_vec(1, 1, vec![3.0]));
        let u = set.register("u", DenseMatrix::from_vec(1, 1, vec![4.0]));
        let mut tape = Tape::new();
        let wn = tape.param(&set, w);
        let _un = tape.param(&set, u);
        let loss = tape.mul(wn, wn).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(u).unwrap().values(), &[0.0]);
        assert_eq!(grads.get(w).unwrap().values(), &[6.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.input(DenseMatrix::zeros(2, 2));
        assert!(matches!(
            tape.backward(x),
            Err(TensorError::NonScalarLoss { .. })
        ));
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let mut set = ParamSet::new();
            let w = set.register("w", DenseMatrix::from_vec(2, 2, vec![0.3, -0.7, 1.1, 0.05]));
            let mut tape = Tape::new();
            let wn = tape.param(&set, w);
            let t = tape.tanh(wn);
            let s = tape.softmax_rows(t);
            let x = tape.input(DenseMatrix::from_vec(2, 1, vec![0.2, -0.4]));
            let y = tape.matmul(s, x).unwrap();
            let ones = tape.input(DenseMatrix::from_vec(1, 2, vec![1.0, 1.0]));
            let loss = tape.matmul(ones, y).unwrap();
            let grads = tape.backward(loss).unwrap();
            grads.get(w).unwrap().values().to_vec()
        };
        assert_eq!(run(), run());
    }
}
