//! Matrix-level reverse-mode differentiation.
//!
//! A [`Tape`] records one forward pass as a list of nodes in creation order,
//! which is a topological order. [`Tape::backward`] walks that list once in
//! reverse, so every node is visited exactly once.

use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::{Gradients, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoreId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu,
    Tanh,
}

const LEAKY_SLOPE: f64 = 0.01;
const LAYER_NORM_EPS: f64 = 1e-5;

enum Op<T> {
    Input,
    Param,
    /// `x * w + b` with `b` broadcast over rows.
    Affine {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Activate {
        x: NodeId,
        kind: Activation,
    },
    /// Per-row normalization over columns followed by a learned scale and shift.
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        shift: NodeId,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
    },
    /// Column-wise max over rows; `argmax[c]` is the winning row (lowest on ties).
    MaxPoolRows {
        x: NodeId,
        argmax: Vec<usize>,
    },
    ConcatCols {
        x: NodeId,
        y: NodeId,
    },
    Reshape {
        x: NodeId,
    },
}

enum Value<'a, T> {
    Owned(Matrix<T>),
    Borrowed(&'a Matrix<T>),
}

struct Node<'a, T> {
    op: Op<T>,
    value: Value<'a, T>,
    needs_grad: bool,
}

struct Binding<'a, T> {
    params: &'a ParamStore<T>,
    trainable: bool,
    nodes: Vec<Option<NodeId>>,
}

pub struct Tape<'a, T> {
    nodes: Vec<Node<'a, T>>,
    stores: Vec<Binding<'a, T>>,
}

/// Output of [`Tape::backward`].
pub struct Backward<T> {
    node_grads: Vec<Option<Matrix<T>>>,
    store_grads: Vec<Gradients<T>>,
}

impl<T: Scalar> Backward<T> {
    /// Gradient arrays for a bound store; all zero if the store was bound as frozen.
    pub fn store(&self, id: StoreId) -> &Gradients<T> {
        &self.store_grads[id.0]
    }

    pub fn into_store(mut self, id: StoreId) -> Gradients<T> {
        self.store_grads.swap_remove(id.0)
    }

    /// Gradient reaching a leaf (input or parameter) node, if any did.
    pub fn node(&self, id: NodeId) -> Option<&Matrix<T>> {
        self.node_grads[id.0].as_ref()
    }
}

impl<T: Scalar> Default for Tape<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Scalar> Tape<'a, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            stores: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Makes a parameter store available to the pass. Gradients are only
    /// accumulated for stores bound as trainable.
    pub fn bind(&mut self, params: &'a ParamStore<T>, trainable: bool) -> StoreId {
        self.stores.push(Binding {
            params,
            trainable,
            nodes: vec![None; params.len()],
        });
        StoreId(self.stores.len() - 1)
    }

    fn push(&mut self, op: Op<T>, value: Value<'a, T>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Matrix<T> {
        match &self.nodes[id.0].value {
            Value::Owned(m) => m,
            Value::Borrowed(m) => m,
        }
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A constant input.
    pub fn input(&mut self, value: Matrix<T>) -> NodeId {
        self.push(Op::Input, Value::Owned(value), false)
    }

    /// An input whose gradient should be reported by [`Backward::node`].
    pub fn input_with_grad(&mut self, value: Matrix<T>) -> NodeId {
        self.push(Op::Input, Value::Owned(value), true)
    }

    /// The node for parameter `index` of a bound store (recorded once per pass).
    pub fn param(&mut self, store: StoreId, index: usize) -> NodeId {
        if let Some(id) = self.stores[store.0].nodes[index] {
            return id;
        }
        let binding = &self.stores[store.0];
        let value = &binding.params.get(index).value;
        let trainable = binding.trainable;
        let id = self.push(Op::Param, Value::Borrowed(value), trainable);
        self.stores[store.0].nodes[index] = Some(id);
        id
    }

    pub fn affine(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.rows() || bv.shape() != (1, wv.cols()) {
            return Err(Error::Shape(format!(
                "affine: input {:?}, weight {:?}, bias {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let out = xv.affine(wv, bv);
        let needs = self.needs(x) || self.needs(w) || self.needs(b);
        Ok(self.push(Op::Affine { x, w, b }, Value::Owned(out), needs))
    }

    pub fn activate(&mut self, x: NodeId, kind: Activation) -> NodeId {
        let mut out = self.value(x).clone();
        let slope = T::lit(LEAKY_SLOPE);
        for v in out.data_mut() {
            *v = match kind {
                Activation::Relu => v.max(T::zero()),
                Activation::LeakyRelu => {
                    if *v > T::zero() {
                        *v
                    } else {
                        *v * slope
                    }
                }
                Activation::Tanh => v.tanh(),
            };
        }
        let needs = self.needs(x);
        self.push(Op::Activate { x, kind }, Value::Owned(out), needs)
    }

    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, shift: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        if self.value(gain).shape() != (1, cols) || self.value(shift).shape() != (1, cols) {
            return Err(Error::Shape(format!(
                "layer_norm: width {cols} does not match gain/shift"
            )));
        }
        let (g, s) = (self.value(gain).data(), self.value(shift).data());
        let c = T::from_count(cols);
        let eps = T::lit(LAYER_NORM_EPS);
        let mut xhat = Matrix::zeros(rows, cols);
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = xv.row(r);
            let mean = row.iter().copied().sum::<T>() / c;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / c;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            let xh = xhat.row_mut(r);
            for k in 0..cols {
                xh[k] = (row[k] - mean) * inv;
            }
            let o = out.row_mut(r);
            for k in 0..cols {
                o[k] = xh[k] * g[k] + s[k];
            }
        }
        let needs = self.needs(x) || self.needs(gain) || self.needs(shift);
        Ok(self.push(
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                inv_std,
            },
            Value::Owned(out),
            needs,
        ))
    }

    pub fn max_pool_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let (rows, cols) = xv.shape();
        let mut out = xv.row(0).to_vec();
        let mut argmax = vec![0usize; cols];
        for r in 1..rows {
            for (c, &v) in xv.row(r).iter().enumerate() {
                if v > out[c] {
                    out[c] = v;
                    argmax[c] = r;
                }
            }
        }
        let needs = self.needs(x);
        self.push(
            Op::MaxPoolRows { x, argmax },
            Value::Owned(Matrix::row_vector(out)),
            needs,
        )
    }

    pub fn concat_cols(&mut self, x: NodeId, y: NodeId) -> Result<NodeId> {
        let (xv, yv) = (self.value(x), self.value(y));
        if xv.rows() != yv.rows() {
            return Err(Error::Shape(format!(
                "concat: {:?} vs {:?}",
                xv.shape(),
                yv.shape()
            )));
        }
        let cols = xv.cols() + yv.cols();
        let mut data = Vec::with_capacity(xv.rows() * cols);
        for r in 0..xv.rows() {
            data.extend_from_slice(xv.row(r));
            data.extend_from_slice(yv.row(r));
        }
        let out = Matrix::from_vec(xv.rows(), cols, data)?;
        let needs = self.needs(x) || self.needs(y);
        Ok(self.push(Op::ConcatCols { x, y }, Value::Owned(out), needs))
    }

    pub fn reshape(&mut self, x: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let out = self.value(x).reshaped(rows, cols)?;
        let needs = self.needs(x);
        Ok(self.push(Op::Reshape { x }, Value::Owned(out), needs))
    }

    /// Propagates the seed gradients (`d loss / d node`) back through the pass.
    pub fn backward(&self, seeds: &[(NodeId, &Matrix<T>)]) -> Result<Backward<T>> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        for &(id, seed) in seeds {
            if id.0 >= self.nodes.len() {
                return Err(Error::InvalidArgument(format!(
                    "seed node {} not on tape",
                    id.0
                )));
            }
            if seed.shape() != self.value(id).shape() {
                return Err(Error::Shape(format!(
                    "seed shape {:?} does not match node shape {:?}",
                    seed.shape(),
                    self.value(id).shape()
                )));
            }
            accumulate(&mut grads[id.0], seed);
        }

        for idx in (0..self.nodes.len()).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            // Leaf gradients stay in place so they can be reported.
            if matches!(node.op, Op::Input | Op::Param) {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            match &node.op {
                Op::Input | Op::Param => unreachable!(),
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    if self.needs(*x) {
                        accumulate_owned(&mut grads[x.0], dy.matmul_transposed(wv));
                    }
                    if self.needs(*w) {
                        let slot =
                            grads[w.0].get_or_insert_with(|| Matrix::zeros(wv.rows(), wv.cols()));
                        xv.accumulate_transposed_product(&dy, slot);
                    }
                    if self.needs(*b) {
                        let mut db = Matrix::zeros(1, dy.cols());
                        for r in 0..dy.rows() {
                            for (a, &g) in db.data_mut().iter_mut().zip(dy.row(r)) {
                                *a = *a + g;
                            }
                        }
                        accumulate_owned(&mut grads[b.0], db);
                    }
                }
                Op::Activate { x, kind } => {
                    let (xv, yv) = (self.value(*x), self.value(NodeId(idx)));
                    let mut dx = dy;
                    let slope = T::lit(LEAKY_SLOPE);
                    for ((g, &xi), &yi) in dx.data_mut().iter_mut().zip(xv.data()).zip(yv.data()) {
                        *g = match kind {
                            Activation::Relu => {
                                if xi > T::zero() {
                                    *g
                                } else {
                                    T::zero()
                                }
                            }
                            Activation::LeakyRelu => {
                                if xi > T::zero() {
                                    *g
                                } else {
                                    *g * slope
                                }
                            }
                            Activation::Tanh => *g * (T::one() - yi * yi),
                        };
                    }
                    accumulate_owned(&mut grads[x.0], dx);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    shift,
                    xhat,
                    inv_std,
                } => {
                    let (rows, cols) = xhat.shape();
                    let g = self.value(*gain).data();
                    let c = T::from_count(cols);
                    if self.needs(*gain) || self.needs(*shift) {
                        let mut dg = Matrix::zeros(1, cols);
                        let mut ds = Matrix::zeros(1, cols);
                        for r in 0..rows {
                            for k in 0..cols {
                                let d = dy.row(r)[k];
                                dg.data_mut()[k] = dg.data()[k] + d * xhat.row(r)[k];
                                ds.data_mut()[k] = ds.data()[k] + d;
                            }
                        }
                        if self.needs(*gain) {
                            accumulate_owned(&mut grads[gain.0], dg);
                        }
                        if self.needs(*shift) {
                            accumulate_owned(&mut grads[shift.0], ds);
                        }
                    }
                    if self.needs(*x) {
                        let mut dx = Matrix::zeros(rows, cols);
                        for (r, &inv) in inv_std.iter().enumerate() {
                            let (dyr, xh) = (dy.row(r), xhat.row(r));
                            let dxhat: Vec<T> = (0..cols).map(|k| dyr[k] * g[k]).collect();
                            let sum_d = dxhat.iter().copied().sum::<T>();
                            let sum_dx = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>();
                            let scale = inv / c;
                            let out = dx.row_mut(r);
                            for k in 0..cols {
                                out[k] = scale * (c * dxhat[k] - sum_d - xh[k] * sum_dx);
                            }
                        }
                        accumulate_owned(&mut grads[x.0], dx);
                    }
                }
                Op::MaxPoolRows { x, argmax } => {
                    let (rows, cols) = self.value(*x).shape();
                    let mut dx = Matrix::zeros(rows, cols);
                    for (c, &r) in argmax.iter().enumerate() {
                        dx.row_mut(r)[c] = dy.data()[c];
                    }
                    accumulate_owned(&mut grads[x.0], dx);
                }
                Op::ConcatCols { x, y } => {
                    let xc = self.value(*x).cols();
                    let yc = self.value(*y).cols();
                    if self.needs(*x) {
                        let data = (0..dy.rows())
                            .flat_map(|r| dy.row(r)[..xc].iter().copied())
                            .collect();
                        accumulate_owned(&mut grads[x.0], Matrix::from_vec(dy.rows(), xc, data)?);
                    }
                    if self.needs(*y) {
                        let data = (0..dy.rows())
                            .flat_map(|r| dy.row(r)[xc..].iter().copied())
                            .collect();
                        accumulate_owned(&mut grads[y.0], Matrix::from_vec(dy.rows(), yc, data)?);
                    }
                }
                Op::Reshape { x } => {
                    let (rows, cols) = self.value(*x).shape();
                    accumulate_owned(&mut grads[x.0], dy.reshaped(rows, cols)?);
                }
            }
        }

        let mut store_grads: Vec<Gradients<T>> = self
            .stores
            .iter()
            .map(|b| b.params.zero_gradients())
            .collect();
        for (s, binding) in self.stores.iter().enumerate() {
            if !binding.trainable {
                continue;
            }
            for (index, node) in binding.nodes.iter().enumerate() {
                if let Some(node) = node {
                    if let Some(g) = &grads[node.0] {
                        store_grads[s].arrays[index].copy_from_slice(g.data());
                    }
                }
            }
        }
        Ok(Backward {
            node_grads: grads,
            store_grads,
        })
    }
}

fn accumulate<T: Scalar>(slot: &mut Option<Matrix<T>>, g: &Matrix<T>) {
    match slot {
        Some(acc) => acc.add_assign(g),
        None => *slot = Some(g.clone()),
    }
}

fn accumulate_owned<T: Scalar>(slot: &mut Option<Matrix<T>>, g: Matrix<T>) {
    match slot {
        Some(acc) => acc.add_assign(&g),
        None => *slot = Some(g),
    }
}
