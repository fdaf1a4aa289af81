use std::borrow::Cow;
use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::{gemm_nn, gemm_nt, gemm_tn, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Tanh,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    Linear { x: usize, w: usize },
    Add(usize, usize),
    AddRow { m: usize, row: usize },
    Sub(usize, usize),
    Mul(usize, usize),
    Affine { a: usize, scale: T },
    Sigmoid(usize),
    Tanh(usize),
    Log { a: usize, floor: T },
    Softmax(usize),
    LogSoftmax(usize),
    Concat { inputs: Vec<usize>, axis: usize },
    SliceRows { a: usize, start: usize },
    Reshape(usize),
    Maxout { a: usize, winners: Vec<usize> },
    Sum(usize),
    Pick { a: usize, index: usize },
    GatherRows { table: usize, ids: Vec<usize>, frozen_row: Option<usize> },
    Dropout { a: usize, mask: Vec<T> },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::Linear { x, w } => vec![*x, *w],
            Op::AddRow { m, row } => vec![*m, *row],
            Op::Affine { a, .. }
            | Op::Log { a, .. }
            | Op::SliceRows { a, .. }
            | Op::Maxout { a, .. }
            | Op::Pick { a, .. }
            | Op::Dropout { a, .. } => vec![*a],
            Op::Sigmoid(a) | Op::Tanh(a) | Op::Softmax(a) | Op::LogSoftmax(a) | Op::Reshape(a) | Op::Sum(a) => {
                vec![*a]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::GatherRows { table, .. } => vec![*table],
        }
    }
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    needs_grad: bool,
}

/// Records a computation for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the record is always a valid
/// topological order. Parameters are borrowed from the [`ParamStore`] the tape
/// was created with; each parameter maps to a single leaf no matter how many
/// times it is requested, so gradients from every use accumulate.
pub struct Tape<'a, T: Real = f32> {
    params: Option<&'a ParamStore<T>>,
    values: Vec<Cow<'a, Tensor<T>>>,
    nodes: Vec<Node<T>>,
    param_vars: HashMap<ParamId, Var>,
}

impl<'a, T: Real> Default for Tape<'a, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a, T: Real> Tape<'a, T> {
    pub fn new() -> Self {
        Self {
            params: None,
            values: Vec::new(),
            nodes: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn with_params(params: &'a ParamStore<T>) -> Self {
        Self {
            params: Some(params),
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Input handles of the node that produced `v`.
    pub fn inputs_of(&self, v: Var) -> Vec<Var> {
        self.nodes[v.0].op.inputs().into_iter().map(Var).collect()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>) -> Var {
        let needs_grad = match &op {
            Op::Leaf => false,
            other => other.inputs().iter().any(|&i| self.nodes[i].needs_grad),
        };
        self.push_with(value, op, needs_grad)
    }

    fn push_with(&mut self, value: Cow<'a, Tensor<T>>, op: Op<T>, needs_grad: bool) -> Var {
        self.values.push(value);
        self.nodes.push(Node { op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn owned(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.push(Cow::Owned(value), op)
    }

    /// A leaf that receives a gradient.
    pub fn var(&mut self, value: Tensor<T>) -> Var {
        self.push_with(Cow::Owned(value), Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push_with(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn constant_ref(&mut self, value: &'a Tensor<T>) -> Var {
        self.push_with(Cow::Borrowed(value), Op::Leaf, false)
    }

    /// Leaf for a stored parameter. Frozen parameters become constants.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let store = self.params.expect("tape was created without a parameter store");
        let trainable = store.is_trainable(id);
        let v = self.push_with(Cow::Borrowed(store.get(id)), Op::Leaf, trainable);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dimension {
                op: "matmul",
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![T::zero(); m * n];
        gemm_nn(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.owned(Tensor::new(&[m, n], out)?, Op::MatMul(a.0, b.0)))
    }

    /// `x · wᵀ` for `x: [n, in]` and a weight stored as `w: [out, in]`.
    pub fn linear(&mut self, x: Var, w: Var) -> Result<Var> {
        let (n, k) = self.value(x).dims2();
        let sw = self.shape(w);
        if sw.len() != 2 || sw[1] != k {
            return Err(Error::Dimension {
                op: "linear",
                lhs: self.shape(x).to_vec(),
                rhs: sw.to_vec(),
            });
        }
        let out_dim = sw[0];
        let mut out = vec![T::zero(); n * out_dim];
        gemm_nt(self.value(x).data(), self.value(w).data(), &mut out, n, k, out_dim);
        Ok(self.owned(Tensor::new(&[n, out_dim], out)?, Op::Linear { x: x.0, w: w.0 }))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension {
                op,
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Tensor<T> {
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(va.shape(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.owned(out, Op::Add(a.0, b.0)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.owned(out, Op::Sub(a.0, b.0)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.owned(out, Op::Mul(a.0, b.0)))
    }

    /// Adds a row vector to every row of a matrix.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        let (rows, cols) = self.value(m).dims2();
        let (rr, rc) = self.value(row).dims2();
        if rr != 1 || rc != cols {
            return Err(Error::Dimension {
                op: "add_row",
                lhs: self.shape(m).to_vec(),
                rhs: self.shape(row).to_vec(),
            });
        }
        let r = self.value(row).data();
        let mut data = self.value(m).data().to_vec();
        for i in 0..rows {
            for (x, &y) in data[i * cols..(i + 1) * cols].iter_mut().zip(r) {
                *x = *x + y;
            }
        }
        let out = Tensor::new(self.shape(m), data)?;
        Ok(self.owned(out, Op::AddRow { m: m.0, row: row.0 }))
    }

    /// `scale · a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let out = self.value(a).map(|x| scale * x + shift);
        self.owned(out, Op::Affine { a: a.0, scale })
    }

    pub fn scale(&mut self, a: Var, scale: T) -> Var {
        self.affine(a, scale, T::zero())
    }

    /// `1 - a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        self.affine(a, -T::one(), T::one())
    }

    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        match kind {
            Activation::Sigmoid => self.sigmoid(a),
            Activation::Tanh => self.tanh(a),
        }
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| T::one() / (T::one() + (-x).exp()));
        self.owned(out, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.tanh());
        self.owned(out, Op::Tanh(a.0))
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor is active.
    pub fn log_floor(&mut self, a: Var, floor: T) -> Var {
        let out = self.value(a).map(|x| x.max(floor).ln());
        self.owned(out, Op::Log { a: a.0, floor })
    }

    /// Softmax over all elements, max-subtracted. Masked positions (`false`)
    /// come out exactly zero.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let x = self.value(a);
        if let Some(m) = mask {
            if m.len() != x.numel() {
                return Err(Error::Dimension {
                    op: "softmax mask",
                    lhs: x.shape().to_vec(),
                    rhs: vec![m.len()],
                });
            }
        }
        let keep = |i: usize| mask.is_none_or(|m| m[i]);
        let max = x
            .data()
            .iter()
            .enumerate()
            .filter(|&(i, _)| keep(i))
            .map(|(_, &v)| v)
            .fold(T::neg_infinity(), T::max);
        if !(0..x.numel()).any(keep) {
            return Err(Error::InvalidMask);
        }
        let mut data: Vec<T> = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| if keep(i) { (v - max).exp() } else { T::zero() })
            .collect();
        let total: T = data.iter().copied().sum();
        for v in &mut data {
            *v = *v / total;
        }
        let out = Tensor::new(x.shape(), data)?;
        Ok(self.owned(out, Op::Softmax(a.0)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let max = x.data().iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + x.data().iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let out = x.map(|v| v - lse);
        self.owned(out, Op::LogSoftmax(a.0))
    }

    /// Concatenates along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or(Error::Rank {
            op: "concat",
            expected: "at least one input",
            shape: vec![],
        })?;
        if inputs.len() == 1 {
            return Ok(*first);
        }
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::Rank {
                op: "concat",
                expected: "axis within rank",
                shape: base,
            });
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(Error::Dimension {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let mut shape = base.clone();
        shape[axis] = total;
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let inner = t.numel() / outer;
                data.extend_from_slice(&t.data()[o * inner..(o + 1) * inner]);
            }
        }
        let out = Tensor::new(&shape, data)?;
        Ok(self.owned(
            out,
            Op::Concat {
                inputs: inputs.iter().map(|v| v.0).collect(),
                axis,
            },
        ))
    }

    /// Rows `start..start+len` of a matrix (or elements of a vector).
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        let rows = t.shape()[0];
        if len == 0 || start + len > rows {
            return Err(Error::Index {
                what: "rows",
                index: start + len,
                size: rows,
            });
        }
        let inner = t.numel() / rows;
        let mut shape = t.shape().to_vec();
        shape[0] = len;
        let data = t.data()[start * inner..(start + len) * inner].to_vec();
        let out = Tensor::new(&shape, data)?;
        Ok(self.owned(out, Op::SliceRows { a: a.0, start }))
    }

    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        self.slice_rows(a, index, 1)
    }

    /// Splits along the first axis into consecutive pieces of the given sizes.
    pub fn split_rows(&mut self, a: Var, sizes: &[usize]) -> Result<Vec<Var>> {
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &len in sizes {
            out.push(self.slice_rows(a, start, len)?);
            start += len;
        }
        Ok(out)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.owned(out, Op::Reshape(a.0)))
    }

    /// Max over consecutive pairs of the last dimension, halving it. The
    /// first element of a pair wins ties.
    pub fn maxout_pairs(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let last = *t.shape().last().unwrap_or(&1);
        if last % 2 != 0 {
            return Err(Error::Dimension {
                op: "maxout_pairs",
                lhs: t.shape().to_vec(),
                rhs: vec![2],
            });
        }
        let d = t.data();
        let mut winners = Vec::with_capacity(d.len() / 2);
        let mut data = Vec::with_capacity(d.len() / 2);
        for pair in 0..d.len() / 2 {
            let (i, j) = (2 * pair, 2 * pair + 1);
            let w = if d[j] > d[i] { j } else { i };
            winners.push(w);
            data.push(d[w]);
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = last / 2;
        let out = Tensor::new(&shape, data)?;
        Ok(self.owned(out, Op::Maxout { a: a.0, winners }))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.owned(out, Op::Sum(a.0))
    }

    /// Sum of several same-shaped values.
    pub fn add_all(&mut self, items: &[Var]) -> Result<Var> {
        let (first, rest) = items.split_first().ok_or(Error::Rank {
            op: "add_all",
            expected: "at least one input",
            shape: vec![],
        })?;
        let mut acc = *first;
        for &v in rest {
            acc = self.add(acc, v)?;
        }
        Ok(acc)
    }

    /// A single element (flat index) as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let t = self.value(a);
        if index >= t.numel() {
            return Err(Error::Index {
                what: "tensor",
                index,
                size: t.numel(),
            });
        }
        let out = Tensor::scalar(t.data()[index]);
        Ok(self.owned(out, Op::Pick { a: a.0, index }))
    }

    /// Embedding lookup: rows of `table` in `ids` order. `frozen_row`, when set,
    /// never receives gradient (the padding row).
    pub fn gather_rows(&mut self, table: Var, ids: &[usize], frozen_row: Option<usize>) -> Result<Var> {
        let t = self.value(table);
        let (rows, cols) = t.dims2();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    what: "embedding table",
                    index: id,
                    size: rows,
                });
            }
            data.extend_from_slice(t.row_slice(id));
        }
        let out = Tensor::new(&[ids.len(), cols], data)?;
        Ok(self.owned(
            out,
            Op::GatherRows {
                table: table.0,
                ids: ids.to_vec(),
                frozen_row,
            },
        ))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-rate)`. Identity when
    /// not training or when `rate == 0`.
    pub fn dropout(&mut self, a: Var, rate: f64, training: bool, rng: &mut impl Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if !training || rate == 0.0 {
            return Ok(a);
        }
        let keep = T::lit(1.0 / (1.0 - rate));
        let mask: Vec<T> = (0..self.value(a).numel())
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect();
        let t = self.value(a);
        let data = t.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let out = Tensor::new(t.shape(), data)?;
        Ok(self.owned(out, Op::Dropout { a: a.0, mask }))
    }

    /// Reverse sweep from a scalar loss, consuming the tape.
    pub fn backward(self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Rank {
                op: "backward",
                expected: "a scalar loss",
                shape: self.shape(loss).to_vec(),
            });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.shape(loss), T::one()));
        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        let params = self
            .param_vars
            .iter()
            .map(|(&id, &v)| (id, v.0))
            .collect();
        Ok(Gradients { grads, params })
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    fn backprop_node(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let out = &self.values[idx];
        let gd = g.data();
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (va, vb) = (&self.values[a], &self.values[b]);
                let (m, k) = (va.shape()[0], va.shape()[1]);
                let n = vb.shape()[1];
                if self.needs(a) {
                    let mut ga = vec![T::zero(); m * k];
                    gemm_nt(gd, vb.data(), &mut ga, m, n, k);
                    accumulate(grads, a, va.shape(), ga);
                }
                if self.needs(b) {
                    let mut gb = vec![T::zero(); k * n];
                    gemm_tn(va.data(), gd, &mut gb, m, k, n);
                    accumulate(grads, b, vb.shape(), gb);
                }
            }
            &Op::Linear { x, w } => {
                let (vx, vw) = (&self.values[x], &self.values[w]);
                let (n, k) = vx.dims2();
                let out_dim = vw.shape()[0];
                if self.needs(x) {
                    let mut gx = vec![T::zero(); n * k];
                    gemm_nn(gd, vw.data(), &mut gx, n, out_dim, k);
                    accumulate(grads, x, vx.shape(), gx);
                }
                if self.needs(w) {
                    let mut gw = vec![T::zero(); out_dim * k];
                    gemm_tn(gd, vx.data(), &mut gw, n, out_dim, k);
                    accumulate(grads, w, vw.shape(), gw);
                }
            }
            &Op::Add(a, b) => {
                for i in [a, b] {
                    if self.needs(i) {
                        accumulate(grads, i, g.shape(), gd.to_vec());
                    }
                }
            }
            &Op::Sub(a, b) => {
                if self.needs(a) {
                    accumulate(grads, a, g.shape(), gd.to_vec());
                }
                if self.needs(b) {
                    accumulate(grads, b, g.shape(), gd.iter().map(|&x| -x).collect());
                }
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (self.values[a].data(), self.values[b].data());
                if self.needs(a) {
                    let ga = gd.iter().zip(vb).map(|(&x, &y)| x * y).collect();
                    accumulate(grads, a, g.shape(), ga);
                }
                if self.needs(b) {
                    let gb = gd.iter().zip(va).map(|(&x, &y)| x * y).collect();
                    accumulate(grads, b, g.shape(), gb);
                }
            }
            &Op::AddRow { m, row } => {
                if self.needs(m) {
                    accumulate(grads, m, g.shape(), gd.to_vec());
                }
                if self.needs(row) {
                    let (rows, cols) = g.dims2();
                    let mut gr = vec![T::zero(); cols];
                    for i in 0..rows {
                        for (acc, &x) in gr.iter_mut().zip(&gd[i * cols..(i + 1) * cols]) {
                            *acc = *acc + x;
                        }
                    }
                    accumulate(grads, row, self.values[row].shape(), gr);
                }
            }
            &Op::Affine { a, scale } => {
                accumulate(grads, a, g.shape(), gd.iter().map(|&x| x * scale).collect());
            }
            &Op::Sigmoid(a) => {
                let ga = gd
                    .iter()
                    .zip(out.data())
                    .map(|(&x, &y)| x * y * (T::one() - y))
                    .collect();
                accumulate(grads, a, g.shape(), ga);
            }
            &Op::Tanh(a) => {
                let ga = gd
                    .iter()
                    .zip(out.data())
                    .map(|(&x, &y)| x * (T::one() - y * y))
                    .collect();
                accumulate(grads, a, g.shape(), ga);
            }
            &Op::Log { a, floor } => {
                let ga = gd
                    .iter()
                    .zip(self.values[a].data())
                    .map(|(&x, &v)| if v > floor { x / v } else { T::zero() })
                    .collect();
                accumulate(grads, a, g.shape(), ga);
            }
            &Op::Softmax(a) => {
                let y = out.data();
                let dot: T = gd.iter().zip(y).map(|(&x, &p)| x * p).sum();
                let ga = gd.iter().zip(y).map(|(&x, &p)| p * (x - dot)).collect();
                accumulate(grads, a, g.shape(), ga);
            }
            &Op::LogSoftmax(a) => {
                let total: T = gd.iter().copied().sum();
                let ga = gd
                    .iter()
                    .zip(out.data())
                    .map(|(&x, &lp)| x - lp.exp() * total)
                    .collect();
                accumulate(grads, a, g.shape(), ga);
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = out.shape()[..*axis].iter().product();
                let mut offset = 0;
                let out_inner = out.numel() / outer;
                for &i in inputs {
                    let v = &self.values[i];
                    let inner = v.numel() / outer;
                    if self.needs(i) {
                        let mut gi = Vec::with_capacity(v.numel());
                        for o in 0..outer {
                            let base = o * out_inner + offset;
                            gi.extend_from_slice(&gd[base..base + inner]);
                        }
                        accumulate(grads, i, v.shape(), gi);
                    }
                    offset += inner;
                }
            }
            &Op::SliceRows { a, start } => {
                let v = &self.values[a];
                let inner = v.numel() / v.shape()[0];
                let mut ga = vec![T::zero(); v.numel()];
                ga[start * inner..start * inner + gd.len()].copy_from_slice(gd);
                accumulate(grads, a, v.shape(), ga);
            }
            &Op::Reshape(a) => {
                accumulate(grads, a, self.values[a].shape(), gd.to_vec());
            }
            Op::Maxout { a, winners } => {
                let v = &self.values[*a];
                let mut ga = vec![T::zero(); v.numel()];
                for (&w, &x) in winners.iter().zip(gd) {
                    ga[w] = ga[w] + x;
                }
                accumulate(grads, *a, v.shape(), ga);
            }
            &Op::Sum(a) => {
                let v = &self.values[a];
                accumulate(grads, a, v.shape(), vec![gd[0]; v.numel()]);
            }
            &Op::Pick { a, index } => {
                let v = &self.values[a];
                let mut ga = vec![T::zero(); v.numel()];
                ga[index] = gd[0];
                accumulate(grads, a, v.shape(), ga);
            }
            Op::GatherRows { table, ids, frozen_row } => {
                let v = &self.values[*table];
                let (_, cols) = v.dims2();
                let mut gt = vec![T::zero(); v.numel()];
                for (pos, &id) in ids.iter().enumerate() {
                    if Some(id) == *frozen_row {
                        continue;
                    }
                    for (acc, &x) in gt[id * cols..(id + 1) * cols]
                        .iter_mut()
                        .zip(&gd[pos * cols..(pos + 1) * cols])
                    {
                        *acc = *acc + x;
                    }
                }
                accumulate(grads, *table, v.shape(), gt);
            }
            Op::Dropout { a, mask } => {
                let ga = gd.iter().zip(mask).map(|(&x, &m)| x * m).collect();
                accumulate(grads, *a, g.shape(), ga);
            }
        }
    }
}

fn accumulate<T: Real>(grads: &mut [Option<Tensor<T>>], idx: usize, shape: &[usize], data: Vec<T>) {
    let t = Tensor::new(shape, data).expect("gradient shape matches value");
    match &mut grads[idx] {
        Some(existing) => existing.add_assign(&t),
        slot => *slot = Some(t),
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients<T: Real = f32> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(ParamId, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to a recorded value, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|&(_, i)| self.grads[i].as_ref())
    }

    /// Parameter gradients keyed by id, in id order.
    pub fn into_param_grads(mut self) -> Vec<(ParamId, Tensor<T>)> {
        let mut params = std::mem::take(&mut self.params);
        params.sort();
        params
            .into_iter()
            .filter_map(|(id, i)| self.grads[i].take().map(|g| (id, g)))
            .collect()
    }
}
