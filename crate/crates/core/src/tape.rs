//! Reverse-mode differentiation over 2-D arrays.
//!
//! A [`Tape`] records every operation as a node; [`Tape::backward`] walks the
//! nodes in reverse and accumulates vector-Jacobian products. Only nodes that
//! transitively depend on a leaf created with `requires_grad = true` receive
//! gradients. Leaves may share storage with model parameters through [`Arc`],
//! so recording a forward pass does not copy weights.

use std::ops::Deref;
use std::sync::Arc;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::Scalar;

pub type Matrix<T> = Array2<T>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<T> {
    Owned(Matrix<T>),
    Shared(Arc<Matrix<T>>),
}

impl<T> Deref for Value<T> {
    type Target = Matrix<T>;

    fn deref(&self) -> &Matrix<T> {
        match self {
            Value::Owned(m) => m,
            Value::Shared(m) => m,
        }
    }
}

enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Gelu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Log(Var),
    Sqrt(Var),
    SoftmaxRows(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, eps: T },
    Gather { table: Var, ids: Vec<usize> },
    SetRows { base: Var, rows: Vec<(usize, Var)> },
    SliceCols { x: Var, start: usize },
    SliceRows { x: Var, start: usize },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    Sum(Var),
}

struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Accumulated gradients from one backward pass, indexed by [`Var`].
pub struct Grads<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

const GELU_COEF: f64 = 0.044_715;

fn gelu_inner<T: Scalar>(x: T) -> T {
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    c * (x + T::lit(GELU_COEF) * x * x * x)
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn unary(&mut self, x: Var, value: Matrix<T>, op: Op<T>) -> Var {
        let needs = self.needs(x);
        self.push(Value::Owned(value), op, needs)
    }

    pub fn leaf(&mut self, value: Matrix<T>, requires_grad: bool) -> Var {
        self.push(Value::Owned(value), Op::Leaf, requires_grad)
    }

    pub fn shared_leaf(&mut self, value: Arc<Matrix<T>>, requires_grad: bool) -> Var {
        self.push(Value::Shared(value), Op::Leaf, requires_grad)
    }

    /// Row vector leaf.
    pub fn row(&mut self, values: &[T], requires_grad: bool) -> Var {
        let m = Matrix::from_shape_vec((1, values.len()), values.to_vec()).expect("row shape");
        self.leaf(m, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v)[[0, 0]]
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(Value::Owned(value), Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(Value::Owned(value), Op::Sub(a, b), needs)
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let needs = self.needs(a) || self.needs(b);
        self.push(Value::Owned(value), Op::Mul(a, b), needs)
    }

    /// `x + bias` with a `1×c` bias broadcast over rows.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        assert_eq!(self.value(bias).nrows(), 1, "bias must be a row vector");
        let value = self.value(x) + self.value(bias);
        let needs = self.needs(x) || self.needs(bias);
        self.push(Value::Owned(value), Op::AddRow(x, bias), needs)
    }

    pub fn scale(&mut self, x: Var, k: T) -> Var {
        let value = self.value(x) * k;
        self.unary(x, value, Op::Scale(x, k))
    }

    pub fn add_scalar(&mut self, x: Var, k: T) -> Var {
        let value = self.value(x) + k;
        self.unary(x, value, Op::AddScalar(x))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(Value::Owned(value), Op::MatMul(a, b), needs)
    }

    /// `a · bᵀ`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(&self.value(b).t());
        let needs = self.needs(a) || self.needs(b);
        self.push(Value::Owned(value), Op::MatMulT(a, b), needs)
    }

    /// Tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self
            .value(x)
            .mapv(|v| T::lit(0.5) * v * (T::one() + gelu_inner(v).tanh()));
        self.unary(x, value, Op::Gelu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.tanh());
        self.unary(x, value, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(sigmoid);
        self.unary(x, value, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(T::zero()));
        self.unary(x, value, Op::Relu(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.abs());
        self.unary(x, value, Op::Abs(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.ln());
        self.unary(x, value, Op::Log(x))
    }

    /// Element-wise square root. The backward pass uses a zero subgradient at 0.
    pub fn sqrt(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.sqrt());
        self.unary(x, value, Op::Sqrt(x))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let mut value = self.value(x).clone();
        for mut row in value.rows_mut() {
            let max = row.fold(T::neg_infinity(), |m, &v| m.max(v));
            row.mapv_inplace(|v| (v - max).exp());
            let total: T = row.iter().copied().sum();
            row.mapv_inplace(|v| v / total);
        }
        self.unary(x, value, Op::SoftmaxRows(x))
    }

    /// Row-wise layer normalisation with `1×c` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Var {
        let (xhat, _) = normalize_rows(self.value(x).view(), eps);
        let value = &(&xhat * self.value(gamma)) + self.value(beta);
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        self.push(Value::Owned(value), Op::LayerNorm { x, gamma, beta, eps }, needs)
    }

    /// Selects rows of `table` by index (embedding lookup).
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Var {
        let t = self.value(table);
        let value = t.select(Axis(0), ids);
        self.unary(
            table,
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Replaces the listed rows of `base` with `1×c` row variables.
    pub fn set_rows(&mut self, base: Var, rows: Vec<(usize, Var)>) -> Var {
        let mut value = self.value(base).clone();
        let mut needs = self.needs(base);
        for &(r, v) in &rows {
            value.row_mut(r).assign(&self.value(v).row(0));
            needs |= self.needs(v);
        }
        self.push(Value::Owned(value), Op::SetRows { base, rows }, needs)
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![.., start..start + len]).to_owned();
        self.unary(x, value, Op::SliceCols { x, start })
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Var {
        let value = self.value(x).slice(s![start..start + len, ..]).to_owned();
        self.unary(x, value, Op::SliceRows { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("row counts agree");
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(Value::Owned(value), Op::ConcatCols(parts.to_vec()), needs)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = concatenate(Axis(0), &views).expect("column counts agree");
        let needs = parts.iter().any(|&p| self.needs(p));
        self.push(Value::Owned(value), Op::ConcatRows(parts.to_vec()), needs)
    }

    /// Column-wise mean over all rows, giving a `1×c` row.
    pub fn mean_rows(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let n = T::from_usize_lossy(v.nrows());
        let value = v.sum_axis(Axis(0)).insert_axis(Axis(0)) / n;
        self.unary(x, value, Op::MeanRows(x))
    }

    /// Sum of all entries as a `1×1` matrix.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        self.unary(x, Matrix::from_elem((1, 1), total), Op::Sum(x))
    }

    /// Squared L2 norm of all entries.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let sq = self.mul(x, x);
        self.sum(sq)
    }

    /// Backpropagates from a scalar output.
    pub fn backward(&self, out: Var) -> Grads<T> {
        let seed = Matrix::from_elem(self.value(out).dim(), T::one());
        self.backward_with(out, seed)
    }

    /// Backpropagates an arbitrary upstream gradient `seed` (same shape as `out`).
    pub fn backward_with(&self, out: Var, seed: Matrix<T>) -> Grads<T> {
        assert_eq!(seed.dim(), self.value(out).dim(), "seed shape");
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Grads { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Matrix<T>>], v: Var, g: Matrix<T>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => *acc += &g,
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, i: usize, g: &Matrix<T>, grads: &mut [Option<Matrix<T>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.mapv(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g * self.value(*b));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, g * self.value(*a));
                }
            }
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.needs(*bias) {
                    self.accumulate(grads, *bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Scale(x, k) => self.accumulate(grads, *x, g * *k),
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.dot(&self.value(*b).t()));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, self.value(*a).t().dot(g));
                }
            }
            Op::MatMulT(a, b) => {
                if self.needs(*a) {
                    self.accumulate(grads, *a, g.dot(self.value(*b)));
                }
                if self.needs(*b) {
                    self.accumulate(grads, *b, g.t().dot(self.value(*a)));
                }
            }
            Op::Gelu(x) => {
                let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
                let mut d = self.value(*x).mapv(|v| {
                    let t = gelu_inner(v).tanh();
                    let inner_d = c * (T::one() + T::lit(3.0 * GELU_COEF) * v * v);
                    T::lit(0.5) * (T::one() + t) + T::lit(0.5) * v * (T::one() - t * t) * inner_d
                });
                d *= g;
                self.accumulate(grads, *x, d);
            }
            Op::Tanh(x) => {
                let y: &Matrix<T> = &node.value;
                let d = g * &y.mapv(|t| T::one() - t * t);
                self.accumulate(grads, *x, d);
            }
            Op::Sigmoid(x) => {
                let y: &Matrix<T> = &node.value;
                let d = g * &y.mapv(|s| s * (T::one() - s));
                self.accumulate(grads, *x, d);
            }
            Op::Relu(x) => {
                let mask = self
                    .value(*x)
                    .mapv(|v| if v > T::zero() { T::one() } else { T::zero() });
                self.accumulate(grads, *x, g * &mask);
            }
            Op::Abs(x) => {
                let sign = self.value(*x).mapv(|v| {
                    if v > T::zero() {
                        T::one()
                    } else if v < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(grads, *x, g * &sign);
            }
            Op::Log(x) => {
                let d = g / self.value(*x);
                self.accumulate(grads, *x, d);
            }
            Op::Sqrt(x) => {
                let y: &Matrix<T> = &node.value;
                let d = ndarray::Zip::from(g).and(y).map_collect(|&gi, &yi| {
                    if yi > T::zero() {
                        gi / (T::lit(2.0) * yi)
                    } else {
                        T::zero()
                    }
                });
                self.accumulate(grads, *x, d);
            }
            Op::SoftmaxRows(x) => {
                let y: &Matrix<T> = &node.value;
                let mut d = g * y;
                for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                    let total: T = drow.iter().copied().sum();
                    ndarray::Zip::from(&mut drow)
                        .and(&yrow)
                        .for_each(|dv, &yv| *dv -= yv * total);
                }
                self.accumulate(grads, *x, d);
            }
            Op::LayerNorm { x, gamma, beta, eps } => {
                let (xhat, inv) = normalize_rows(self.value(*x).view(), *eps);
                if self.needs(*gamma) {
                    let dg = (g * &xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
                    self.accumulate(grads, *gamma, dg);
                }
                if self.needs(*beta) {
                    self.accumulate(grads, *beta, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.needs(*x) {
                    let dxhat = g * self.value(*gamma);
                    let n = T::from_usize_lossy(xhat.ncols());
                    let mut dx = Matrix::zeros(xhat.dim());
                    for r in 0..xhat.nrows() {
                        let dr = dxhat.row(r);
                        let xr = xhat.row(r);
                        let sum_d: T = dr.iter().copied().sum();
                        let sum_dx: T = dr.iter().zip(xr.iter()).map(|(&a, &b)| a * b).sum();
                        for c in 0..xhat.ncols() {
                            dx[[r, c]] = inv[r] / n * (n * dr[c] - sum_d - xr[c] * sum_dx);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::Gather { table, ids } => {
                if self.needs(*table) {
                    let mut d = Matrix::zeros(self.value(*table).dim());
                    for (r, &id) in ids.iter().enumerate() {
                        let mut dst = d.row_mut(id);
                        dst += &g.row(r);
                    }
                    self.accumulate(grads, *table, d);
                }
            }
            Op::SetRows { base, rows } => {
                if self.needs(*base) {
                    let mut d = g.clone();
                    for &(r, _) in rows {
                        d.row_mut(r).fill(T::zero());
                    }
                    self.accumulate(grads, *base, d);
                }
                for &(r, v) in rows {
                    if self.needs(v) {
                        let row = g.row(r).to_owned().insert_axis(Axis(0));
                        self.accumulate(grads, v, row);
                    }
                }
            }
            Op::SliceCols { x, start } => {
                if self.needs(*x) {
                    let mut d = Matrix::zeros(self.value(*x).dim());
                    d.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                    self.accumulate(grads, *x, d);
                }
            }
            Op::SliceRows { x, start } => {
                if self.needs(*x) {
                    let mut d = Matrix::zeros(self.value(*x).dim());
                    d.slice_mut(s![*start..*start + g.nrows(), ..]).assign(g);
                    self.accumulate(grads, *x, d);
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    if self.needs(p) {
                        self.accumulate(grads, p, g.slice(s![.., offset..offset + w]).to_owned());
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let h = self.value(p).nrows();
                    if self.needs(p) {
                        self.accumulate(grads, p, g.slice(s![offset..offset + h, ..]).to_owned());
                    }
                    offset += h;
                }
            }
            Op::MeanRows(x) => {
                if self.needs(*x) {
                    let (rows, _) = self.value(*x).dim();
                    let n = T::from_usize_lossy(rows);
                    let row = g.row(0).mapv(|v| v / n);
                    let d = row.broadcast((rows, row.len())).expect("broadcast").to_owned();
                    self.accumulate(grads, *x, d);
                }
            }
            Op::Sum(x) => {
                if self.needs(*x) {
                    let d = Matrix::from_elem(self.value(*x).dim(), g[[0, 0]]);
                    self.accumulate(grads, *x, d);
                }
            }
        }
    }
}

/// Returns `(x - mean) / sqrt(var + eps)` per row and the per-row inverse std.
fn normalize_rows<T: Scalar>(x: ArrayView2<'_, T>, eps: T) -> (Matrix<T>, Vec<T>) {
    let n = T::from_usize_lossy(x.ncols());
    let mut out = x.to_owned();
    let mut invs = Vec::with_capacity(x.nrows());
    for mut row in out.rows_mut() {
        let mean = row.iter().copied().sum::<T>() / n;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let inv = T::one() / (var + eps).sqrt();
        row.mapv_inplace(|v| (v - mean) * inv);
        invs.push(inv);
    }
    (out, invs)
}
