use std::ops::Range;

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::tensor::{gemm, Tensor};

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul {
        a: Var,
        b: Var,
        a_t: bool,
        b_t: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Slice {
        a: Var,
        rows: Range<usize>,
        cols: Range<usize>,
    },
    SelectRows(Var, Vec<usize>),
    SoftmaxRows(Var),
    LayerNorm {
        a: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    },
    LstmCell {
        pre: Var,
        c_prev: Var,
    },
    Im2Col {
        a: Var,
        batch: usize,
        len: usize,
        width: usize,
    },
    Mask(Var, Vec<f64>),
    Mse(Var, Tensor),
    Dot(Var, Tensor),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Tape of recorded operations.
///
/// Every operation validates shapes, computes its value eagerly and fails with
/// [`crate::NnError::Numerical`] if the result is not finite.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    training: bool,
}

/// Gradients of a scalar with respect to every node of a graph.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-major 2-D view with optional transpose, for strided gemm.
#[derive(Clone, Copy)]
struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    strides: (isize, isize),
}

impl<'a> View<'a> {
    fn of(t: &'a Tensor, transposed: bool) -> Self {
        let (r, c) = (t.rows(), t.cols());
        if transposed {
            View {
                data: t.data(),
                rows: c,
                cols: r,
                strides: (1, c as isize),
            }
        } else {
            View {
                data: t.data(),
                rows: r,
                cols: c,
                strides: (c as isize, 1),
            }
        }
    }

    fn t(self) -> Self {
        View {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            strides: (self.strides.1, self.strides.0),
        }
    }
}

fn gemm_into(a: View, b: View, out: &mut Tensor, accumulate: bool) {
    debug_assert_eq!(a.cols, b.rows);
    debug_assert_eq!(out.rows() * out.cols(), a.rows * b.cols);
    gemm(
        a.rows,
        a.cols,
        b.cols,
        a.data,
        a.strides,
        b.data,
        b.strides,
        out.data_mut(),
        accumulate,
    );
}

impl Graph {
    /// Graph in evaluation mode: dropout is the identity.
    pub fn new() -> Self {
        Self::default()
    }

    /// Graph in training mode: dropout masks are drawn.
    pub fn training() -> Self {
        Self {
            nodes: Vec::new(),
            training: true,
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        value.ensure_finite(name)?;
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, "leaf")
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        let t = self.value(v);
        (t.rows(), t.cols())
    }

    fn general_matmul(&mut self, a: Var, b: Var, a_t: bool, b_t: bool) -> Result<Var> {
        let va = View::of(self.value(a), a_t);
        let vb = View::of(self.value(b), b_t);
        if va.cols != vb.rows {
            return shape_err(
                "matmul",
                format!("{}x{} · {}x{}", va.rows, va.cols, vb.rows, vb.cols),
            );
        }
        let mut out = Tensor::zeros(va.rows, vb.cols);
        gemm_into(va, vb, &mut out, false);
        self.push(out, Op::MatMul { a, b, a_t, b_t }, "matmul")
    }

    /// `a · b`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.general_matmul(a, b, false, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.general_matmul(a, b, false, true)
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return shape_err(name, format!("{:?} vs {:?}", ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(out, op, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds the `1 × n` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        let (br, bc) = self.dims(bias);
        if br != 1 || bc != c {
            return shape_err("add_row", format!("{r}x{c} + {br}x{bc}"));
        }
        let b = self.value(bias).data().to_vec();
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(c) {
            for (x, y) in row.iter_mut().zip(&b) {
                *x += y;
            }
        }
        self.push(out, Op::AddRow(a, bias), "add_row")
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x *= s);
        self.push(out, Op::Scale(a, s), "scale")
    }

    fn unary(&mut self, a: Var, name: &'static str, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x = f(*x));
        self.push(out, op, name)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "tanh", f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(a, "relu", |x| x.max(0.0), Op::Relu(a))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat_cols", "no inputs");
        }
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let (r, c) = self.dims(p);
            if r != rows {
                return shape_err("concat_cols", format!("row count {r} != {rows}"));
            }
            total += c;
        }
        let mut out = Tensor::zeros(rows, total);
        let mut offset = 0;
        for &p in parts {
            let t = self.value(p);
            let c = t.cols();
            for r in 0..rows {
                out.data_mut()[r * total + offset..r * total + offset + c]
                    .copy_from_slice(t.row_slice(r));
            }
            offset += c;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()), "concat_cols")
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return shape_err("concat_rows", "no inputs");
        }
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols() != cols {
                return shape_err("concat_rows", format!("col count {} != {cols}", t.cols()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::matrix(rows, cols, data)?;
        self.push(out, Op::ConcatRows(parts.to_vec()), "concat_rows")
    }

    /// Rectangular block `a[rows, cols]`.
    pub fn slice(&mut self, a: Var, rows: Range<usize>, cols: Range<usize>) -> Result<Var> {
        let (r, c) = self.dims(a);
        if rows.end > r || cols.end > c || rows.start >= rows.end || cols.start >= cols.end {
            return shape_err("slice", format!("{rows:?},{cols:?} of {r}x{c}"));
        }
        let t = self.value(a);
        let w = cols.end - cols.start;
        let mut data = Vec::with_capacity((rows.end - rows.start) * w);
        for i in rows.clone() {
            data.extend_from_slice(&t.row_slice(i)[cols.clone()]);
        }
        let out = Tensor::matrix(rows.end - rows.start, w, data)?;
        self.push(out, Op::Slice { a, rows, cols }, "slice")
    }

    pub fn slice_cols(&mut self, a: Var, cols: Range<usize>) -> Result<Var> {
        let r = self.value(a).rows();
        self.slice(a, 0..r, cols)
    }

    pub fn slice_rows(&mut self, a: Var, rows: Range<usize>) -> Result<Var> {
        let c = self.value(a).cols();
        self.slice(a, rows, 0..c)
    }

    /// Gathers rows by index (indices may repeat).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if idx.is_empty() || idx.iter().any(|&i| i >= r) {
            return shape_err("select_rows", format!("index out of {r} rows"));
        }
        let t = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::matrix(idx.len(), c, data)?;
        self.push(out, Op::SelectRows(a, idx.to_vec()), "select_rows")
    }

    /// Row-wise softmax. Each row is shifted by its maximum before
    /// exponentiation, so large scores cannot overflow.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        let c = out.cols();
        for row in out.data_mut().chunks_mut(c) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for x in row.iter_mut() {
                *x = (*x - m).exp();
                s += *x;
            }
            row.iter_mut().for_each(|x| *x /= s);
        }
        self.push(out, Op::SoftmaxRows(a), "softmax_rows")
    }

    /// Row-wise layer normalization with `1 × n` gain and shift.
    pub fn layer_norm(&mut self, a: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (_, c) = self.dims(a);
        if self.dims(gamma) != (1, c) || self.dims(beta) != (1, c) {
            return shape_err("layer_norm", "gain/shift must be 1 x cols");
        }
        let g = self.value(gamma).data().to_vec();
        let b = self.value(beta).data().to_vec();
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_mut(c) {
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for (j, x) in row.iter_mut().enumerate() {
                *x = (*x - mean) * inv * g[j] + b[j];
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                a,
                gamma,
                beta,
                eps,
            },
            "layer_norm",
        )
    }

    /// Fused LSTM cell.
    ///
    /// `pre` is `B × 4h` holding the gate pre-activations in block order
    /// `[z, i, f, o]`; `c_prev` is `B × h`. Returns `B × 2h` laid out as
    /// `[h_t | c_t]` with `z = tanh`, `i, f, o = σ`, `c_t = i⊙z + f⊙c_prev`
    /// and `h_t = o⊙tanh(c_t)`.
    pub fn lstm_cell(&mut self, pre: Var, c_prev: Var) -> Result<Var> {
        let (b, h4) = self.dims(pre);
        let (cb, h) = self.dims(c_prev);
        if h4 != 4 * h || cb != b {
            return shape_err("lstm_cell", format!("pre {b}x{h4}, c_prev {cb}x{h}"));
        }
        let p = self.value(pre).data();
        let cp = self.value(c_prev).data();
        let mut out = Tensor::zeros(b, 2 * h);
        let od = out.data_mut();
        for r in 0..b {
            let pr = &p[r * h4..(r + 1) * h4];
            for j in 0..h {
                let z = pr[j].tanh();
                let i = sigmoid(pr[h + j]);
                let f = sigmoid(pr[2 * h + j]);
                let o = sigmoid(pr[3 * h + j]);
                let c = i * z + f * cp[r * h + j];
                od[r * 2 * h + j] = o * c.tanh();
                od[r * 2 * h + h + j] = c;
            }
        }
        self.push(out, Op::LstmCell { pre, c_prev }, "lstm_cell")
    }

    /// Unfolds `batch` stacked sequences of `len` rows into sliding windows of
    /// `width` rows, giving `batch·(len−width+1) × width·cols`.
    pub fn im2col(&mut self, a: Var, batch: usize, len: usize, width: usize) -> Result<Var> {
        let (r, c) = self.dims(a);
        if r != batch * len || width == 0 || width > len {
            return shape_err(
                "im2col",
                format!("{r} rows for batch {batch} x len {len}, width {width}"),
            );
        }
        let out_len = len - width + 1;
        let t = self.value(a).data();
        let mut data = Vec::with_capacity(batch * out_len * width * c);
        for bi in 0..batch {
            for s in 0..out_len {
                let start = (bi * len + s) * c;
                data.extend_from_slice(&t[start..start + width * c]);
            }
        }
        let out = Tensor::matrix(batch * out_len, width * c, data)?;
        self.push(
            out,
            Op::Im2Col {
                a,
                batch,
                len,
                width,
            },
            "im2col",
        )
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1−rate)`. In
    /// evaluation mode (or at rate 0) this returns `a` unchanged.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return shape_err("dropout", format!("rate {rate} outside [0, 1)"));
        }
        if !self.training || rate == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let mut out = self.value(a).clone();
        for (x, m) in out.data_mut().iter_mut().zip(&mask) {
            *x *= m;
        }
        self.push(out, Op::Mask(a, mask), "dropout")
    }

    /// Mean squared error against a constant target; returns a `1 × 1` node.
    pub fn mse(&mut self, pred: Var, target: &Tensor) -> Result<Var> {
        let p = self.value(pred);
        if !p.same_shape(target) {
            return shape_err("mse", format!("{:?} vs {:?}", p.shape(), target.shape()));
        }
        let n = p.len() as f64;
        let v = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        self.push(Tensor::scalar(v), Op::Mse(pred, target.clone()), "mse")
    }

    /// `Σ a ⊙ w` for a constant `w`.
    pub fn dot(&mut self, a: Var, w: &Tensor) -> Result<Var> {
        let t = self.value(a);
        if !t.same_shape(w) {
            return shape_err("dot", format!("{:?} vs {:?}", t.shape(), w.shape()));
        }
        let v = t.data().iter().zip(w.data()).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(v), Op::Dot(a, w.clone()), "dot")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(v), Op::Sum(a), "sum")
    }

    /// Reverse sweep from a `1 × 1` output.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        let out = self.value(output);
        if out.len() != 1 {
            return shape_err("backward", format!("output shape {:?}", out.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::new(out.shape().to_vec(), vec![1.0])?);

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for g in grads.iter().flatten() {
            g.ensure_finite("backward")?;
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, a_t, b_t } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let va = View::of(ta, *a_t);
                let vb = View::of(tb, *b_t);
                let vg = View::of(g, false);
                // dA' = G·B'ᵀ, dB' = A'ᵀ·G; transposed operands receive the
                // transposed product.
                let ga = slot(grads, *a, ta);
                if *a_t {
                    gemm_into(vb, vg.t(), ga, true);
                } else {
                    gemm_into(vg, vb.t(), ga, true);
                }
                let gb = slot(grads, *b, tb);
                if *b_t {
                    gemm_into(vg.t(), va, gb, true);
                } else {
                    gemm_into(va.t(), vg, gb, true);
                }
            }
            Op::Add(a, b) => {
                slot(grads, *a, g).add_assign(g);
                slot(grads, *b, g).add_assign(g);
            }
            Op::Sub(a, b) => {
                slot(grads, *a, g).add_assign(g);
                let gb = slot(grads, *b, g);
                for (x, d) in gb.data_mut().iter_mut().zip(g.data()) {
                    *x -= d;
                }
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let ga = slot(grads, *a, ta);
                for ((x, d), o) in ga.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                    *x += d * o;
                }
                let gb = slot(grads, *b, tb);
                for ((x, d), o) in gb.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                    *x += d * o;
                }
            }
            Op::AddRow(a, bias) => {
                slot(grads, *a, g).add_assign(g);
                let c = g.cols();
                let gb = slot(grads, *bias, self.value(*bias));
                for row in g.data().chunks(c) {
                    for (x, d) in gb.data_mut().iter_mut().zip(row) {
                        *x += d;
                    }
                }
            }
            Op::Scale(a, s) => {
                let ga = slot(grads, *a, g);
                for (x, d) in ga.data_mut().iter_mut().zip(g.data()) {
                    *x += s * d;
                }
            }
            Op::Sigmoid(a) => {
                let ga = slot(grads, *a, g);
                for ((x, d), s) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *x += d * s * (1.0 - s);
                }
            }
            Op::Tanh(a) => {
                let ga = slot(grads, *a, g);
                for ((x, d), t) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                    *x += d * (1.0 - t * t);
                }
            }
            Op::Relu(a) => {
                let ta = self.value(*a);
                let ga = slot(grads, *a, g);
                for ((x, d), v) in ga.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                    if *v > 0.0 {
                        *x += d;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut offset = 0;
                for p in parts {
                    let tp = self.value(*p);
                    let c = tp.cols();
                    let gp = slot(grads, *p, tp);
                    for r in 0..tp.rows() {
                        let src = &g.data()[r * total + offset..r * total + offset + c];
                        for (x, d) in gp.data_mut()[r * c..(r + 1) * c].iter_mut().zip(src) {
                            *x += d;
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let tp = self.value(*p);
                    let n = tp.len();
                    let gp = slot(grads, *p, tp);
                    for (x, d) in gp.data_mut().iter_mut().zip(&g.data()[offset..offset + n]) {
                        *x += d;
                    }
                    offset += n;
                }
            }
            Op::Slice { a, rows, cols } => {
                let ta = self.value(*a);
                let c = ta.cols();
                let w = cols.end - cols.start;
                let ga = slot(grads, *a, ta);
                for (k, r) in rows.clone().enumerate() {
                    let dst = &mut ga.data_mut()[r * c + cols.start..r * c + cols.end];
                    for (x, d) in dst.iter_mut().zip(&g.data()[k * w..(k + 1) * w]) {
                        *x += d;
                    }
                }
            }
            Op::SelectRows(a, idx) => {
                let ta = self.value(*a);
                let c = ta.cols();
                let ga = slot(grads, *a, ta);
                for (k, &r) in idx.iter().enumerate() {
                    let dst = &mut ga.data_mut()[r * c..(r + 1) * c];
                    for (x, d) in dst.iter_mut().zip(&g.data()[k * c..(k + 1) * c]) {
                        *x += d;
                    }
                }
            }
            Op::SoftmaxRows(a) => {
                let c = y.cols();
                let ga = slot(grads, *a, y);
                for ((gx, dy), s) in ga
                    .data_mut()
                    .chunks_mut(c)
                    .zip(g.data().chunks(c))
                    .zip(y.data().chunks(c))
                {
                    let dot: f64 = dy.iter().zip(s).map(|(d, s)| d * s).sum();
                    for j in 0..c {
                        gx[j] += s[j] * (dy[j] - dot);
                    }
                }
            }
            Op::LayerNorm {
                a,
                gamma,
                beta,
                eps,
            } => {
                let ta = self.value(*a);
                let c = ta.cols();
                let gm = self.value(*gamma).data().to_vec();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; ta.len()];
                for (r, (row, dy)) in ta.data().chunks(c).zip(g.data().chunks(c)).enumerate() {
                    let n = c as f64;
                    let mean = row.iter().sum::<f64>() / n;
                    let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                    let inv = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|x| (x - mean) * inv).collect();
                    let dxhat: Vec<f64> = (0..c).map(|j| dy[j] * gm[j]).collect();
                    let s1: f64 = dxhat.iter().sum();
                    let s2: f64 = dxhat.iter().zip(&xhat).map(|(d, x)| d * x).sum();
                    for j in 0..c {
                        dgamma[j] += dy[j] * xhat[j];
                        dbeta[j] += dy[j];
                        dx[r * c + j] = inv / n * (n * dxhat[j] - s1 - xhat[j] * s2);
                    }
                }
                slot(grads, *a, ta)
                    .data_mut()
                    .iter_mut()
                    .zip(&dx)
                    .for_each(|(x, d)| *x += d);
                let gg = slot(grads, *gamma, self.value(*gamma));
                gg.data_mut().iter_mut().zip(&dgamma).for_each(|(x, d)| *x += d);
                let gb = slot(grads, *beta, self.value(*beta));
                gb.data_mut().iter_mut().zip(&dbeta).for_each(|(x, d)| *x += d);
            }
            Op::LstmCell { pre, c_prev } => {
                let tp = self.value(*pre);
                let tc = self.value(*c_prev);
                let (b, h) = (tc.rows(), tc.cols());
                let h4 = 4 * h;
                let mut dpre = vec![0.0; b * h4];
                let mut dcp = vec![0.0; b * h];
                let p = tp.data();
                for r in 0..b {
                    for j in 0..h {
                        let pr = &p[r * h4..(r + 1) * h4];
                        let z = pr[j].tanh();
                        let i = sigmoid(pr[h + j]);
                        let f = sigmoid(pr[2 * h + j]);
                        let o = sigmoid(pr[3 * h + j]);
                        let c = y.data()[r * 2 * h + h + j];
                        let tc_ = c.tanh();
                        let dh = g.data()[r * 2 * h + j];
                        let dc = g.data()[r * 2 * h + h + j] + dh * o * (1.0 - tc_ * tc_);
                        let cprev = tc.data()[r * h + j];
                        let dr = &mut dpre[r * h4..(r + 1) * h4];
                        dr[j] = dc * i * (1.0 - z * z);
                        dr[h + j] = dc * z * i * (1.0 - i);
                        dr[2 * h + j] = dc * cprev * f * (1.0 - f);
                        dr[3 * h + j] = dh * tc_ * o * (1.0 - o);
                        dcp[r * h + j] = dc * f;
                    }
                }
                slot(grads, *pre, tp)
                    .data_mut()
                    .iter_mut()
                    .zip(&dpre)
                    .for_each(|(x, d)| *x += d);
                slot(grads, *c_prev, tc)
                    .data_mut()
                    .iter_mut()
                    .zip(&dcp)
                    .for_each(|(x, d)| *x += d);
            }
            Op::Im2Col {
                a,
                batch,
                len,
                width,
            } => {
                let ta = self.value(*a);
                let c = ta.cols();
                let out_len = len - width + 1;
                let span = width * c;
                let ga = slot(grads, *a, ta);
                for bi in 0..*batch {
                    for s in 0..out_len {
                        let src = &g.data()[(bi * out_len + s) * span..(bi * out_len + s + 1) * span];
                        let start = (bi * len + s) * c;
                        for (x, d) in ga.data_mut()[start..start + span].iter_mut().zip(src) {
                            *x += d;
                        }
                    }
                }
            }
            Op::Mask(a, mask) => {
                let ga = slot(grads, *a, g);
                for ((x, d), m) in ga.data_mut().iter_mut().zip(g.data()).zip(mask) {
                    *x += d * m;
                }
            }
            Op::Mse(pred, target) => {
                let tp = self.value(*pred);
                let n = tp.len() as f64;
                let s = g.data()[0];
                let gp = slot(grads, *pred, tp);
                for ((x, p), t) in gp.data_mut().iter_mut().zip(tp.data()).zip(target.data()) {
                    *x += s * 2.0 * (p - t) / n;
                }
            }
            Op::Dot(a, w) => {
                let s = g.data()[0];
                let ga = slot(grads, *a, w);
                for (x, wv) in ga.data_mut().iter_mut().zip(w.data()) {
                    *x += s * wv;
                }
            }
            Op::Sum(a) => {
                let s = g.data()[0];
                let ta = self.value(*a);
                let ga = slot(grads, *a, ta);
                ga.data_mut().iter_mut().for_each(|x| *x += s);
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Tensor>], v: Var, like: &Tensor) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| {
        Tensor::new(like.shape().to_vec(), vec![0.0; like.len()]).expect("shape of existing tensor")
    })
}
