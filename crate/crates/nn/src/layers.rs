//! Parameterised building blocks.
//!
//! Every layer registers its tensors in a [`ParamStore`] at construction and
//! reads them back through a [`Bound`] during the forward pass. Sequence inputs
//! are stacked `(batch·steps) × features` with row `b·steps + t` holding step
//! `t` of sample `b`.

use rand::Rng;

use crate::error::{shape_err, Result};
use crate::graph::{Graph, Var};
use crate::params::{Bound, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Fully connected layer `y = x·W + b` (rows of `x` are samples).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub outputs: usize,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.add_uniform(format!("{name}.weight"), inputs, outputs, inputs, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, outputs, inputs, rng);
        Self {
            weight,
            bias,
            inputs,
            outputs,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        let y = g.matmul(x, p.var(self.weight))?;
        g.add_row(y, p.var(self.bias))
    }
}

/// Stride-1, unpadded 1-D convolution over the time axis.
///
/// The kernel is stored unfolded as `(width·in_channels) × out_channels`, so
/// the layer is an [`Graph::im2col`] followed by a matrix product.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conv1d {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub relu: bool,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        width: usize,
        relu: bool,
        rng: &mut R,
    ) -> Self {
        let fan_in = width * in_channels;
        let kernel = store.add_uniform(format!("{name}.kernel"), fan_in, out_channels, fan_in, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, out_channels, fan_in, rng);
        Self {
            kernel,
            bias,
            width,
            in_channels,
            out_channels,
            relu,
        }
    }

    /// Returns the stacked output and its per-sample length `len − width + 1`.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        batch: usize,
        len: usize,
    ) -> Result<(Var, usize)> {
        if g.value(x).cols() != self.in_channels {
            return shape_err(
                "conv1d",
                format!("{} channels, expected {}", g.value(x).cols(), self.in_channels),
            );
        }
        let cols = g.im2col(x, batch, len, self.width)?;
        let y = g.matmul(cols, p.var(self.kernel))?;
        let y = g.add_row(y, p.var(self.bias))?;
        let y = if self.relu { g.relu(y)? } else { y };
        Ok((y, len - self.width + 1))
    }
}

/// LSTM weights with the four gates fused column-wise in the order
/// `[z, i, f, o]`: `input` is `d × 4h` (the `W` matrices), `recurrent` is
/// `h × 4h` (the `R` matrices) and `bias` is `1 × 4h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LstmParams {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let input = store.add_uniform(format!("{name}.input"), inputs, 4 * hidden, hidden, rng);
        let recurrent =
            store.add_uniform(format!("{name}.recurrent"), hidden, 4 * hidden, hidden, rng);
        let bias = store.add_uniform(format!("{name}.bias"), 1, 4 * hidden, hidden, rng);
        Self {
            input,
            recurrent,
            bias,
            inputs,
            hidden,
        }
    }

    /// One step of the recurrence for a `B × d` input.
    pub fn step(
        &self,
        g: &mut Graph,
        p: &Bound,
        x_t: Var,
        h_prev: Var,
        c_prev: Var,
    ) -> Result<(Var, Var)> {
        let xw = g.matmul(x_t, p.var(self.input))?;
        let xw = g.add_row(xw, p.var(self.bias))?;
        let hr = g.matmul(h_prev, p.var(self.recurrent))?;
        let pre = g.add(xw, hr)?;
        self.cell(g, pre, c_prev)
    }

    fn cell(&self, g: &mut Graph, pre: Var, c_prev: Var) -> Result<(Var, Var)> {
        let h = self.hidden;
        let hc = g.lstm_cell(pre, c_prev)?;
        let h_t = g.slice_cols(hc, 0..h)?;
        let c_t = g.slice_cols(hc, h..2 * h)?;
        Ok((h_t, c_t))
    }

    /// Runs the recurrence over stacked sequences starting from `h_0 = c_0 = 0`.
    ///
    /// Returns the `B × h` hidden state for every step in time order. With
    /// `reverse` the recurrence runs from the last step to the first (the
    /// backward half of a bidirectional layer).
    pub fn sequence(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        batch: usize,
        steps: usize,
        reverse: bool,
    ) -> Result<Vec<Var>> {
        let (r, c) = (g.value(x).rows(), g.value(x).cols());
        if r != batch * steps || c != self.inputs {
            return shape_err(
                "lstm",
                format!("input {r}x{c} for batch {batch} x {steps} steps of {}", self.inputs),
            );
        }
        let xw = g.matmul(x, p.var(self.input))?;
        let xw = g.add_row(xw, p.var(self.bias))?;
        let mut c_t = g.leaf(Tensor::zeros(batch, self.hidden))?;
        let mut h_t: Option<Var> = None;
        let mut out = vec![None; steps];
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let idx: Vec<usize> = (0..batch).map(|b| b * steps + t).collect();
            let xt = g.select_rows(xw, &idx)?;
            let pre = match h_t {
                Some(h) => {
                    let hr = g.matmul(h, p.var(self.recurrent))?;
                    g.add(xt, hr)?
                }
                None => xt,
            };
            let (h, c) = self.cell(g, pre, c_t)?;
            h_t = Some(h);
            c_t = c;
            out[t] = Some(h);
        }
        Ok(out.into_iter().map(|v| v.expect("every step visited")).collect())
    }
}

/// Forward and backward LSTMs whose step outputs are concatenated
/// `h_t = [→h_t ; ←h_t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiLstm {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstm {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            forward: LstmParams::new(store, &format!("{name}.fwd"), inputs, hidden, rng),
            backward: LstmParams::new(store, &format!("{name}.bwd"), inputs, hidden, rng),
        }
    }

    pub fn sequence(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        batch: usize,
        steps: usize,
    ) -> Result<Vec<Var>> {
        let fwd = self.forward.sequence(g, p, x, batch, steps, false)?;
        let bwd = self.backward.sequence(g, p, x, batch, steps, true)?;
        fwd.into_iter()
            .zip(bwd)
            .map(|(f, b)| g.concat_cols(&[f, b]))
            .collect()
    }
}

/// Multi-head self-attention without biases.
///
/// `query`, `key` are `d × (heads·d_k)` and `value` is `d × (heads·d_v)`;
/// head `i` owns column block `i`. `output` is the `(heads·d_v) × d`
/// projection applied to the concatenated heads.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionParams {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
    pub output: ParamId,
    pub heads: usize,
    pub d_model: usize,
    pub d_k: usize,
    pub d_v: usize,
}

impl AttentionParams {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads > 0 && d_model % heads == 0, "d_model must split evenly across heads");
        let d_k = d_model / heads;
        let query = store.add_uniform(format!("{name}.query"), d_model, heads * d_k, d_model, rng);
        let key = store.add_uniform(format!("{name}.key"), d_model, heads * d_k, d_model, rng);
        let value = store.add_uniform(format!("{name}.value"), d_model, heads * d_k, d_model, rng);
        let output = store.add_uniform(format!("{name}.output"), heads * d_k, d_model, heads * d_k, rng);
        Self {
            query,
            key,
            value,
            output,
            heads,
            d_model,
            d_k,
            d_v: d_k,
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Bound,
        z: Var,
        batch: usize,
        steps: usize,
    ) -> Result<Var> {
        Ok(self.forward_traced(g, p, z, batch, steps)?.0)
    }

    /// Like [`forward`](Self::forward) but also returns the `steps × steps`
    /// attention weights for every (sample, head), sample-major.
    pub fn forward_traced(
        &self,
        g: &mut Graph,
        p: &Bound,
        z: Var,
        batch: usize,
        steps: usize,
    ) -> Result<(Var, Vec<Var>)> {
        let (r, c) = (g.value(z).rows(), g.value(z).cols());
        if r != batch * steps || c != self.d_model {
            return shape_err(
                "attention",
                format!("input {r}x{c} for batch {batch} x {steps} steps of {}", self.d_model),
            );
        }
        let q = g.matmul(z, p.var(self.query))?;
        let k = g.matmul(z, p.var(self.key))?;
        let v = g.matmul(z, p.var(self.value))?;
        let scale = 1.0 / (self.d_k as f64).sqrt();
        let mut samples = Vec::with_capacity(batch);
        let mut weights = Vec::with_capacity(batch * self.heads);
        for b in 0..batch {
            let rows = b * steps..(b + 1) * steps;
            let mut heads = Vec::with_capacity(self.heads);
            for h in 0..self.heads {
                let kc = h * self.d_k..(h + 1) * self.d_k;
                let vc = h * self.d_v..(h + 1) * self.d_v;
                let qh = g.slice(q, rows.clone(), kc.clone())?;
                let kh = g.slice(k, rows.clone(), kc)?;
                let vh = g.slice(v, rows.clone(), vc)?;
                let scores = g.matmul_nt(qh, kh)?;
                let scores = g.scale(scores, scale)?;
                let w = g.softmax_rows(scores)?;
                weights.push(w);
                heads.push(g.matmul(w, vh)?);
            }
            samples.push(g.concat_cols(&heads)?);
        }
        let cat = g.concat_rows(&samples)?;
        Ok((g.matmul(cat, p.var(self.output))?, weights))
    }
}

/// Row-wise layer normalization with learned gain and shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::full(1, dim, 1.0));
        let shift = store.add(format!("{name}.shift"), Tensor::zeros(1, dim));
        Self {
            gain,
            shift,
            eps: 1e-5,
        }
    }

    pub fn forward(&self, g: &mut Graph, p: &Bound, x: Var) -> Result<Var> {
        g.layer_norm(x, p.var(self.gain), p.var(self.shift), self.eps)
    }
}

/// Post-norm encoder block: attention and a ReLU feed-forward network, each
/// wrapped in dropout, a residual connection and layer normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderLayer {
    pub attention: AttentionParams,
    pub norm1: LayerNorm,
    pub ff1: Dense,
    pub ff2: Dense,
    pub norm2: LayerNorm,
    pub dropout: f64,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        heads: usize,
        d_ff: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            attention: AttentionParams::new(store, &format!("{name}.attn"), d_model, heads, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            ff1: Dense::new(store, &format!("{name}.ff1"), d_model, d_ff, rng),
            ff2: Dense::new(store, &format!("{name}.ff2"), d_ff, d_model, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
            dropout,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &Bound,
        x: Var,
        batch: usize,
        steps: usize,
        rng: &mut R,
    ) -> Result<Var> {
        let a = self.attention.forward(g, p, x, batch, steps)?;
        let a = g.dropout(a, self.dropout, rng)?;
        let x = g.add(x, a)?;
        let x = self.norm1.forward(g, p, x)?;
        let f = self.ff1.forward(g, p, x)?;
        let f = g.relu(f)?;
        let f = self.ff2.forward(g, p, f)?;
        let f = g.dropout(f, self.dropout, rng)?;
        let x = g.add(x, f)?;
        self.norm2.forward(g, p, x)
    }
}

/// Sinusoidal position table: `P[t, 2i] = sin(t / 10000^(2i/d))` and
/// `P[t, 2i+1] = cos(t / 10000^(2i/d))`.
pub fn positional_encoding(steps: usize, d: usize) -> Result<Tensor> {
    if d == 0 || d % 2 != 0 {
        return shape_err("positional_encoding", format!("dimension {d} must be even"));
    }
    let mut p = Tensor::zeros(steps, d);
    for t in 0..steps {
        for i in 0..d / 2 {
            let angle = t as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            p.set(t, 2 * i, angle.sin());
            p.set(t, 2 * i + 1, angle.cos());
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn dense_identity_and_constant() {
        let mut store = ParamStore::new();
        let d = Dense::new(&mut store, "d", 3, 3, &mut rng());
        *store.get_mut(d.weight) = Tensor::identity(3);
        *store.get_mut(d.bias) = Tensor::zeros(1, 3);
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let x = g.leaf(Tensor::row(vec![1.0, -2.0, 0.5])).unwrap();
        let y = d.forward(&mut g, &p, x).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, -2.0, 0.5]);

        *store.get_mut(d.weight) = Tensor::zeros(3, 3);
        *store.get_mut(d.bias) = Tensor::row(vec![4.0, 5.0, 6.0]);
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let x = g.leaf(Tensor::row(vec![1.0, -2.0, 0.5])).unwrap();
        let y = d.forward(&mut g, &p, x).unwrap();
        assert_eq!(g.value(y).data(), &[4.0, 5.0, 6.0]);
    }

    #[test]
    fn conv_unit_and_difference_kernels() {
        let mut store = ParamStore::new();
        let c = Conv1d::new(&mut store, "c", 1, 1, 2, false, &mut rng());
        *store.get_mut(c.kernel) = Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap();
        *store.get_mut(c.bias) = Tensor::zeros(1, 1);
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let x = g.leaf(Tensor::matrix(5, 1, vec![1., 2., 3., 4., 5.]).unwrap()).unwrap();
        let (y, len) = c.forward(&mut g, &p, x, 1, 5).unwrap();
        assert_eq!(len, 4);
        assert_eq!(g.value(y).data(), &[-1.0; 4]);

        let mut store = ParamStore::new();
        let c = Conv1d::new(&mut store, "c", 1, 1, 1, false, &mut rng());
        *store.get_mut(c.kernel) = Tensor::scalar(1.0);
        *store.get_mut(c.bias) = Tensor::zeros(1, 1);
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let x = g.leaf(Tensor::matrix(3, 1, vec![7., -8., 9.]).unwrap()).unwrap();
        let (y, _) = c.forward(&mut g, &p, x, 1, 3).unwrap();
        assert_eq!(g.value(y).data(), &[7., -8., 9.]);
    }

    #[test]
    fn conv_rejects_short_input() {
        let mut store = ParamStore::new();
        let c = Conv1d::new(&mut store, "c", 1, 2, 4, true, &mut rng());
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let x = g.leaf(Tensor::zeros(3, 1)).unwrap();
        assert!(c.forward(&mut g, &p, x, 1, 3).is_err());
    }

    fn zeroed_lstm(d: usize, h: usize) -> (ParamStore, LstmParams) {
        let mut store = ParamStore::new();
        let l = LstmParams::new(&mut store, "l", d, h, &mut rng());
        *store.get_mut(l.input) = Tensor::zeros(d, 4 * h);
        *store.get_mut(l.recurrent) = Tensor::zeros(h, 4 * h);
        *store.get_mut(l.bias) = Tensor::zeros(1, 4 * h);
        (store, l)
    }

    #[test]
    fn lstm_step_with_zero_params() {
        let (store, l) = zeroed_lstm(2, 3);
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let x = g.leaf(Tensor::row(vec![0.3, -0.7])).unwrap();
        let h0 = g.leaf(Tensor::row(vec![0.1, 0.2, 0.3])).unwrap();
        let c0 = g.leaf(Tensor::row(vec![1.0, -2.0, 4.0])).unwrap();
        let (h, c) = l.step(&mut g, &p, x, h0, c0).unwrap();
        for j in 0..3 {
            let cp = g.value(c0).data()[j];
            let ct = g.value(c).data()[j];
            assert!((ct - 0.5 * cp).abs() < 1e-15);
            assert!((g.value(h).data()[j] - 0.5 * ct.tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn lstm_saturated_forget_gate_keeps_memory() {
        let (mut store, l) = zeroed_lstm(1, 2);
        let mut bias = vec![0.0; 8];
        bias[0] = 0.4; // z pre-activation
        bias[4] = 50.0;
        bias[5] = 50.0;
        *store.get_mut(l.bias) = Tensor::row(bias);
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let x = g.leaf(Tensor::row(vec![1.0])).unwrap();
        let h0 = g.leaf(Tensor::zeros(1, 2)).unwrap();
        let c0 = g.leaf(Tensor::row(vec![3.0, -1.0])).unwrap();
        let (_, c) = l.step(&mut g, &p, x, h0, c0).unwrap();
        let c = g.value(c).data();
        let i = 0.5;
        assert!((c[0] - (i * 0.4f64.tanh() + 3.0)).abs() < 1e-12);
        assert!((c[1] - (-1.0)).abs() < 1e-12);
    }

    #[test]
    fn lstm_hidden_state_bounded() {
        let mut store = ParamStore::new();
        let l = LstmParams::new(&mut store, "l", 3, 4, &mut rng());
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let data: Vec<f64> = (0..2 * 6 * 3).map(|k| (k as f64 * 0.37).sin() * 5.0).collect();
        let x = g.leaf(Tensor::matrix(12, 3, data).unwrap()).unwrap();
        let hs = l.sequence(&mut g, &p, x, 2, 6, false).unwrap();
        assert_eq!(hs.len(), 6);
        for h in hs {
            assert!(g.value(h).data().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn sequence_matches_explicit_steps() {
        let mut store = ParamStore::new();
        let l = LstmParams::new(&mut store, "l", 2, 3, &mut rng());
        let xs: Vec<f64> = (0..8).map(|k| (k as f64).cos()).collect();
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let x = g.leaf(Tensor::matrix(4, 2, xs.clone()).unwrap()).unwrap();
        let hs = l.sequence(&mut g, &p, x, 1, 4, false).unwrap();
        let mut h = g.leaf(Tensor::zeros(1, 3)).unwrap();
        let mut c = g.leaf(Tensor::zeros(1, 3)).unwrap();
        for t in 0..4 {
            let xt = g.leaf(Tensor::row(xs[2 * t..2 * t + 2].to_vec())).unwrap();
            (h, c) = l.step(&mut g, &p, xt, h, c).unwrap();
            for (a, b) in g.value(h).data().iter().zip(g.value(hs[t]).data()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn single_token_attention_is_value_projection() {
        let mut store = ParamStore::new();
        let a = AttentionParams::new(&mut store, "a", 4, 2, &mut rng());
        let z = Tensor::row(vec![0.5, -1.0, 2.0, 0.25]);
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let zv = g.leaf(z.clone()).unwrap();
        let (y, w) = a.forward_traced(&mut g, &p, zv, 1, 1).unwrap();
        assert!(w.iter().all(|w| g.value(*w).data() == [1.0]));
        let expected = z
            .matmul(store.get(a.value))
            .unwrap()
            .matmul(store.get(a.output))
            .unwrap();
        for (u, v) in g.value(y).data().iter().zip(expected.data()) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_tokens_attend_uniformly() {
        let mut store = ParamStore::new();
        let a = AttentionParams::new(&mut store, "a", 4, 2, &mut rng());
        let row = [0.3, 0.1, -0.4, 0.9];
        let data: Vec<f64> = (0..5).flat_map(|_| row).collect();
        let mut g = Graph::new();
        let p = store.bind(&mut g).unwrap();
        let z = g.leaf(Tensor::matrix(5, 4, data).unwrap()).unwrap();
        let (_, w) = a.forward_traced(&mut g, &p, z, 1, 5).unwrap();
        for w in w {
            assert!(g.value(w).data().iter().all(|x| (x - 0.2).abs() < 1e-12));
        }
    }

    #[test]
    fn positional_encoding_values() {
        let p = positional_encoding(512, 64).unwrap();
        for i in 0..32 {
            assert_eq!(p.get(0, 2 * i), 0.0);
            assert_eq!(p.get(0, 2 * i + 1), 1.0);
        }
        for t in 0..512 {
            assert_eq!(p.get(t, 0), (t as f64).sin());
        }
        assert!(p.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(positional_encoding(4, 3).is_err());
    }
}
