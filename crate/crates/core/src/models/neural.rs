//! Recurrent, convolutional, attention and linear forecasters on the
//! autodiff engine.

use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sparseload_nn::layers::{positional_encoding, BiLstm, Conv1d, Dense, EncoderLayer, LstmParams};
use sparseload_nn::{Adam, Bound, ControlAction, Graph, NnError, ParamStore, Tensor, TrainController, Var};

use crate::data::{MinMaxParams, FEATURE_NAMES, LOAD_INDEX, N_FEATURES};
use crate::error::{Error, Result};
use crate::rng::{self, SeededRng};
use crate::windowing::WindowedDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NeuralVariant {
    Lstm,
    BiLstm,
    CnnLstm,
    CnnBiLstm,
    Transformer,
    DLinear,
}

/// Architecture hyperparameters. The defaults are the full published sizes;
/// [`ArchSpec::desk`] shrinks the transformer depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchSpec {
    pub variant: NeuralVariant,
    pub hidden_units: usize,
    /// Output channels of the two convolution blocks.
    pub conv_channels: Vec<usize>,
    /// Temporal kernel width of each convolution.
    pub conv_width: usize,
    pub embed_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_dim: usize,
    pub dlinear_kernel: usize,
    pub dropout: f64,
    pub seq_len: usize,
    pub pred_len: usize,
}

impl Default for ArchSpec {
    fn default() -> Self {
        Self {
            variant: NeuralVariant::Lstm,
            hidden_units: 128,
            conv_channels: vec![64, 128],
            conv_width: 3,
            embed_dim: 64,
            heads: 4,
            layers: 12,
            ff_dim: 256,
            dlinear_kernel: 25,
            dropout: 0.2,
            seq_len: 64,
            pred_len: 1,
        }
    }
}

impl ArchSpec {
    pub fn new(variant: NeuralVariant) -> Self {
        Self { variant, ..Default::default() }
    }

    /// Desk-scale sizes: two encoder layers instead of twelve.
    pub fn desk(variant: NeuralVariant) -> Self {
        Self { variant, layers: 2, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_units", self.hidden_units),
            ("conv_width", self.conv_width),
            ("embed_dim", self.embed_dim),
            ("heads", self.heads),
            ("layers", self.layers),
            ("ff_dim", self.ff_dim),
            ("dlinear_kernel", self.dlinear_kernel),
            ("seq_len", self.seq_len),
            ("pred_len", self.pred_len),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Range(format!("{name} must be positive")));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(Error::Range("conv_channels must be non-empty and positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Range(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.embed_dim % self.heads != 0 || self.embed_dim % 2 != 0 {
            return Err(Error::Range("embed_dim must be even and divisible by heads".into()));
        }
        let shrink = self.conv_channels.len() * (self.conv_width - 1);
        if matches!(self.variant, NeuralVariant::CnnLstm | NeuralVariant::CnnBiLstm)
            && self.seq_len <= shrink
        {
            return Err(Error::Range(format!(
                "seq_len {} too short for {} convolutions of width {}",
                self.seq_len,
                self.conv_channels.len(),
                self.conv_width
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub plateau_patience: usize,
    pub lr_factor: f64,
    pub early_stop_patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 40,
            learning_rate: 1e-4,
            plateau_patience: 3,
            lr_factor: 0.5,
            early_stop_patience: 10,
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Debug, Clone)]
enum Recurrent {
    Uni(LstmParams),
    Bi(BiLstm),
}

#[derive(Debug, Clone)]
enum Network {
    Recurrent { convs: Vec<Conv1d>, rnn: Recurrent, head: Dense },
    Transformer { embed: Dense, layers: Vec<EncoderLayer>, head: Dense, positions: Tensor },
    DLinear { trend: Dense, remainder: Dense, average: Tensor },
}

/// `T × T` matrix `A` with `x·A` the moving average of each row of `x`,
/// padding both ends by repeating the edge value.
fn moving_average_matrix(steps: usize, kernel: usize) -> Tensor {
    let mut a = Tensor::zeros(steps, steps);
    let front = (kernel - 1) / 2;
    for t in 0..steps {
        for k in 0..kernel {
            let src = (t + k).saturating_sub(front).min(steps - 1);
            let idx = src * steps + t;
            a.data_mut()[idx] += 1.0 / kernel as f64;
        }
    }
    a
}

impl Network {
    fn build(spec: &ArchSpec, features: usize, store: &mut ParamStore, rng: &mut SeededRng) -> Self {
        let h = spec.hidden_units;
        let recurrent = |store: &mut ParamStore, rng: &mut SeededRng, inputs: usize, bi: bool| {
            if bi {
                Recurrent::Bi(BiLstm::new(store, "bilstm", inputs, h, rng))
            } else {
                Recurrent::Uni(LstmParams::new(store, "lstm", inputs, h, rng))
            }
        };
        match spec.variant {
            NeuralVariant::Lstm | NeuralVariant::BiLstm => {
                let bi = spec.variant == NeuralVariant::BiLstm;
                let rnn = recurrent(store, rng, features, bi);
                let head = Dense::new(store, "head", if bi { 2 * h } else { h }, spec.pred_len, rng);
                Network::Recurrent { convs: vec![], rnn, head }
            }
            NeuralVariant::CnnLstm | NeuralVariant::CnnBiLstm => {
                let bi = spec.variant == NeuralVariant::CnnBiLstm;
                let mut convs = Vec::new();
                let mut cin = features;
                for (i, &cout) in spec.conv_channels.iter().enumerate() {
                    convs.push(Conv1d::new(store, &format!("conv{i}"), cin, cout, spec.conv_width, true, rng));
                    cin = cout;
                }
                let rnn = recurrent(store, rng, cin, bi);
                let head = Dense::new(store, "head", if bi { 2 * h } else { h }, spec.pred_len, rng);
                Network::Recurrent { convs, rnn, head }
            }
            NeuralVariant::Transformer => {
                let d = spec.embed_dim;
                let embed = Dense::new(store, "embed", features, d, rng);
                let layers = (0..spec.layers)
                    .map(|i| {
                        EncoderLayer::new(store, &format!("enc{i}"), d, spec.heads, spec.ff_dim, spec.dropout, rng)
                    })
                    .collect();
                let head = Dense::new(store, "head", d, spec.pred_len, rng);
                let positions = positional_encoding(spec.seq_len, d).expect("validated even dimension");
                Network::Transformer { embed, layers, head, positions }
            }
            NeuralVariant::DLinear => {
                let t = spec.seq_len;
                Network::DLinear {
                    trend: Dense::new(store, "trend", t, spec.pred_len, rng),
                    remainder: Dense::new(store, "remainder", t, spec.pred_len, rng),
                    average: moving_average_matrix(t, spec.dlinear_kernel),
                }
            }
        }
    }

    /// Forward pass over `windows`, each `seq_len` rows of scaled features.
    /// Returns a `batch × pred_len` output.
    fn forward(
        &self,
        spec: &ArchSpec,
        g: &mut Graph,
        p: &Bound,
        windows: &[&[[f64; N_FEATURES]]],
        rng: &mut SeededRng,
    ) -> std::result::Result<Var, NnError> {
        let batch = windows.len();
        let steps = spec.seq_len;
        let dropout = |g: &mut Graph, v: Var, rng: &mut SeededRng| {
            if spec.dropout > 0.0 {
                g.dropout(v, spec.dropout, rng)
            } else {
                Ok(v)
            }
        };
        match self {
            Network::DLinear { trend, remainder, average } => {
                let loads: Vec<f64> =
                    windows.iter().flat_map(|w| w.iter().map(|r| r[LOAD_INDEX])).collect();
                let x = g.leaf(Tensor::matrix(batch, steps, loads)?)?;
                let a = g.leaf(average.clone())?;
                let tr = g.matmul(x, a)?;
                let rem = g.sub(x, tr)?;
                let yt = trend.forward(g, p, tr)?;
                let yr = remainder.forward(g, p, rem)?;
                g.add(yt, yr)
            }
            _ => {
                let data: Vec<f64> = windows.iter().flat_map(|w| w.iter().flatten().copied()).collect();
                let x = g.leaf(Tensor::matrix(batch * steps, N_FEATURES, data)?)?;
                match self {
                    Network::Recurrent { convs, rnn, head } => {
                        let mut h = x;
                        let mut len = steps;
                        for c in convs {
                            (h, len) = c.forward(g, p, h, batch, len)?;
                        }
                        let last = match rnn {
                            Recurrent::Uni(l) => {
                                let hs = l.sequence(g, p, h, batch, len, false)?;
                                hs[len - 1]
                            }
                            Recurrent::Bi(b) => {
                                let f = b.forward.sequence(g, p, h, batch, len, false)?;
                                let r = b.backward.sequence(g, p, h, batch, len, true)?;
                                g.concat_cols(&[f[len - 1], r[0]])?
                            }
                        };
                        let last = dropout(g, last, rng)?;
                        head.forward(g, p, last)
                    }
                    Network::Transformer { embed, layers, head, positions } => {
                        let z = embed.forward(g, p, x)?;
                        let d = positions.cols();
                        let tiled: Vec<f64> =
                            (0..batch).flat_map(|_| positions.data().iter().copied()).collect();
                        let pe = g.leaf(Tensor::matrix(batch * steps, d, tiled)?)?;
                        let mut z = g.add(z, pe)?;
                        for layer in layers {
                            z = layer.forward(g, p, z, batch, steps, rng)?;
                        }
                        let idx: Vec<usize> = (0..batch).map(|b| b * steps + steps - 1).collect();
                        let last = g.select_rows(z, &idx)?;
                        head.forward(g, p, last)
                    }
                    Network::DLinear { .. } => unreachable!(),
                }
            }
        }
    }
}

/// A trained neural forecaster with the scaler its inputs were built with.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub spec: ArchSpec,
    pub scaler: MinMaxParams,
    pub params: ParamStore,
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    network: Network,
}

/// Serialized description stored as the container's architecture tag.
#[derive(Serialize, Deserialize)]
struct Header {
    spec: ArchSpec,
    scaler: MinMaxParams,
    best_epoch: usize,
    history: Vec<EpochLog>,
}

fn training_error(epoch: usize) -> impl Fn(NnError) -> Error {
    move |e| Error::Training { epoch, detail: e.to_string() }
}

fn target_tensor(ds: &WindowedDataset, idx: &[usize]) -> Result<Tensor> {
    let pred = ds.config.pred_len;
    let data: Vec<f64> = idx.iter().flat_map(|&w| ds.target(w)).collect();
    Ok(Tensor::matrix(idx.len(), pred, data)?)
}

const EVAL_BATCH: usize = 256;

impl NeuralModel {
    fn check_dataset(spec: &ArchSpec, ds: &WindowedDataset) -> Result<()> {
        if ds.config.seq_len != spec.seq_len || ds.config.pred_len != spec.pred_len {
            return Err(Error::Schema(format!(
                "dataset windows {}→{} differ from architecture {}→{}",
                ds.config.seq_len, ds.config.pred_len, spec.seq_len, spec.pred_len
            )));
        }
        Ok(())
    }

    /// Trains with MSE, Adam and plateau/early-stop control, keeping the
    /// parameters with the lowest validation loss.
    pub fn train(
        spec: &ArchSpec,
        ds: &WindowedDataset,
        train: Range<usize>,
        val: Range<usize>,
        cfg: &TrainConfig,
        seed: u64,
    ) -> Result<Self> {
        spec.validate()?;
        Self::check_dataset(spec, ds)?;
        if train.is_empty() || val.is_empty() {
            return Err(Error::Range("training and validation splits must be non-empty".into()));
        }
        if cfg.batch_size == 0 || cfg.epochs == 0 || !(cfg.learning_rate > 0.0) {
            return Err(Error::Range("batch size, epochs and learning rate must be positive".into()));
        }
        let mut rng = rng::seeded(seed);
        let mut params = ParamStore::new();
        let network = Network::build(spec, N_FEATURES, &mut params, &mut rng);
        let mut model = NeuralModel {
            spec: spec.clone(),
            scaler: ds.scaler.clone(),
            params,
            history: Vec::new(),
            best_epoch: 0,
            network,
        };
        let mut best = model.params.clone();
        let mut adam = Adam::new(cfg.learning_rate);
        let mut ctrl = TrainController::new(cfg.plateau_patience, cfg.lr_factor, cfg.early_stop_patience);
        let mut order: Vec<usize> = train.collect();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let loss = model.train_batch(ds, chunk, &mut adam, &mut rng).map_err(training_error(epoch))?;
                total += loss * chunk.len() as f64;
            }
            let train_loss = total / order.len() as f64;
            let val_loss = model.loss(ds, val.clone()).map_err(|e| match e {
                Error::Nn(n) => training_error(epoch)(n),
                other => other,
            })?;
            if !train_loss.is_finite() || !val_loss.is_finite() {
                return Err(Error::Training { epoch, detail: "loss is not finite".into() });
            }
            model.history.push(EpochLog { epoch, train_loss, val_loss, learning_rate: adam.lr() });
            log::debug!("{:?} epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e}", spec.variant);
            let action = ctrl.step(val_loss);
            if ctrl.improved() {
                best.assign(&model.params)?;
                model.best_epoch = epoch;
            }
            match action {
                ControlAction::Continue => {}
                ControlAction::ReduceLr => adam.set_lr(adam.lr() * cfg.lr_factor),
                ControlAction::Stop => break,
            }
        }
        model.params = best;
        Ok(model)
    }

    fn train_batch(
        &mut self,
        ds: &WindowedDataset,
        idx: &[usize],
        adam: &mut Adam,
        rng: &mut SeededRng,
    ) -> std::result::Result<f64, NnError> {
        let windows: Vec<&[[f64; N_FEATURES]]> = idx.iter().map(|&w| ds.input(w)).collect();
        let pred = ds.config.pred_len;
        let data: Vec<f64> = idx.iter().flat_map(|&w| ds.target(w)).collect();
        let target = Tensor::matrix(idx.len(), pred, data)?;
        let mut g = Graph::training();
        let p = self.params.bind(&mut g)?;
        let y = self.network.forward(&self.spec, &mut g, &p, &windows, rng)?;
        let loss = g.mse(y, &target)?;
        let value = g.value(loss).data()[0];
        let mut grads = g.backward(loss)?;
        let grads: Vec<Tensor> = p
            .vars()
            .iter()
            .zip(self.params.tensors())
            .map(|(v, t)| grads.take(*v).unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
            .collect();
        adam.step(&mut self.params, &grads)?;
        Ok(value)
    }

    /// Raw (scaled) head outputs for a batch of windows, evaluation mode.
    fn raw(&self, windows: &[&[[f64; N_FEATURES]]]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g)?;
        // Dropout is inactive outside training, so the stream is never drawn.
        let mut unused = rng::seeded(0);
        let y = self.network.forward(&self.spec, &mut g, &p, windows, &mut unused)?;
        Ok(g.value(y).data().to_vec())
    }

    /// Mean squared error on scaled targets over `windows`.
    pub fn loss(&self, ds: &WindowedDataset, windows: Range<usize>) -> Result<f64> {
        let idx: Vec<usize> = windows.collect();
        let mut total = 0.0;
        for chunk in idx.chunks(EVAL_BATCH) {
            let inputs: Vec<&[[f64; N_FEATURES]]> = chunk.iter().map(|&w| ds.input(w)).collect();
            let out = self.raw(&inputs)?;
            let target = target_tensor(ds, chunk)?;
            total += out.iter().zip(target.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        }
        Ok(total / (idx.len() * ds.config.pred_len) as f64)
    }

    /// Scaled head output for a single window, before de-normalization.
    pub fn raw_forecast(&self, feature_names: &[&str], window: &[[f64; N_FEATURES]]) -> Result<f64> {
        if feature_names != FEATURE_NAMES || self.scaler.names.iter().map(String::as_str).ne(feature_names.iter().copied()) {
            return Err(Error::Schema(format!("features {feature_names:?} differ from the model's")));
        }
        if window.len() != self.spec.seq_len {
            return Err(Error::Schema(format!(
                "window has {} rows, model expects {}",
                window.len(),
                self.spec.seq_len
            )));
        }
        Ok(self.raw(&[window])?[0])
    }

    /// One-step forecast in kW for a single scaled window.
    pub fn forecast(&self, feature_names: &[&str], window: &[[f64; N_FEATURES]]) -> Result<f64> {
        let raw = self.raw_forecast(feature_names, window)?;
        Ok(self.scaler.unscale_value(LOAD_INDEX, raw))
    }

    /// First-step forecasts in kW for every window in `windows`.
    pub fn predict(&self, ds: &WindowedDataset, windows: Range<usize>) -> Result<Vec<f64>> {
        Self::check_dataset(&self.spec, ds)?;
        if ds.scaler != self.scaler {
            return Err(Error::Schema("dataset was scaled with a different scaler".into()));
        }
        let idx: Vec<usize> = windows.collect();
        let mut out = Vec::with_capacity(idx.len());
        for chunk in idx.chunks(EVAL_BATCH) {
            let inputs: Vec<&[[f64; N_FEATURES]]> = chunk.iter().map(|&w| ds.input(w)).collect();
            let raw = self.raw(&inputs)?;
            let pred = self.spec.pred_len;
            out.extend(raw.chunks(pred).map(|r| self.scaler.unscale_value(LOAD_INDEX, r[0])));
        }
        Ok(out)
    }

    pub fn save<W: std::io::Write>(&self, w: W) -> Result<()> {
        let header = Header {
            spec: self.spec.clone(),
            scaler: self.scaler.clone(),
            best_epoch: self.best_epoch,
            history: self.history.clone(),
        };
        sparseload_nn::write_params(w, &serde_json::to_string(&header)?, &self.params)?;
        Ok(())
    }

    pub fn load<R: std::io::Read>(r: R) -> Result<Self> {
        let (tag, stored) = sparseload_nn::read_params(r)?;
        let header: Header = serde_json::from_str(&tag)?;
        header.spec.validate()?;
        let mut params = ParamStore::new();
        let network = Network::build(&header.spec, N_FEATURES, &mut params, &mut rng::seeded(0));
        params.assign(&stored)?;
        Ok(NeuralModel {
            spec: header.spec,
            scaler: header.scaler,
            params,
            history: header.history,
            best_epoch: header.best_epoch,
            network,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_is_exact_split() {
        let a = moving_average_matrix(10, 5);
        let x = Tensor::row((0..10).map(|v| (v * v) as f64).collect());
        let trend = x.matmul(&a).unwrap();
        // Interior point: plain 5-point mean.
        let m: f64 = [9.0, 16.0, 25.0, 36.0, 49.0].iter().sum::<f64>() / 5.0;
        assert!((trend.data()[5] - m).abs() < 1e-12);
        // First point: replicate padding of x[0] twice.
        let m0 = (0.0 + 0.0 + 0.0 + 1.0 + 4.0) / 5.0;
        assert!((trend.data()[0] - m0).abs() < 1e-12);
        // Each column sums to one, so constants are preserved.
        for c in 0..10 {
            let s: f64 = (0..10).map(|r| a.get(r, c)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(ArchSpec::default().validate().is_ok());
        let bad = ArchSpec { variant: NeuralVariant::CnnLstm, seq_len: 4, ..Default::default() };
        assert!(bad.validate().is_err());
        assert!(ArchSpec { heads: 3, ..Default::default() }.validate().is_err());
    }
}
