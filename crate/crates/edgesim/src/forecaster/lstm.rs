//! Single-layer LSTM trained from scratch with truncated backpropagation
//! through time over a sliding input window.
//!
//! The recurrence is the standard one. With input scalar `x_t`, hidden state
//! `h` and cell state `c` of size `H`:
//!
//! ```text
//! i_t = sigmoid(wx_i x_t + Wh_i h_{t-1} + b_i)
//! f_t = sigmoid(wx_f x_t + Wh_f h_{t-1} + b_f)
//! g_t = tanh   (wx_g x_t + Wh_g h_{t-1} + b_g)
//! o_t = sigmoid(wx_o x_t + Wh_o h_{t-1} + b_o)
//! c_t = f_t * c_{t-1} + i_t * g_t
//! h_t = o_t * tanh(c_t)
//! ```
//!
//! The final hidden state is projected to `horizon` outputs by a linear
//! head, trained with mean-squared error and plain gradient descent.
//! Gradients are clipped to a global L2 norm of 5.0 per update.
//!
//! All parameters live in one flat `f64` vector, laid out as
//! `wx_i | wx_f | wx_g | wx_o | Wh_i | Wh_f | Wh_g | Wh_o | b_i | b_f | b_g
//! | b_o | Wy | by` with the `Wh_*` matrices row-major (gate unit, then
//! previous hidden index) and `Wy` row-major (output step, then hidden
//! index). The binary model format serializes this vector little-endian
//! after a fixed header (see [`LstmModel::save`]).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

use super::{smooth_centered, Normalization, SeriesWindow};

/// Magic bytes opening the binary model format.
pub const MODEL_MAGIC: [u8; 4] = *b"ESLM";
/// Current binary model format version.
pub const MODEL_VERSION: u32 = 1;
/// Global L2 gradient-norm clip threshold.
pub const GRAD_CLIP_NORM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum LstmError {
    #[error("series too short: need at least {needed} points, got {got}")]
    SeriesTooShort { needed: usize, got: usize },
    #[error("input window length {got} does not match model window {expected}")]
    WindowMismatch { expected: usize, got: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, pair {pair}")]
    NonFiniteLoss { epoch: usize, pair: usize, loss: f64 },
    #[error("non-finite parameter after epoch {epoch}")]
    NonFiniteParameter { epoch: usize },
    #[error("invalid hyperparameter: {0}")]
    BadConfig(String),
    #[error("model io: {0}")]
    Io(#[from] std::io::Error),
    #[error("not an edgesim model file (bad magic)")]
    BadMagic,
    #[error("unsupported model version {0}")]
    UnsupportedVersion(u32),
}

/// LSTM hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmConfig {
    pub hidden_size: usize,
    /// Input window length, in buckets.
    pub window: usize,
    /// Forecast length, in buckets.
    pub horizon: usize,
    pub learning_rate: f64,
    /// Maximum training epochs; early stopping may use fewer.
    pub epochs: usize,
    /// Centered moving-average width used for noise reduction, in buckets.
    pub smoothing_window: usize,
    /// Stop when validation loss has not improved for this many epochs.
    pub patience: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            window: 60,
            horizon: 5,
            learning_rate: 0.05,
            epochs: 200,
            smoothing_window: 5,
            patience: 15,
        }
    }
}

impl LstmConfig {
    fn validate(&self) -> Result<(), LstmError> {
        if self.hidden_size == 0 || self.window == 0 || self.horizon == 0 {
            return Err(LstmError::BadConfig(
                "hidden_size, window and horizon must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LstmError::BadConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(LstmError::BadConfig("epochs must be positive".into()));
        }
        Ok(())
    }

    fn param_count(&self) -> usize {
        let h = self.hidden_size;
        4 * h + 4 * h * h + 4 * h + self.horizon * h + self.horizon
    }
}

// Gate order used throughout: input, forget, candidate, output.
const GATES: usize = 4;

/// Offsets into the flat parameter vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    h: usize,
    horizon: usize,
}

impl Layout {
    fn wx(&self, gate: usize) -> usize {
        gate * self.h
    }
    fn wh(&self, gate: usize) -> usize {
        GATES * self.h + gate * self.h * self.h
    }
    fn b(&self, gate: usize) -> usize {
        GATES * self.h + GATES * self.h * self.h + gate * self.h
    }
    fn wy(&self) -> usize {
        GATES * self.h + GATES * self.h * self.h + GATES * self.h
    }
    fn by(&self) -> usize {
        self.wy() + self.horizon * self.h
    }
}

/// A trained (or freshly initialized) LSTM forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub config: LstmConfig,
    /// Scaling fitted on the training split; predictions denormalize with it.
    pub normalization: Normalization,
    /// Width of the buckets the model was trained on (s).
    pub bucket_width_s: f64,
    params: Vec<f64>,
}

/// Per-epoch loss record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LstmModel,
    pub history: Vec<EpochLoss>,
    /// Epoch whose validation loss was kept (early stopping restores it).
    pub best_epoch: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// Four-accumulator dot product; keeps the inner loops vectorizable.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0_f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let k = i * 4;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in chunks * 4..a.len() {
        tail += a[k] * b[k];
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

// y += s * x
#[inline]
fn axpy(y: &mut [f64], s: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

impl LstmModel {
    /// Initializes parameters uniformly in (-1/sqrt(H), 1/sqrt(H)),
    /// deterministically from the seed.
    pub fn init(config: LstmConfig, seed: u64) -> Result<Self, LstmError> {
        config.validate()?;
        let scale = 1.0 / (config.hidden_size as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..config.param_count())
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        Ok(Self {
            config,
            normalization: Normalization { min: 0.0, max: 1.0 },
            bucket_width_s: 60.0,
            params,
        })
    }

    /// Zero-initialized model; with all-zero parameters every prediction is 0.
    pub fn zeroed(config: LstmConfig) -> Result<Self, LstmError> {
        config.validate()?;
        let params = vec![0.0; config.param_count()];
        Ok(Self {
            config,
            normalization: Normalization { min: 0.0, max: 1.0 },
            bucket_width_s: 60.0,
            params,
        })
    }

    fn layout(&self) -> Layout {
        Layout {
            h: self.config.hidden_size,
            horizon: self.config.horizon,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Adds `delta` to one parameter. Intended for finite-difference checks.
    pub fn nudge_param(&mut self, index: usize, delta: f64) {
        self.params[index] += delta;
    }

    /// Forward pass over a normalized window, producing `horizon` normalized
    /// outputs. Identical inputs and parameters give identical outputs.
    pub fn forward(&self, window: &[f64]) -> Result<Vec<f64>, LstmError> {
        if window.len() != self.config.window {
            return Err(LstmError::WindowMismatch {
                expected: self.config.window,
                got: window.len(),
            });
        }
        let mut ws = Workspace::new(&self.config);
        self.forward_into(window, &mut ws);
        let lay = self.layout();
        let h_last = &ws.h[(window.len() - 1) * lay.h..window.len() * lay.h];
        Ok(self.project(h_last))
    }

    /// Prediction against a preprocessed window: runs the forward pass and
    /// denormalizes, clamping rates at zero.
    pub fn predict(&self, window: &SeriesWindow) -> Result<Vec<f64>, LstmError> {
        let y = self.forward(&window.values)?;
        Ok(y
            .iter()
            .map(|&v| self.normalization.denormalize(v).max(0.0))
            .collect())
    }

    /// Convenience path for the live simulation: smooths a raw rate window
    /// with the model's smoothing width, normalizes with the model's stored
    /// bounds, and predicts. `raw` must hold at least `window` points;
    /// extra leading points improve the edge behavior of the smoother.
    pub fn forecast_from_raw(&self, raw: &[f64]) -> Result<Vec<f64>, LstmError> {
        if raw.len() < self.config.window {
            return Err(LstmError::WindowMismatch {
                expected: self.config.window,
                got: raw.len(),
            });
        }
        let smoothed = smooth_centered(raw, self.config.smoothing_window);
        let tail = &smoothed[smoothed.len() - self.config.window..];
        let values: Vec<f64> = tail.iter().map(|&x| self.normalization.normalize(x)).collect();
        let y = self.forward_values(&values);
        Ok(y
            .iter()
            .map(|&v| self.normalization.denormalize(v).max(0.0))
            .collect())
    }

    fn forward_values(&self, window: &[f64]) -> Vec<f64> {
        let mut ws = Workspace::new(&self.config);
        self.forward_into(window, &mut ws);
        let lay = self.layout();
        let h_last = &ws.h[(window.len() - 1) * lay.h..window.len() * lay.h];
        self.project(h_last)
    }

    fn project(&self, h_last: &[f64]) -> Vec<f64> {
        let lay = self.layout();
        let wy = &self.params[lay.wy()..lay.by()];
        let by = &self.params[lay.by()..];
        (0..self.config.horizon)
            .map(|k| {
                let row = &wy[k * lay.h..(k + 1) * lay.h];
                by[k] + row.iter().zip(h_last).map(|(w, h)| w * h).sum::<f64>()
            })
            .collect()
    }

    /// MSE loss of one (window, target) pair of normalized values.
    pub fn loss_for(&self, window: &[f64], target: &[f64]) -> f64 {
        let y = self.forward_values(window);
        y.iter()
            .zip(target)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / target.len() as f64
    }

    /// Loss and analytic gradients for one pair, via BPTT over the window.
    pub fn gradients_for(&self, window: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
        let mut ws = Workspace::new(&self.config);
        let loss = self.backward_into(window, target, &mut ws);
        (loss, ws.grads)
    }

    fn forward_into(&self, window: &[f64], ws: &mut Workspace) {
        let lay = self.layout();
        let h = lay.h;
        let p = &self.params;
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for (t, &x) in window.iter().enumerate() {
            let base = t * h;
            for j in 0..h {
                let mut acts = [0.0_f64; GATES];
                for (gate, act) in acts.iter_mut().enumerate() {
                    let wh_row = &p[lay.wh(gate) + j * h..lay.wh(gate) + (j + 1) * h];
                    *act = p[lay.wx(gate) + j] * x + dot(wh_row, &h_prev) + p[lay.b(gate) + j];
                }
                let i = sigmoid(acts[0]);
                let f = sigmoid(acts[1]);
                let g = acts[2].tanh();
                let o = sigmoid(acts[3]);
                let c = f * c_prev[j] + i * g;
                let tc = c.tanh();
                ws.i[base + j] = i;
                ws.f[base + j] = f;
                ws.g[base + j] = g;
                ws.o[base + j] = o;
                ws.c[base + j] = c;
                ws.tanh_c[base + j] = tc;
                ws.h[base + j] = o * tc;
            }
            h_prev.copy_from_slice(&ws.h[base..base + h]);
            c_prev.copy_from_slice(&ws.c[base..base + h]);
        }
    }

    /// Full BPTT pass; returns the loss and leaves gradients in `ws.grads`.
    fn backward_into(&self, window: &[f64], target: &[f64], ws: &mut Workspace) -> f64 {
        debug_assert_eq!(window.len(), self.config.window);
        debug_assert_eq!(target.len(), self.config.horizon);
        let lay = self.layout();
        let h = lay.h;
        let steps = window.len();
        let p = &self.params;

        self.forward_into(window, ws);
        ws.grads.iter_mut().for_each(|g| *g = 0.0);

        let h_last = &ws.h[(steps - 1) * h..steps * h];
        let y = self.project(h_last);
        let mut loss = 0.0;
        let mut dh = vec![0.0; h];
        for k in 0..self.config.horizon {
            let err = y[k] - target[k];
            loss += err * err;
            let dy = 2.0 * err / target.len() as f64;
            ws.grads[lay.by() + k] += dy;
            let wy_row = &p[lay.wy() + k * h..lay.wy() + (k + 1) * h];
            for j in 0..h {
                ws.grads[lay.wy() + k * h + j] += dy * h_last[j];
                dh[j] += dy * wy_row[j];
            }
        }
        loss /= target.len() as f64;

        let mut dc = vec![0.0; h];
        let mut da = vec![0.0; GATES * h];
        let mut dh_prev = vec![0.0; h];
        for t in (0..steps).rev() {
            let base = t * h;
            let x = window[t];
            let (h_prev, c_prev): (&[f64], &[f64]) = if t == 0 {
                (ws.zeros.as_slice(), ws.zeros.as_slice())
            } else {
                (&ws.h[base - h..base], &ws.c[base - h..base])
            };
            for j in 0..h {
                let i = ws.i[base + j];
                let f = ws.f[base + j];
                let g = ws.g[base + j];
                let o = ws.o[base + j];
                let tc = ws.tanh_c[base + j];
                let dct = dc[j] + dh[j] * o * (1.0 - tc * tc);
                da[j] = dct * g * i * (1.0 - i); // input gate
                da[h + j] = dct * c_prev[j] * f * (1.0 - f); // forget gate
                da[2 * h + j] = dct * i * (1.0 - g * g); // candidate
                da[3 * h + j] = dh[j] * tc * o * (1.0 - o); // output gate
                dc[j] = dct * f;
            }
            dh_prev.iter_mut().for_each(|v| *v = 0.0);
            for gate in 0..GATES {
                let da_g = &da[gate * h..(gate + 1) * h];
                let wh_base = lay.wh(gate);
                for j in 0..h {
                    let d = da_g[j];
                    ws.grads[lay.wx(gate) + j] += d * x;
                    ws.grads[lay.b(gate) + j] += d;
                    let wh_row = &p[wh_base + j * h..wh_base + (j + 1) * h];
                    let gh_row = &mut ws.grads[wh_base + j * h..wh_base + (j + 1) * h];
                    axpy(gh_row, d, h_prev);
                    axpy(&mut dh_prev, d, wh_row);
                }
            }
            dh.copy_from_slice(&dh_prev);
        }
        loss
    }

    fn apply_clipped_update(&mut self, grads: &[f64], lr: f64) {
        let norm: f64 = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
        let scale = if norm > GRAD_CLIP_NORM {
            GRAD_CLIP_NORM / norm
        } else {
            1.0
        };
        for (p, g) in self.params.iter_mut().zip(grads) {
            *p -= lr * scale * g;
        }
    }

    /// Writes the versioned binary model format:
    /// magic `ESLM`, then little-endian `u32` version, `u32` hidden_size,
    /// `u32` window, `u32` horizon, `u32` smoothing_window, `f64`
    /// learning_rate, `f64` bucket_width_s, `f64` norm min, `f64` norm max,
    /// `u64` parameter count, then each parameter as `f64`.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<(), LstmError> {
        w.write_all(&MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&(self.config.hidden_size as u32).to_le_bytes())?;
        w.write_all(&(self.config.window as u32).to_le_bytes())?;
        w.write_all(&(self.config.horizon as u32).to_le_bytes())?;
        w.write_all(&(self.config.smoothing_window as u32).to_le_bytes())?;
        w.write_all(&self.config.learning_rate.to_le_bytes())?;
        w.write_all(&self.bucket_width_s.to_le_bytes())?;
        w.write_all(&self.normalization.min.to_le_bytes())?;
        w.write_all(&self.normalization.max.to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load<R: Read>(r: &mut R) -> Result<Self, LstmError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MODEL_MAGIC {
            return Err(LstmError::BadMagic);
        }
        let version = read_u32(r)?;
        if version != MODEL_VERSION {
            return Err(LstmError::UnsupportedVersion(version));
        }
        let hidden_size = read_u32(r)? as usize;
        let window = read_u32(r)? as usize;
        let horizon = read_u32(r)? as usize;
        let smoothing_window = read_u32(r)? as usize;
        let learning_rate = read_f64(r)?;
        let bucket_width_s = read_f64(r)?;
        let min = read_f64(r)?;
        let max = read_f64(r)?;
        let count = {
            let mut buf = [0u8; 8];
            r.read_exact(&mut buf)?;
            u64::from_le_bytes(buf) as usize
        };
        let config = LstmConfig {
            hidden_size,
            window,
            horizon,
            learning_rate,
            smoothing_window,
            ..LstmConfig::default()
        };
        if count != config.param_count() {
            return Err(LstmError::BadConfig(format!(
                "parameter count {count} does not match dimensions"
            )));
        }
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            params.push(read_f64(r)?);
        }
        Ok(Self {
            config,
            normalization: Normalization { min, max },
            bucket_width_s,
            params,
        })
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, LstmError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64, LstmError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

/// Reused per-pair buffers so training does not allocate in the inner loop.
struct Workspace {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
    zeros: Vec<f64>,
    grads: Vec<f64>,
}

impl Workspace {
    fn new(cfg: &LstmConfig) -> Self {
        let size = cfg.window * cfg.hidden_size;
        Self {
            i: vec![0.0; size],
            f: vec![0.0; size],
            g: vec![0.0; size],
            o: vec![0.0; size],
            c: vec![0.0; size],
            tanh_c: vec![0.0; size],
            h: vec![0.0; size],
            zeros: vec![0.0; cfg.hidden_size],
            grads: vec![0.0; cfg.param_count()],
        }
    }
}

/// Supervised pairs cut from a series: train pairs end strictly before the
/// split boundary, validation pairs start their target at or after it.
/// Pairs straddling the boundary are skipped.
fn pair_ranges(
    n: usize,
    window: usize,
    horizon: usize,
    train_fraction: f64,
) -> (Vec<usize>, Vec<usize>) {
    let split = (n as f64 * train_fraction) as usize;
    let mut train = Vec::new();
    let mut val = Vec::new();
    if n < window + horizon {
        return (train, val);
    }
    for s in 0..=(n - window - horizon) {
        if s + window + horizon <= split {
            train.push(s);
        } else if s + window >= split {
            val.push(s);
        }
    }
    (train, val)
}

/// Trains an LSTM on a preprocessed series with an in-order train/validation
/// split (`train_fraction`, e.g. 5/6) and per-pair stochastic gradient
/// descent. Training is deterministic for a given seed. Early stopping
/// restores the best-validation-loss parameters.
pub fn train(
    config: LstmConfig,
    series: &SeriesWindow,
    train_fraction: f64,
    seed: u64,
) -> Result<TrainOutcome, LstmError> {
    train_warm(LstmModel::init(config, seed)?, series, train_fraction, seed, config.epochs)
}

/// Continues training an existing model on new data (warm start), running at
/// most `max_epochs`. Used for scheduled retrains inside a simulation.
pub fn train_warm(
    mut model: LstmModel,
    series: &SeriesWindow,
    train_fraction: f64,
    seed: u64,
    max_epochs: usize,
) -> Result<TrainOutcome, LstmError> {
    let cfg = model.config;
    let needed = cfg.window + cfg.horizon + 1;
    if series.values.len() < needed {
        return Err(LstmError::SeriesTooShort {
            needed,
            got: series.values.len(),
        });
    }
    model.normalization = series.normalization;
    model.bucket_width_s = series.bucket_width_s;

    let values = &series.values;
    let (mut train_pairs, val_pairs) = pair_ranges(values.len(), cfg.window, cfg.horizon, train_fraction);
    if train_pairs.is_empty() {
        return Err(LstmError::SeriesTooShort {
            needed,
            got: values.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5454)); // shuffle stream
    let mut ws = Workspace::new(&cfg);
    let mut history = Vec::with_capacity(max_epochs);
    let mut best: Option<(f64, Vec<f64>, usize)> = None;
    // Early stopping counts epochs without a >0.1% relative improvement.
    let mut significant_best = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 0..max_epochs {
        // Fisher-Yates with the seeded stream keeps epochs deterministic.
        for i in (1..train_pairs.len()).rev() {
            let j = rng.gen_range(0..=i);
            train_pairs.swap(i, j);
        }
        let mut train_loss = 0.0;
        for (k, &s) in train_pairs.iter().enumerate() {
            let window = &values[s..s + cfg.window];
            let target = &values[s + cfg.window..s + cfg.window + cfg.horizon];
            let loss = model.backward_into(window, target, &mut ws);
            if !loss.is_finite() {
                return Err(LstmError::NonFiniteLoss { epoch, pair: k, loss });
            }
            model.apply_clipped_update(&ws.grads, cfg.learning_rate);
            train_loss += loss;
        }
        train_loss /= train_pairs.len() as f64;
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(LstmError::NonFiniteParameter { epoch });
        }

        let val_loss = if val_pairs.is_empty() {
            None
        } else {
            let mut sum = 0.0;
            for &s in &val_pairs {
                let window = &values[s..s + cfg.window];
                let target = &values[s + cfg.window..s + cfg.window + cfg.horizon];
                sum += model.loss_for(window, target);
            }
            Some(sum / val_pairs.len() as f64)
        };
        history.push(EpochLoss { epoch, train_loss, val_loss });

        let monitored = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(b, _, _)| monitored < *b) {
            best = Some((monitored, model.params.clone(), epoch));
        }
        if monitored < significant_best * (1.0 - 1e-3) {
            significant_best = monitored;
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (_, best_params, best_epoch) = best.expect("at least one epoch ran");
    model.params = best_params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

/// Writes a training curve as CSV (`epoch,train_loss,val_loss`).
pub fn write_history_csv<W: Write>(w: &mut W, history: &[EpochLoss]) -> std::io::Result<()> {
    writeln!(w, "epoch,train_loss,val_loss")?;
    for e in history {
        match e.val_loss {
            Some(v) => writeln!(w, "{},{:.9e},{:.9e}", e.epoch, e.train_loss, v)?,
            None => writeln!(w, "{},{:.9e},", e.epoch, e.train_loss)?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecaster::preprocess;

    fn tiny_config() -> LstmConfig {
        LstmConfig {
            hidden_size: 8,
            window: 10,
            horizon: 2,
            ..LstmConfig::default()
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let model = LstmModel::zeroed(tiny_config()).unwrap();
        let out = model.forward(&[0.3; 10]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        let sw = SeriesWindow {
            values: vec![0.3; 10],
            bucket_width_s: 60.0,
            normalization: Normalization { min: 0.0, max: 1.0 },
        };
        let rates = model.predict(&sw).unwrap();
        assert!(rates.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prediction_is_deterministic() {
        let model = LstmModel::init(tiny_config(), 99).unwrap();
        let input: Vec<f64> = (0..10).map(|i| (i as f64) / 10.0).collect();
        assert_eq!(model.forward(&input).unwrap(), model.forward(&input).unwrap());
    }

    #[test]
    fn window_length_is_checked() {
        let model = LstmModel::init(tiny_config(), 1).unwrap();
        assert!(matches!(
            model.forward(&[0.0; 3]),
            Err(LstmError::WindowMismatch { expected: 10, got: 3 })
        ));
    }

    #[test]
    fn gradients_match_central_finite_differences() {
        let cfg = tiny_config();
        let mut model = LstmModel::init(cfg, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let window: Vec<f64> = (0..cfg.window).map(|_| rng.gen_range(0.0..1.0)).collect();
        let target: Vec<f64> = (0..cfg.horizon).map(|_| rng.gen_range(0.0..1.0)).collect();
        let (_, analytic) = model.gradients_for(&window, &target);

        let eps = 1e-5;
        let mut max_rel = 0.0_f64;
        for idx in 0..model.param_count() {
            model.nudge_param(idx, eps);
            let lp = model.loss_for(&window, &target);
            model.nudge_param(idx, -2.0 * eps);
            let lm = model.loss_for(&window, &target);
            model.nudge_param(idx, eps);
            let numeric = (lp - lm) / (2.0 * eps);
            let denom = analytic[idx].abs().max(numeric.abs());
            if denom > 1e-7 {
                max_rel = max_rel.max((analytic[idx] - numeric).abs() / denom);
            } else {
                assert!((analytic[idx] - numeric).abs() < 1e-7);
            }
        }
        assert!(max_rel < 1e-4, "max relative gradient error {max_rel}");
    }

    #[test]
    fn constant_series_training_converges_to_zero_loss() {
        let raw = vec![5.0; 40];
        let sw = preprocess(&raw, 60.0, 3, 5.0 / 6.0).unwrap();
        let cfg = LstmConfig {
            hidden_size: 4,
            window: 6,
            horizon: 1,
            ..LstmConfig::default()
        };
        let out = train(cfg, &sw, 5.0 / 6.0, 5).unwrap();
        // Non-increasing up to float noise, ending near zero.
        let losses: Vec<f64> = out.history.iter().map(|e| e.train_loss).collect();
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6, "loss rose: {pair:?}");
        }
        assert!(*losses.last().unwrap() < 1e-6);
    }

    #[test]
    fn sine_wave_held_out_mape_under_fifteen_percent() {
        // Period 48 buckets, 10 periods; rates stay positive.
        let n = 480;
        let raw: Vec<f64> = (0..n)
            .map(|i| 50.0 + 40.0 * (2.0 * std::f64::consts::PI * i as f64 / 48.0).sin())
            .collect();
        let sw = preprocess(&raw, 60.0, 5, 5.0 / 6.0).unwrap();
        let cfg = LstmConfig {
            hidden_size: 32,
            window: 60,
            horizon: 1,
            learning_rate: 0.05,
            epochs: 200,
            smoothing_window: 5,
            patience: 15,
        };
        let out = train(cfg, &sw, 5.0 / 6.0, 42).unwrap();
        let model = out.model;

        // One-step predictions across the held-out sixth.
        let split = (n as f64 * 5.0 / 6.0) as usize;
        let smoothed = smooth_centered(&raw, 5);
        let mut actual = Vec::new();
        let mut predicted = Vec::new();
        for s in split..n - 1 {
            if s < cfg.window {
                continue;
            }
            let window: Vec<f64> = smoothed[s - cfg.window..s]
                .iter()
                .map(|&x| model.normalization.normalize(x))
                .collect();
            let y = model.forward(&window).unwrap();
            predicted.push(model.normalization.denormalize(y[0]).max(0.0));
            actual.push(smoothed[s]);
        }
        let err = crate::forecaster::mape(&actual, &predicted).unwrap();
        assert!(err < 15.0, "held-out one-step MAPE {err:.2}%");
    }

    #[test]
    fn training_is_deterministic() {
        let raw: Vec<f64> = (0..120).map(|i| 10.0 + (i % 12) as f64).collect();
        let sw = preprocess(&raw, 60.0, 3, 5.0 / 6.0).unwrap();
        let cfg = LstmConfig {
            hidden_size: 6,
            window: 12,
            horizon: 2,
            epochs: 8,
            ..LstmConfig::default()
        };
        let a = train(cfg, &sw, 5.0 / 6.0, 123).unwrap();
        let b = train(cfg, &sw, 5.0 / 6.0, 123).unwrap();
        assert_eq!(a.model.params(), b.model.params());
    }

    #[test]
    fn parameters_stay_finite_through_training() {
        let raw: Vec<f64> = (0..100)
            .map(|i| if i % 7 == 0 { 500.0 } else { 1.0 })
            .collect();
        let sw = preprocess(&raw, 60.0, 1, 5.0 / 6.0).unwrap();
        let cfg = LstmConfig {
            hidden_size: 8,
            window: 10,
            horizon: 2,
            learning_rate: 0.5, // aggressive on purpose; clipping must hold
            epochs: 30,
            ..LstmConfig::default()
        };
        let out = train(cfg, &sw, 5.0 / 6.0, 9).unwrap();
        assert!(out.model.params().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let raw: Vec<f64> = (0..80).map(|i| (i % 9) as f64 + 1.0).collect();
        let sw = preprocess(&raw, 30.0, 3, 5.0 / 6.0).unwrap();
        let cfg = LstmConfig {
            hidden_size: 5,
            window: 8,
            horizon: 3,
            epochs: 4,
            ..LstmConfig::default()
        };
        let model = train(cfg, &sw, 5.0 / 6.0, 21).unwrap().model;
        let mut buf = Vec::new();
        model.save(&mut buf).unwrap();
        let loaded = LstmModel::load(&mut buf.as_slice()).unwrap();
        assert_eq!(model.params(), loaded.params());
        assert_eq!(model.normalization, loaded.normalization);
        let input: Vec<f64> = (0..8).map(|i| i as f64 / 8.0).collect();
        assert_eq!(model.forward(&input).unwrap(), loaded.forward(&input).unwrap());
    }

    #[test]
    fn load_rejects_foreign_bytes() {
        let mut junk: &[u8] = b"NOPE12345678";
        assert!(matches!(LstmModel::load(&mut junk), Err(LstmError::BadMagic)));
    }
}
