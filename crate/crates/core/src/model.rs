//! One convolutional-recurrent trajectory predictor: build, train, predict.
//!
//! Topology: per-frame conv encoder (two conv/pool stages and two dense
//! stages) → chain of LSTM cells over the τ frame features → two dense
//! stages on the final hidden state → dropout → linear head with 2τ outputs.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::genome::{Decoded, Hyperparameters};
use crate::nncore::{
    dropout, dropout_backward, load_parameters, loss_eval, save_parameters, Activation, ConvEncoder, ConvEncoderCache,
    Dense, DenseCache, LstmCache, LstmCell, Mode, NnError, OptimizerState, Param,
};
use crate::rng::{self, Rng};
use crate::simdata::{wrap_angle, GridShape, OccupancyGrid, SequenceSample};

/// Convolution filters per stage at every scale.
pub const CONV_FILTERS: (usize, usize) = (4, 4);

const BUILD_TAG: u64 = 0xB1;
const TRAIN_TAG: u64 = 0x7A;
const PREDICT_CHUNK: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input shape mismatch: {0}")]
    Shape(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Everything needed to build and train one predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Values used for training.
    pub hyper: Hyperparameters,
    /// Table values before scaling, kept for reporting.
    pub nominal: Hyperparameters,
    pub tau: usize,
    pub grid: GridShape,
    pub conv_filters: (usize, usize),
    pub divisor: u32,
    /// Overrides the optimizer's default learning rate.
    pub learning_rate: Option<f32>,
    pub dt: f64,
}

impl ModelConfig {
    pub fn from_decoded(decoded: &Decoded, tau: usize, grid: GridShape, divisor: u32, dt: f64) -> Self {
        Self {
            hyper: decoded.effective,
            nominal: decoded.nominal,
            tau,
            grid,
            conv_filters: CONV_FILTERS,
            divisor,
            learning_rate: None,
            dt,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let bad = |what: String| Err(ModelError::Config(what));
        if !(1..=4).contains(&h.lstm_cells) {
            return bad(format!("lstm_cells = {}, expected 1..=4", h.lstm_cells));
        }
        let sizes = [
            ("batch_size", h.batch_size),
            ("hidden_units", h.hidden_units),
            ("cnn_flat1", h.cnn_flat1),
            ("cnn_flat2", h.cnn_flat2),
            ("lstm_flat1", h.lstm_flat1),
            ("lstm_flat2", h.lstm_flat2),
            ("tau", self.tau),
            ("conv filters 1", self.conv_filters.0),
            ("conv filters 2", self.conv_filters.1),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        for (name, rate) in [("lstm_dropout", h.lstm_dropout), ("flat_dropout", h.flat_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return bad(format!("{name} = {rate} outside [0, 1)"));
            }
        }
        if self.grid.width < 8 || self.grid.height < 8 || self.grid.channels == 0 {
            return bad(format!(
                "grid {}x{}x{} below the 8x8 minimum",
                self.grid.width, self.grid.height, self.grid.channels
            ));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        Ok(())
    }

    pub fn learning_rate(&self) -> f32 {
        self.learning_rate
            .unwrap_or_else(|| self.hyper.optimizer.default_learning_rate())
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let h = &self.hyper;
        let (f1, f2) = self.conv_filters;
        let dense = |i: usize, o: usize| i * o + o;
        let flat = ConvEncoder::flat_len(self.grid, f2);
        let conv = 9 * self.grid.channels * f1 + f1 + 9 * f1 * f2 + f2;
        let encoder = conv + dense(flat, h.cnn_flat1) + dense(h.cnn_flat1, h.cnn_flat2);
        let hs = h.hidden_units;
        let lstm: usize = (0..h.lstm_cells)
            .map(|k| {
                let d = if k == 0 { h.cnn_flat2 } else { hs };
                4 * hs * (d + hs) + 4 * hs
            })
            .sum();
        let post = dense(hs, h.lstm_flat1) + dense(h.lstm_flat1, h.lstm_flat2);
        encoder + lstm + post + dense(h.lstm_flat2, 2 * self.tau)
    }
}

/// Predicted or actual future path, ego-relative metres, with velocities
/// derived by backward differences over `dt`. The first step is differenced
/// against the origin pose (position `(0, 0)`, heading 0 along +y).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<[f64; 2]>,
    /// Forward speed per step, km/h.
    pub v_f: Vec<f64>,
    /// Heading rate per step, rad/s.
    pub v_delta: Vec<f64>,
    pub dt: f64,
}

impl Trajectory {
    pub fn from_points(points: Vec<[f64; 2]>, dt: f64) -> Self {
        let mut v_f = Vec::with_capacity(points.len());
        let mut v_delta = Vec::with_capacity(points.len());
        let mut prev = [0.0, 0.0];
        let mut prev_heading = 0.0;
        for p in &points {
            let (dx, dy) = (p[0] - prev[0], p[1] - prev[1]);
            let dist = dx.hypot(dy);
            // A zero-length step keeps the previous heading.
            let heading = if dist > 0.0 { dx.atan2(dy) } else { prev_heading };
            v_f.push(dist / dt * 3.6);
            v_delta.push(wrap_angle(heading - prev_heading) / dt);
            prev = *p;
            prev_heading = heading;
        }
        Self {
            points,
            v_f,
            v_delta,
            dt,
        }
    }

    /// Ground truth of a sample.
    pub fn of_sample(sample: &SequenceSample, dt: f64) -> Self {
        Self::from_points(sample.targets.clone(), dt)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_rmse: f64,
}

/// Network weights plus the per-axis target scale learned from training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub encoder: ConvEncoder,
    pub cells: Vec<LstmCell>,
    pub post1: Dense,
    pub post2: Dense,
    pub head: Dense,
    /// Targets are divided by this before the loss; outputs multiplied.
    pub target_scale: [f64; 2],
}

struct ForwardCache {
    rows: usize,
    encoder: ConvEncoderCache,
    /// `[sample][cell]`.
    lstm: Vec<Vec<LstmCache>>,
    /// `[sample][cell - 1]`: masks applied between consecutive cells.
    lstm_masks: Vec<Vec<Vec<f32>>>,
    post1: DenseCache,
    post2: DenseCache,
    flat_mask: Vec<f32>,
    head: DenseCache,
}

impl ForwardCache {
    fn output(&self) -> &[f32] {
        &self.head.output
    }
}

impl Model {
    /// Randomly initialised network; deterministic per `(config, seed)`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut r = rng::stream(seed, &[BUILD_TAG]);
        let h = &config.hyper;
        let encoder = ConvEncoder::new(config.grid, config.conv_filters, (h.cnn_flat1, h.cnn_flat2), &mut r)?;
        let cells = (0..h.lstm_cells)
            .map(|k| {
                let d = if k == 0 { h.cnn_flat2 } else { h.hidden_units };
                LstmCell::new(&format!("lstm{}", k + 1), d, h.hidden_units, &mut r)
            })
            .collect();
        Ok(Self {
            encoder,
            cells,
            post1: Dense::new("lstm.flat1", h.hidden_units, h.lstm_flat1, Activation::Relu, &mut r),
            post2: Dense::new("lstm.flat2", h.lstm_flat1, h.lstm_flat2, Activation::Relu, &mut r),
            head: Dense::new("head", h.lstm_flat2, 2 * config.tau, Activation::Identity, &mut r),
            target_scale: [1.0, 1.0],
            config: config.clone(),
        })
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = self.encoder.params();
        for c in &self.cells {
            out.extend(c.params());
        }
        out.extend(self.post1.params());
        out.extend(self.post2.params());
        out.extend(self.head.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = self.encoder.params_mut();
        for c in &mut self.cells {
            out.extend(c.params_mut());
        }
        out.extend(self.post1.params_mut());
        out.extend(self.post2.params_mut());
        out.extend(self.head.params_mut());
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    fn check_inputs(&self, inputs: &[Arc<OccupancyGrid>]) -> Result<()> {
        if inputs.len() != self.config.tau {
            return Err(ModelError::Shape(format!(
                "{} input grids, model expects tau = {}",
                inputs.len(),
                self.config.tau
            )));
        }
        if let Some(g) = inputs.iter().find(|g| g.shape != self.config.grid) {
            return Err(ModelError::Shape(format!(
                "grid {:?}, model expects {:?}",
                g.shape, self.config.grid
            )));
        }
        Ok(())
    }

    fn gather(&self, samples: &[&SequenceSample]) -> Result<Vec<f32>> {
        let mut frames = Vec::with_capacity(samples.len() * self.config.tau * self.config.grid.len());
        for s in samples {
            self.check_inputs(&s.inputs)?;
            if s.targets.len() != self.config.tau {
                return Err(ModelError::Shape(format!(
                    "{} targets, model expects tau = {}",
                    s.targets.len(),
                    self.config.tau
                )));
            }
            for g in &s.inputs {
                frames.extend_from_slice(&g.cells);
            }
        }
        Ok(frames)
    }

    fn scaled_targets(&self, samples: &[&SequenceSample]) -> Vec<f32> {
        samples
            .iter()
            .flat_map(|s| s.targets.iter())
            .flat_map(|p| {
                [
                    (p[0] / self.target_scale[0]) as f32,
                    (p[1] / self.target_scale[1]) as f32,
                ]
            })
            .collect()
    }

    fn forward(&self, frames: &[f32], rows: usize, mode: Mode, rng: &mut Rng) -> Result<ForwardCache> {
        let tau = self.config.tau;
        let h = &self.config.hyper;
        let encoder = self.encoder.forward(frames, rows * tau)?;
        let feat = self.encoder.features();
        let hs = h.hidden_units;
        let mut lstm = Vec::with_capacity(rows);
        let mut lstm_masks = Vec::with_capacity(rows);
        let mut last = Vec::with_capacity(rows * hs);
        for seq in encoder.output().chunks_exact(tau * feat) {
            let mut caches = Vec::with_capacity(self.cells.len());
            let mut masks = Vec::new();
            let mut x = seq.to_vec();
            for (k, cell) in self.cells.iter().enumerate() {
                let cache = cell.forward(&x, tau)?;
                if k + 1 < self.cells.len() {
                    let (out, mask) = dropout(cache.outputs(), h.lstm_dropout as f32, mode, rng)?;
                    x = out;
                    masks.push(mask);
                } else {
                    last.extend_from_slice(cache.last_hidden());
                }
                caches.push(cache);
            }
            lstm.push(caches);
            lstm_masks.push(masks);
        }
        let post1 = self.post1.forward(&last, rows)?;
        let post2 = self.post2.forward(&post1.output, rows)?;
        let (flat, flat_mask) = dropout(&post2.output, h.flat_dropout as f32, mode, rng)?;
        let head = self.head.forward(&flat, rows)?;
        Ok(ForwardCache {
            rows,
            encoder,
            lstm,
            lstm_masks,
            post1,
            post2,
            flat_mask,
            head,
        })
    }

    /// Accumulates parameter gradients for `upstream = dL/d(output)`.
    fn backward(&mut self, cache: &ForwardCache, upstream: &[f32]) -> Result<()> {
        let tau = self.config.tau;
        let hs = self.config.hyper.hidden_units;
        let d = self.head.backward(&cache.head, upstream)?;
        let d = dropout_backward(&d, &cache.flat_mask);
        let d = self.post2.backward(&cache.post2, &d)?;
        let dlast = self.post1.backward(&cache.post1, &d)?;
        let feat = self.encoder.features();
        let mut dfeat = Vec::with_capacity(cache.rows * tau * feat);
        for r in 0..cache.rows {
            let mut up = vec![0.0f32; tau * hs];
            up[(tau - 1) * hs..].copy_from_slice(&dlast[r * hs..(r + 1) * hs]);
            for k in (0..self.cells.len()).rev() {
                let dx = self.cells[k].backward(&cache.lstm[r][k], &up)?;
                if k > 0 {
                    up = dropout_backward(&dx, &cache.lstm_masks[r][k - 1]);
                } else {
                    dfeat.extend(dx);
                }
            }
        }
        self.encoder.backward(&cache.encoder, &dfeat)?;
        Ok(())
    }

    /// Scaled-target loss on `batch` without touching gradients.
    pub fn loss(&self, batch: &[&SequenceSample], mode: Mode, rng: &mut Rng) -> Result<f64> {
        let frames = self.gather(batch)?;
        let cache = self.forward(&frames, batch.len(), mode, rng)?;
        let (loss, _) = loss_eval(self.config.hyper.loss, cache.output(), &self.scaled_targets(batch))?;
        Ok(loss)
    }

    /// Zeroes gradients, then computes the loss on `batch` and accumulates
    /// its gradient into every parameter.
    pub fn loss_and_gradient(&mut self, batch: &[&SequenceSample], mode: Mode, rng: &mut Rng) -> Result<f64> {
        for p in self.params_mut() {
            p.zero_grad();
        }
        let frames = self.gather(batch)?;
        let cache = self.forward(&frames, batch.len(), mode, rng)?;
        let (loss, grad) = loss_eval(self.config.hyper.loss, cache.output(), &self.scaled_targets(batch))?;
        self.backward(&cache, &grad)?;
        Ok(loss)
    }

    fn unscale(&self, out: &[f32]) -> Trajectory {
        let points = out
            .chunks_exact(2)
            .map(|p| [p[0] as f64 * self.target_scale[0], p[1] as f64 * self.target_scale[1]])
            .collect();
        Trajectory::from_points(points, self.config.dt)
    }

    /// Eval-mode prediction from τ grids.
    pub fn predict(&self, inputs: &[Arc<OccupancyGrid>]) -> Result<Trajectory> {
        self.check_inputs(inputs)?;
        let frames: Vec<f32> = inputs.iter().flat_map(|g| g.cells.iter().copied()).collect();
        let cache = self.forward(&frames, 1, Mode::Eval, &mut rng::seeded(0))?;
        Ok(self.unscale(cache.output()))
    }

    /// Batched eval-mode prediction, one trajectory per sample.
    pub fn predict_samples(&self, samples: &[SequenceSample]) -> Result<Vec<Trajectory>> {
        let mut out = Vec::with_capacity(samples.len());
        let mut unused = rng::seeded(0);
        for chunk in samples.chunks(PREDICT_CHUNK) {
            let refs: Vec<&SequenceSample> = chunk.iter().collect();
            let frames = self.gather(&refs)?;
            let cache = self.forward(&frames, refs.len(), Mode::Eval, &mut unused)?;
            out.extend(
                cache
                    .output()
                    .chunks_exact(2 * self.config.tau)
                    .map(|row| self.unscale(row)),
            );
        }
        Ok(out)
    }

    /// Writes `<stem>.f32` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "config": self.config,
            "target_scale": self.target_scale,
        });
        save_parameters(self.params(), meta, stem)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let json_path = stem.with_extension("json");
        let text = std::fs::read_to_string(&json_path).map_err(|source| ModelError::Io {
            path: json_path.clone(),
            source,
        })?;
        let desc: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| NnError::Format(format!("{}: {e}", json_path.display())))?;
        let meta = &desc["metadata"];
        let config: ModelConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| NnError::Format(format!("{}: config: {e}", json_path.display())))?;
        let scale: [f64; 2] = serde_json::from_value(meta["target_scale"].clone())
            .map_err(|e| NnError::Format(format!("{}: target_scale: {e}", json_path.display())))?;
        let mut model = Self::build(&config, 0)?;
        load_parameters(model.params_mut(), stem)?;
        model.target_scale = scale;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub seed: u64,
}

/// Per-axis root-mean-square of the targets, 1 where an axis is all zero.
pub fn target_rms(samples: &[SequenceSample]) -> [f64; 2] {
    let mut sum = [0.0f64; 2];
    let mut n = 0usize;
    for p in samples.iter().flat_map(|s| s.targets.iter()) {
        sum[0] += p[0] * p[0];
        sum[1] += p[1] * p[1];
        n += 1;
    }
    sum.map(|s| {
        let rms = (s / n.max(1) as f64).sqrt();
        if rms > 1e-9 {
            rms
        } else {
            1.0
        }
    })
}

/// Mean per-sample RMSE of `model` on `samples`, NaN for an empty split.
pub fn split_rmse(model: &Model, samples: &[SequenceSample]) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let preds = model.predict_samples(samples)?;
    let total: f64 = preds
        .iter()
        .zip(samples)
        .map(|(p, s)| crate::objectives::rmse(p, &Trajectory::of_sample(s, model.config.dt)).expect("lengths match"))
        .sum();
    Ok(total / samples.len() as f64)
}

fn finite(p: &Param) -> bool {
    p.value.values.iter().all(|v| v.is_finite())
}

/// Mini-batch training with the configured batch size, epochs, loss and
/// optimizer. Deterministic per `seed`.
pub fn train(mut model: Model, train: &[SequenceSample], val: &[SequenceSample], seed: u64) -> Result<TrainedModel> {
    if train.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let h = model.config.hyper;
    let mut history = Vec::with_capacity(h.epochs);
    if h.epochs == 0 {
        return Ok(TrainedModel { model, history, seed });
    }
    model.target_scale = target_rms(train);
    let mut r = rng::stream(seed, &[TRAIN_TAG]);
    let mut opt = OptimizerState::new(h.optimizer, model.config.learning_rate(), h.momentum as f32);
    opt.init(model.params());
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=h.epochs {
        order.shuffle(&mut r);
        let mut total = 0.0f64;
        for idx in order.chunks(h.batch_size) {
            let batch: Vec<&SequenceSample> = idx.iter().map(|&i| &train[i]).collect();
            let loss = match model.loss_and_gradient(&batch, Mode::Train, &mut r) {
                Ok(l) => l,
                Err(ModelError::Nn(NnError::Numerical { .. })) => return Err(ModelError::Diverged { epoch }),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            total += loss * batch.len() as f64;
            opt.apply(&mut model.params_mut())?;
        }
        if !model.params().into_iter().all(finite) {
            return Err(ModelError::Diverged { epoch });
        }
        let val_rmse = match split_rmse(&model, val) {
            Ok(v) => v,
            Err(ModelError::Nn(NnError::Numerical { .. })) => return Err(ModelError::Diverged { epoch }),
            Err(e) => return Err(e),
        };
        history.push(EpochRecord {
            epoch,
            train_loss: total / train.len() as f64,
            val_rmse,
        });
    }
    for p in model.params_mut() {
        p.zero_grad();
    }
    Ok(TrainedModel { model, history, seed })
}

/// `epoch,train_loss,val_rmse` rows.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "epoch,train_loss,val_rmse").expect("write to vec");
    for h in history {
        writeln!(buf, "{},{:?},{:?}", h.epoch, h.train_loss, h.val_rmse).expect("write to vec");
    }
    crate::fsutil::write_atomic(path, &buf).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}
