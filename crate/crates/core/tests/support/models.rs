//! Datasets and model configurations shared by the training tests.

use evotraj::genome::Hyperparameters;
use evotraj::model::{Model, ModelConfig};
use evotraj::nncore::{Differentiable, LossKind, Mode, OptimizerKind, Param};
use evotraj::rng;
use evotraj::simdata::{build_sequences, simulate_episode, EpisodeConfig, GridConfig, GridShape, SequenceSample};

pub fn samples(tau: usize, shape: GridShape, episodes: u64) -> Vec<SequenceSample> {
    let grid = GridConfig::with_shape(shape);
    let mut out = Vec::new();
    for e in 0..episodes {
        let ep = simulate_episode(&EpisodeConfig::default(), 100 + e).unwrap();
        out.extend(build_sequences(&ep, tau, 2, &grid).unwrap());
    }
    out
}

pub fn hyper(cells: usize) -> Hyperparameters {
    Hyperparameters {
        batch_size: 8,
        epochs: 200,
        momentum: 0.9,
        loss: LossKind::Mse,
        optimizer: OptimizerKind::Adam,
        lstm_cells: cells,
        lstm_dropout: 0.0,
        hidden_units: 16,
        cnn_flat1: 32,
        cnn_flat2: 16,
        lstm_flat1: 16,
        lstm_flat2: 16,
        flat_dropout: 0.0,
    }
}

pub fn config(h: Hyperparameters, tau: usize, grid: GridShape) -> ModelConfig {
    ModelConfig {
        hyper: h,
        nominal: h,
        tau,
        grid,
        conv_filters: (4, 4),
        divisor: 1,
        learning_rate: None,
        dt: 0.1,
    }
}

/// Eight windows with pairwise distinct input sequences. Grids of a straight
/// road do not move, so only windows around a lane change differ.
pub fn distinct_windows(tau: usize) -> Vec<SequenceSample> {
    let grid = GridConfig::with_shape(GridShape::DESK);
    let mut out: Vec<SequenceSample> = Vec::new();
    for e in 0.. {
        let ep = simulate_episode(&EpisodeConfig::default(), 200 + e).unwrap();
        for s in build_sequences(&ep, tau, 1, &grid).unwrap() {
            if out.len() < 8 && out.iter().all(|o| o.inputs != s.inputs) {
                out.push(s);
            }
        }
        if out.len() == 8 {
            return out;
        }
    }
    unreachable!()
}

/// Full network on a fixed batch; dropout masks are redrawn from the same
/// seed on every call so the objective is a deterministic function.
pub struct EndToEnd {
    pub model: Model,
    pub batch: Vec<SequenceSample>,
    pub mask_seed: u64,
}

impl Differentiable for EndToEnd {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.model.params_mut()
    }
    fn objective(&mut self) -> f64 {
        let refs: Vec<&SequenceSample> = self.batch.iter().collect();
        self.model
            .loss(&refs, Mode::Train, &mut rng::seeded(self.mask_seed))
            .unwrap()
    }
    fn objective_and_gradient(&mut self) -> f64 {
        let refs: Vec<&SequenceSample> = self.batch.iter().collect();
        self.model
            .loss_and_gradient(&refs, Mode::Train, &mut rng::seeded(self.mask_seed))
            .unwrap()
    }
}

pub fn minimal(cells: usize, loss: LossKind) -> ModelConfig {
    let h = Hyperparameters {
        batch_size: 2,
        epochs: 1,
        momentum: 0.9,
        loss,
        optimizer: OptimizerKind::Adam,
        lstm_cells: cells,
        lstm_dropout: 0.25,
        hidden_units: 2,
        cnn_flat1: 3,
        cnn_flat2: 2,
        lstm_flat1: 2,
        lstm_flat2: 2,
        flat_dropout: 0.1,
    };
    let mut cfg = config(h, 2, GridShape::new(8, 8, 1));
    cfg.conv_filters = (1, 2);
    cfg
}

/// Trains a one-cell model on eight distinct windows; returns the first and
/// last epoch training losses.
pub fn memorisation() -> (f64, f64) {
    let data = distinct_windows(5);
    let mut cfg = config(hyper(1), 5, GridShape::DESK);
    cfg.learning_rate = Some(3e-3);
    let t = evotraj::model::train(Model::build(&cfg, 1).unwrap(), &data, &[], 1).unwrap();
    (t.history[0].train_loss, t.history.last().unwrap().train_loss)
}

/// End-to-end fragment of a minimal model for gradient checking.
pub fn end_to_end(seed: u64, data: &[SequenceSample]) -> EndToEnd {
    let cells = 1 + (seed as usize % 2);
    let loss = if seed % 3 == 0 {
        LossKind::LogCosh
    } else {
        LossKind::Mse
    };
    let mut model = Model::build(&minimal(cells, loss), seed).unwrap();
    model.target_scale = [0.5, 2.0];
    let start = (seed as usize * 3) % (data.len() - 2);
    EndToEnd {
        model,
        batch: data[start..start + 2].to_vec(),
        mask_seed: seed,
    }
}
