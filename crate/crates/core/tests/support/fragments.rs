//! Small differentiable fragments around each layer type.

use evotraj::nncore::{Activation, ConvEncoder, Dense, Differentiable, LstmCell, Param};
use evotraj::rng;
use evotraj::simdata::GridShape;
use rand::Rng;

pub fn random_vec(n: usize, rng: &mut rng::Rng) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Random linear read-out so every output contributes to the objective.
pub fn readout(outputs: &[f32], weights: &[f32]) -> f64 {
    outputs.iter().zip(weights).map(|(a, b)| *a as f64 * *b as f64).sum()
}

pub struct DenseFragment {
    pub layer: Dense,
    pub input: Vec<f32>,
    pub rows: usize,
    pub weights: Vec<f32>,
}

impl Differentiable for DenseFragment {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layer.params_mut().into_iter().collect()
    }
    fn objective(&mut self) -> f64 {
        readout(
            &self.layer.forward(&self.input, self.rows).unwrap().output,
            &self.weights,
        )
    }
    fn objective_and_gradient(&mut self) -> f64 {
        for p in self.params_mut() {
            p.zero_grad();
        }
        let cache = self.layer.forward(&self.input, self.rows).unwrap();
        self.layer.backward(&cache, &self.weights.clone()).unwrap();
        readout(&cache.output, &self.weights)
    }
}

pub struct ConvFragment {
    pub enc: ConvEncoder,
    pub input: Vec<f32>,
    pub frames: usize,
    pub weights: Vec<f32>,
}

impl Differentiable for ConvFragment {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.enc.params_mut()
    }
    fn objective(&mut self) -> f64 {
        readout(
            self.enc.forward(&self.input, self.frames).unwrap().output(),
            &self.weights,
        )
    }
    fn objective_and_gradient(&mut self) -> f64 {
        for p in self.params_mut() {
            p.zero_grad();
        }
        let cache = self.enc.forward(&self.input, self.frames).unwrap();
        self.enc.backward(&cache, &self.weights.clone()).unwrap();
        readout(cache.output(), &self.weights)
    }
}

pub struct LstmChain {
    pub cells: Vec<LstmCell>,
    pub input: Vec<f32>,
    pub steps: usize,
    pub weights: Vec<f32>,
}

impl LstmChain {
    pub fn run(&self) -> Vec<evotraj::nncore::LstmCache> {
        let mut caches = Vec::new();
        let mut x = self.input.clone();
        for c in &self.cells {
            let cache = c.forward(&x, self.steps).unwrap();
            x = cache.outputs().to_vec();
            caches.push(cache);
        }
        caches
    }
}

impl Differentiable for LstmChain {
    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.cells.iter_mut().flat_map(|c| c.params_mut()).collect()
    }
    fn objective(&mut self) -> f64 {
        readout(self.run().last().unwrap().outputs(), &self.weights)
    }
    fn objective_and_gradient(&mut self) -> f64 {
        for p in self.params_mut() {
            p.zero_grad();
        }
        let caches = self.run();
        let mut up = self.weights.clone();
        for (cell, cache) in self.cells.iter_mut().zip(&caches).rev() {
            up = cell.backward(cache, &up).unwrap();
        }
        readout(caches.last().unwrap().outputs(), &self.weights)
    }
}

pub fn dense_fragment(seed: u64) -> DenseFragment {
    let mut r = rng::seeded(seed);
    let mut layer = Dense::new("d", 4, 3, Activation::Relu, &mut r);
    layer.bias.value.values = random_vec(3, &mut r);
    DenseFragment {
        layer,
        input: random_vec(8, &mut r),
        rows: 2,
        weights: random_vec(6, &mut r),
    }
}

pub fn conv_fragment(seed: u64) -> ConvFragment {
    let mut r = rng::seeded(seed);
    let mut enc = ConvEncoder::new(GridShape::new(8, 8, 1), (1, 2), (6, 4), &mut r).unwrap();
    for p in enc.params_mut() {
        if p.name.ends_with("bias") {
            p.value.values = random_vec(p.len(), &mut r).iter().map(|v| v * 0.1).collect();
        }
    }
    ConvFragment {
        enc,
        input: random_vec(2 * 64, &mut r).iter().map(|v| v.abs()).collect(),
        frames: 2,
        weights: random_vec(8, &mut r),
    }
}

pub fn lstm_chain(seed: u64, cells: usize) -> LstmChain {
    let mut r = rng::seeded(seed);
    let (steps, d, h) = (3, 3, 4);
    let cells = (0..cells)
        .map(|k| LstmCell::new(&format!("l{k}"), if k == 0 { d } else { h }, h, &mut r))
        .collect();
    LstmChain {
        cells,
        input: random_vec(steps * d, &mut r),
        steps,
        weights: random_vec(steps * h, &mut r),
    }
}
