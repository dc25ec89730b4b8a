use super::{axpy, dot, glorot_uniform, sigmoid, NnError, Param, Result};
use crate::rng::Rng;

/// One LSTM cell applied over a sequence.
///
/// `weight` is `4H × (D + H)` acting on `[x_t; h_{t-1}]`, gate blocks in the
/// order input, forget, output, candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub weight: Param,
    pub bias: Param,
}

/// Activations of a forward pass over `steps` inputs, kept for BPTT.
#[derive(Debug, Clone)]
pub struct LstmCache {
    steps: usize,
    inputs: Vec<f32>,
    /// `(steps + 1) × H`, row 0 is the zero initial state.
    hidden: Vec<f32>,
    cell: Vec<f32>,
    /// Post-activation gates, `steps × 4H`.
    gates: Vec<f32>,
}

impl LstmCache {
    /// Hidden states for steps `1..=steps`, `steps × H`.
    pub fn outputs(&self) -> &[f32] {
        let h = self.hidden.len() / (self.steps + 1);
        &self.hidden[h..]
    }

    pub fn last_hidden(&self) -> &[f32] {
        let h = self.hidden.len() / (self.steps + 1);
        &self.hidden[self.steps * h..]
    }

    pub fn last_cell(&self) -> &[f32] {
        let h = self.cell.len() / (self.steps + 1);
        &self.cell[self.steps * h..]
    }
}

/// Gate pre-activations to `(gates, c_t, h_t)`; `z` is overwritten with the
/// activated gates.
fn activate(z: &mut [f32], c_prev: &[f32], c: &mut [f32], h: &mut [f32]) {
    let n = c.len();
    for j in 0..n {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[n + j]);
        let o = sigmoid(z[2 * n + j]);
        let g = z[3 * n + j].tanh();
        z[j] = i;
        z[n + j] = f;
        z[2 * n + j] = o;
        z[3 * n + j] = g;
        c[j] = f * c_prev[j] + i * g;
        h[j] = o * c[j].tanh();
    }
}

/// One recurrence step; returns `(h_t, c_t)`.
pub fn lstm_cell_step(x: &[f32], h_prev: &[f32], c_prev: &[f32], params: &LstmCell) -> Result<(Vec<f32>, Vec<f32>)> {
    let (d, hs) = (params.input_size(), params.hidden_size());
    if x.len() != d || h_prev.len() != hs || c_prev.len() != hs {
        return Err(NnError::Shape {
            expected: vec![d, hs, hs],
            actual: vec![x.len(), h_prev.len(), c_prev.len()],
        });
    }
    let mut z = params.preactivation(x, h_prev);
    let mut c = vec![0.0; hs];
    let mut h = vec![0.0; hs];
    activate(&mut z, c_prev, &mut c, &mut h);
    if z.iter().chain(&c).any(|v| !v.is_finite()) {
        return Err(NnError::Numerical {
            what: "lstm gate".into(),
            step: 0,
        });
    }
    Ok((h, c))
}

impl LstmCell {
    pub fn new(name: &str, input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut bias = Param::zeros(format!("{name}.bias"), &[4 * hidden]);
        bias.value.values[hidden..2 * hidden].fill(1.0);
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                glorot_uniform(&[4 * hidden, input + hidden], input + hidden, 4 * hidden, rng),
            ),
            bias,
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.weight.value.shape[0] / 4
    }

    pub fn input_size(&self) -> usize {
        self.weight.value.shape[1] - self.hidden_size()
    }

    fn preactivation(&self, x: &[f32], h_prev: &[f32]) -> Vec<f32> {
        let cols = self.weight.value.shape[1];
        let d = x.len();
        let w = &self.weight.value.values;
        self.bias
            .value
            .values
            .iter()
            .enumerate()
            .map(|(r, b)| {
                let row = &w[r * cols..(r + 1) * cols];
                b + dot(&row[..d], x) + dot(&row[d..], h_prev)
            })
            .collect()
    }

    /// Runs the cell over `steps` inputs (`steps × D`) from a zero state.
    pub fn forward(&self, inputs: &[f32], steps: usize) -> Result<LstmCache> {
        let (d, hs) = (self.input_size(), self.hidden_size());
        if inputs.len() != steps * d {
            return Err(NnError::Shape {
                expected: vec![steps, d],
                actual: vec![inputs.len()],
            });
        }
        let mut hidden = vec![0.0f32; (steps + 1) * hs];
        let mut cell = vec![0.0f32; (steps + 1) * hs];
        let mut gates = Vec::with_capacity(steps * 4 * hs);
        for t in 0..steps {
            let x = &inputs[t * d..(t + 1) * d];
            let mut z = self.preactivation(x, &hidden[t * hs..(t + 1) * hs]);
            let (c_prev, c_next) = cell.split_at_mut((t + 1) * hs);
            let h_next = &mut hidden[(t + 1) * hs..(t + 2) * hs];
            activate(&mut z, &c_prev[t * hs..], &mut c_next[..hs], h_next);
            if z.iter().chain(h_next.iter()).any(|v| !v.is_finite()) {
                return Err(NnError::Numerical {
                    what: "lstm gate".into(),
                    step: t,
                });
            }
            gates.extend_from_slice(&z);
        }
        Ok(LstmCache {
            steps,
            inputs: inputs.to_vec(),
            hidden,
            cell,
            gates,
        })
    }

    /// Backpropagation through time. `upstream` is `dL/dh_t` for every step
    /// (`steps × H`); returns `dL/dx_t` (`steps × D`).
    pub fn backward(&mut self, cache: &LstmCache, upstream: &[f32]) -> Result<Vec<f32>> {
        let (d, hs) = (self.input_size(), self.hidden_size());
        let steps = cache.steps;
        if upstream.len() != steps * hs {
            return Err(NnError::Shape {
                expected: vec![steps, hs],
                actual: vec![upstream.len()],
            });
        }
        let cols = d + hs;
        let w = &self.weight.value.values;
        let gw = &mut self.weight.grad.values;
        let gb = &mut self.bias.grad.values;
        let mut dx = vec![0.0f32; steps * d];
        let mut dh_next = vec![0.0f32; hs];
        let mut dc_next = vec![0.0f32; hs];
        let mut dz = vec![0.0f32; 4 * hs];
        for t in (0..steps).rev() {
            let g = &cache.gates[t * 4 * hs..(t + 1) * 4 * hs];
            let c = &cache.cell[(t + 1) * hs..(t + 2) * hs];
            let c_prev = &cache.cell[t * hs..(t + 1) * hs];
            for j in 0..hs {
                let (i, f, o, cand) = (g[j], g[hs + j], g[2 * hs + j], g[3 * hs + j]);
                let tc = c[j].tanh();
                let dh = upstream[t * hs + j] + dh_next[j];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[j];
                dz[j] = dc * cand * i * (1.0 - i);
                dz[hs + j] = dc * c_prev[j] * f * (1.0 - f);
                dz[2 * hs + j] = dh * tc * o * (1.0 - o);
                dz[3 * hs + j] = dc * i * (1.0 - cand * cand);
                dc_next[j] = dc * f;
            }
            let x = &cache.inputs[t * d..(t + 1) * d];
            let h_prev = &cache.hidden[t * hs..(t + 1) * hs];
            dh_next.fill(0.0);
            let dxt = &mut dx[t * d..(t + 1) * d];
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                gb[r] += dzr;
                let grow = &mut gw[r * cols..(r + 1) * cols];
                axpy(dzr, x, &mut grow[..d]);
                axpy(dzr, h_prev, &mut grow[d..]);
                let row = &w[r * cols..(r + 1) * cols];
                axpy(dzr, &row[..d], dxt);
                axpy(dzr, &row[d..], &mut dh_next);
            }
        }
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}
