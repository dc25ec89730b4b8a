use serde::{Deserialize, Serialize};

use super::{axpy, dot, glorot_uniform, NnError, Param, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

/// Fully connected layer, `weight` is `outputs × inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f32>,
    /// Post-activation output, `rows × outputs`.
    pub output: Vec<f32>,
    pub rows: usize,
}

impl Dense {
    pub fn new(name: &str, inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        Self {
            weight: Param::new(
                format!("{name}.weight"),
                glorot_uniform(&[outputs, inputs], inputs, outputs, rng),
            ),
            bias: Param::zeros(format!("{name}.bias"), &[outputs]),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.value.shape[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.value.shape[0]
    }

    pub fn forward(&self, input: &[f32], rows: usize) -> Result<DenseCache> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if input.len() != rows * n_in {
            return Err(NnError::Shape {
                expected: vec![rows, n_in],
                actual: vec![rows, input.len() / rows.max(1)],
            });
        }
        let w = &self.weight.value.values;
        let b = &self.bias.value.values;
        let mut output = vec![0.0f32; rows * n_out];
        for (x, out) in input.chunks_exact(n_in).zip(output.chunks_exact_mut(n_out)) {
            for (o, y) in out.iter_mut().enumerate() {
                let z = b[o] + dot(&w[o * n_in..(o + 1) * n_in], x);
                *y = match self.activation {
                    Activation::Relu => z.max(0.0),
                    Activation::Identity => z,
                };
            }
        }
        Ok(DenseCache {
            input: input.to_vec(),
            output,
            rows,
        })
    }

    /// Accumulates into the parameter gradients and returns `dL/dinput`.
    pub fn backward(&mut self, cache: &DenseCache, upstream: &[f32]) -> Result<Vec<f32>> {
        let (n_in, n_out) = (self.inputs(), self.outputs());
        if upstream.len() != cache.rows * n_out {
            return Err(NnError::Shape {
                expected: vec![cache.rows, n_out],
                actual: vec![upstream.len()],
            });
        }
        let w = &self.weight.value.values;
        let gw = &mut self.weight.grad.values;
        let gb = &mut self.bias.grad.values;
        let mut dinput = vec![0.0f32; cache.rows * n_in];
        for r in 0..cache.rows {
            let x = &cache.input[r * n_in..(r + 1) * n_in];
            let dx = &mut dinput[r * n_in..(r + 1) * n_in];
            for o in 0..n_out {
                let mut dz = upstream[r * n_out + o];
                if self.activation == Activation::Relu && cache.output[r * n_out + o] <= 0.0 {
                    dz = 0.0;
                }
                if dz == 0.0 {
                    continue;
                }
                gb[o] += dz;
                axpy(dz, x, &mut gw[o * n_in..(o + 1) * n_in]);
                axpy(dz, &w[o * n_in..(o + 1) * n_in], dx);
            }
        }
        Ok(dinput)
    }

    pub fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_layer_gives_zero() {
        let mut d = Dense::new("d", 3, 2, Activation::Identity, &mut rng::seeded(0));
        d.weight.value.values.fill(0.0);
        let out = d.forward(&[1.0, -2.0, 3.0], 1).unwrap();
        assert_eq!(out.output, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_relu() {
        let mut d = Dense::new("d", 2, 2, Activation::Relu, &mut rng::seeded(0));
        d.weight.value.values = vec![1.0, 0.0, 0.0, 1.0];
        let out = d.forward(&[-1.0, 2.0], 1).unwrap();
        assert_eq!(out.output, vec![0.0, 2.0]);
    }

    #[test]
    fn shape_error_names_shapes() {
        let d = Dense::new("d", 3, 2, Activation::Relu, &mut rng::seeded(0));
        let err = d.forward(&[1.0, 2.0], 1).unwrap_err();
        assert!(matches!(err, NnError::Shape { ref expected, .. } if expected == &vec![1, 3]));
        assert!(err.to_string().contains("[1, 3]"));
    }

    #[test]
    fn batched_rows_are_independent() {
        let d = Dense::new("d", 4, 3, Activation::Relu, &mut rng::seeded(2));
        let a = [0.1, -0.4, 0.9, 0.3];
        let b = [-0.7, 0.2, 0.5, -0.1];
        let both: Vec<f32> = a.iter().chain(&b).copied().collect();
        let out = d.forward(&both, 2).unwrap().output;
        assert_eq!(out[..3], d.forward(&a, 1).unwrap().output[..]);
        assert_eq!(out[3..], d.forward(&b, 1).unwrap().output[..]);
    }
}
