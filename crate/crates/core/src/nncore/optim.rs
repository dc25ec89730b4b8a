use serde::{Deserialize, Serialize};

use super::{NnError, Param, Result};

/// Update rules available to the genome, in allele order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OptimizerKind {
    RMSprop,
    NAdam,
    SGD,
    AdaGrad,
    Adadelta,
    Adam,
    AdaMax,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 7] = [
        OptimizerKind::RMSprop,
        OptimizerKind::NAdam,
        OptimizerKind::SGD,
        OptimizerKind::AdaGrad,
        OptimizerKind::Adadelta,
        OptimizerKind::Adam,
        OptimizerKind::AdaMax,
    ];

    /// Learning rate used when none is configured.
    pub fn default_learning_rate(self) -> f32 {
        match self {
            OptimizerKind::SGD => 1e-2,
            _ => 1e-3,
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Debug::fmt(self, f)
    }
}

/// Two slot vectors per parameter; their meaning depends on the rule.
#[derive(Debug, Clone, PartialEq)]
struct Slots {
    a: Vec<f32>,
    b: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f32,
    /// Momentum for SGD.
    pub momentum: f32,
    pub beta1: f32,
    pub beta2: f32,
    /// Decay of the squared-gradient average for RMSprop.
    pub rms_rho: f32,
    /// Decay for Adadelta's running averages.
    pub adadelta_rho: f32,
    pub epsilon: f32,
    step: u64,
    slots: Vec<Slots>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f32, momentum: f32) -> Self {
        Self {
            kind,
            learning_rate,
            momentum,
            beta1: 0.9,
            beta2: 0.999,
            rms_rho: 0.9,
            adadelta_rho: 0.95,
            epsilon: match kind {
                OptimizerKind::Adadelta => 1e-6,
                _ => 1e-8,
            },
            step: 0,
            slots: Vec::new(),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    /// Allocates zeroed slots matching `params`.
    pub fn init<'a>(&mut self, params: impl IntoIterator<Item = &'a Param>) {
        self.slots = params
            .into_iter()
            .map(|p| Slots {
                a: vec![0.0; p.len()],
                b: vec![0.0; p.len()],
            })
            .collect();
        self.step = 0;
    }

    /// Applies one update from the accumulated gradients.
    pub fn apply(&mut self, params: &mut [&mut Param]) -> Result<()> {
        if self.slots.len() != params.len() {
            return Err(NnError::State(format!(
                "{} slot sets initialised for {} parameters",
                self.slots.len(),
                params.len()
            )));
        }
        for (p, s) in params.iter().zip(&self.slots) {
            if s.a.len() != p.len() {
                return Err(NnError::State(format!(
                    "slot for `{}` has {} entries, parameter has {}",
                    p.name,
                    s.a.len(),
                    p.len()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let lr = self.learning_rate;
        let eps = self.epsilon;
        let (b1, b2) = (self.beta1, self.beta2);
        for (p, s) in params.iter_mut().zip(self.slots.iter_mut()) {
            let w = &mut p.value.values;
            let g = &p.grad.values;
            match self.kind {
                OptimizerKind::SGD => {
                    let mu = self.momentum;
                    for i in 0..w.len() {
                        s.a[i] = mu * s.a[i] - lr * g[i];
                        w[i] += s.a[i];
                    }
                }
                OptimizerKind::RMSprop => {
                    let rho = self.rms_rho;
                    for i in 0..w.len() {
                        s.a[i] = rho * s.a[i] + (1.0 - rho) * g[i] * g[i];
                        w[i] -= lr * g[i] / (s.a[i].sqrt() + eps);
                    }
                }
                OptimizerKind::AdaGrad => {
                    for i in 0..w.len() {
                        s.a[i] += g[i] * g[i];
                        w[i] -= lr * g[i] / (s.a[i].sqrt() + eps);
                    }
                }
                OptimizerKind::Adadelta => {
                    let rho = self.adadelta_rho;
                    for i in 0..w.len() {
                        s.a[i] = rho * s.a[i] + (1.0 - rho) * g[i] * g[i];
                        let delta = -((s.b[i] + eps).sqrt() / (s.a[i] + eps).sqrt()) * g[i];
                        s.b[i] = rho * s.b[i] + (1.0 - rho) * delta * delta;
                        w[i] += lr * delta;
                    }
                }
                OptimizerKind::Adam => {
                    let c1 = 1.0 - b1.powi(t);
                    let c2 = 1.0 - b2.powi(t);
                    for i in 0..w.len() {
                        s.a[i] = b1 * s.a[i] + (1.0 - b1) * g[i];
                        s.b[i] = b2 * s.b[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = s.a[i] / c1;
                        let v_hat = s.b[i] / c2;
                        w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                OptimizerKind::NAdam => {
                    // Nesterov look-ahead on the bias-corrected first moment.
                    let c1 = 1.0 - b1.powi(t);
                    let c1_next = 1.0 - b1.powi(t + 1);
                    let c2 = 1.0 - b2.powi(t);
                    for i in 0..w.len() {
                        s.a[i] = b1 * s.a[i] + (1.0 - b1) * g[i];
                        s.b[i] = b2 * s.b[i] + (1.0 - b2) * g[i] * g[i];
                        let m_hat = b1 * s.a[i] / c1_next + (1.0 - b1) * g[i] / c1;
                        let v_hat = s.b[i] / c2;
                        w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
                OptimizerKind::AdaMax => {
                    let c1 = 1.0 - b1.powi(t);
                    for i in 0..w.len() {
                        s.a[i] = b1 * s.a[i] + (1.0 - b1) * g[i];
                        s.b[i] = (b2 * s.b[i]).max(g[i].abs());
                        w[i] -= (lr / c1) * s.a[i] / (s.b[i] + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
