//! Optimizer drivers on one- and two-parameter problems.

use evotraj::nncore::{OptimizerKind, OptimizerState, Param, Tensor};

/// Tuned learning rates for f(w) = |w|^2 from [5, -5]. Each sits in the
/// range that converges and stays converged; Adadelta's unit-free step
/// needs a large multiplier because its first deltas are of order sqrt(eps).
pub const BOWL_LR: [(OptimizerKind, f32); 7] = [
    (OptimizerKind::RMSprop, 0.1),
    (OptimizerKind::NAdam, 0.1),
    (OptimizerKind::SGD, 0.1),
    (OptimizerKind::AdaGrad, 1.0),
    (OptimizerKind::Adadelta, 8.0),
    (OptimizerKind::Adam, 0.1),
    (OptimizerKind::AdaMax, 0.3),
];

/// Runs `steps` updates; returns the final loss and the first step at which
/// the loss fell below 1e-2.
pub fn bowl(kind: OptimizerKind, lr: f32, steps: usize) -> (f32, Option<usize>) {
    let mut p = Param::new("w", Tensor::from_vec(&[2], vec![5.0, -5.0]).unwrap());
    let mut opt = OptimizerState::new(kind, lr, 0.0);
    opt.init([&p]);
    let loss = |p: &Param| p.value.values.iter().map(|w| w * w).sum::<f32>();
    let mut reached = None;
    for s in 0..steps {
        if reached.is_none() && loss(&p) < 1e-2 {
            reached = Some(s);
        }
        p.grad.values = p.value.values.iter().map(|w| 2.0 * w).collect();
        opt.apply(&mut [&mut p]).unwrap();
    }
    (loss(&p), reached)
}

pub fn steps(kind: OptimizerKind, lr: f32, momentum: f32, w: f32, grads: &[f32]) -> f32 {
    let mut p = Param::new("w", Tensor::from_vec(&[1], vec![w]).unwrap());
    let mut opt = OptimizerState::new(kind, lr, momentum);
    opt.init([&p]);
    for &g in grads {
        p.grad.values[0] = g;
        opt.apply(&mut [&mut p]).unwrap();
    }
    p.value.values[0]
}
