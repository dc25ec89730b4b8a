use serde::{Deserialize, Serialize};

use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    #[serde(rename = "MSE")]
    Mse,
    LogCosh,
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Mse => "MSE",
            LossKind::LogCosh => "LogCosh",
        })
    }
}

/// `log(cosh(x))` without overflow for large `|x|`.
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Mean loss over all elements and its gradient with respect to `prediction`.
/// The loss is accumulated and returned in `f64`.
pub fn loss_eval(kind: LossKind, prediction: &[f32], target: &[f32]) -> Result<(f64, Vec<f32>)> {
    if prediction.len() != target.len() {
        return Err(NnError::Shape {
            expected: vec![target.len()],
            actual: vec![prediction.len()],
        });
    }
    let n = prediction.len().max(1) as f32;
    let mut total = 0.0f64;
    let grad = prediction
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let e = p as f64 - t as f64;
            match kind {
                LossKind::Mse => {
                    total += e * e;
                    (2.0 * e / n as f64) as f32
                }
                LossKind::LogCosh => {
                    total += log_cosh(e);
                    (e.tanh() / n as f64) as f32
                }
            }
        })
        .collect();
    Ok(((total / n as f64).max(0.0), grad))
}
