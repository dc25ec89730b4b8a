//! Minimal reverse-mode kernels for the CNN→LSTM trajectory predictor.
//!
//! Every layer exposes an explicit `forward` that returns a cache and a
//! `backward` that consumes it, accumulates parameter gradients and returns
//! the gradient with respect to its input. All arithmetic is `f32`.

mod conv;
mod dense;
mod dropout;
mod gradcheck;
mod loss;
mod lstm;
mod optim;
mod serialize;
mod tensor;

pub use conv::{conv_output_len, Conv2d, ConvCache, ConvEncoder, ConvEncoderCache, MaxPool2, PoolCache};
pub use dense::{Activation, Dense, DenseCache};
pub use dropout::{dropout, dropout_backward, Mode};
pub use gradcheck::{gradient_check, Differentiable, GradCheckConfig, GradCheckReport, GradMismatch};
pub use loss::{loss_eval, LossKind};
pub use lstm::{lstm_cell_step, LstmCache, LstmCell};
pub use optim::{OptimizerKind, OptimizerState};
pub use serialize::{load_parameters, save_parameters, ParamDescriptor, ParamEntry};
pub use tensor::{glorot_uniform, Param, Tensor};

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    Shape { expected: Vec<usize>, actual: Vec<usize> },
    #[error("non-finite value in {what} at step {step}")]
    Numerical { what: String, step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("optimizer state error: {0}")]
    State(String),
    #[error("parameter file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn check_len(expected: &[usize], actual_len: usize) -> Result<()> {
    let want: usize = expected.iter().product();
    if want != actual_len {
        return Err(NnError::Shape {
            expected: expected.to_vec(),
            actual: vec![actual_len],
        });
    }
    Ok(())
}

/// Dot product with eight independent accumulators so the loop vectorises.
/// The summation order is fixed, which keeps results bitwise reproducible.
#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f32; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + (-x).exp())
}
