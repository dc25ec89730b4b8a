use rand::Rng as _;

use super::{NnError, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted dropout. Returns the output and the multiplicative mask
/// (0 or `1 / (1 - rate)` per element; all ones in eval mode).
pub fn dropout(input: &[f32], rate: f32, mode: Mode, rng: &mut Rng) -> Result<(Vec<f32>, Vec<f32>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NnError::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.to_vec(), vec![1.0; input.len()]));
    }
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f32> = input
        .iter()
        .map(|_| if rng.gen::<f32>() < rate { 0.0 } else { scale })
        .collect();
    let out = input.iter().zip(&mask).map(|(x, m)| x * m).collect();
    Ok((out, mask))
}

pub fn dropout_backward(upstream: &[f32], mask: &[f32]) -> Vec<f32> {
    upstream.iter().zip(mask).map(|(g, m)| g * m).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_rate_and_eval_are_identity() {
        let x = [1.0, -2.0, 3.5];
        let mut r = rng::seeded(0);
        for mode in [Mode::Train, Mode::Eval] {
            assert_eq!(dropout(&x, 0.0, mode, &mut r).unwrap().0, x.to_vec());
        }
        assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut r).unwrap().0, x.to_vec());
    }

    #[test]
    fn rate_one_rejected() {
        assert!(matches!(
            dropout(&[1.0], 1.0, Mode::Train, &mut rng::seeded(0)),
            Err(NnError::Config(_))
        ));
    }

    #[test]
    fn kept_fraction_and_mean() {
        let n = 100_000;
        let x = vec![1.0f32; n];
        let (out, mask) = dropout(&x, 0.5, Mode::Train, &mut rng::seeded(7)).unwrap();
        let kept = mask.iter().filter(|&&m| m > 0.0).count() as f64 / n as f64;
        let mean = out.iter().map(|&v| v as f64).sum::<f64>() / n as f64;
        assert!((kept - 0.5).abs() <= 0.01, "{kept}");
        assert!((mean - 1.0).abs() <= 0.02, "{mean}");
        assert_eq!(
            dropout_backward(&[2.0, 2.0], &mask[..2]),
            vec![2.0 * mask[0], 2.0 * mask[1]]
        );
    }
}
