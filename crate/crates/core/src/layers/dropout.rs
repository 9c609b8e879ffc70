use alloc::vec::Vec;

use super::Phase;
use crate::error::{bail, Result};
use crate::rng::RngStream;

/// Per-element scale factors applied by an inverted-dropout forward pass:
/// `0` for dropped units, `1 / (1 - rate)` for kept ones. `None` means the
/// pass was the identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DropoutMask(Option<Vec<f64>>);

impl DropoutMask {
    pub fn identity() -> Self {
        Self(None)
    }

    pub fn scales(&self) -> Option<&[f64]> {
        self.0.as_deref()
    }
}

pub fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        bail!(Config, "dropout rate must lie in [0, 1), got {rate}");
    }
    Ok(())
}

/// Inverted dropout. Identity in [`Phase::Eval`] and for `rate == 0`.
pub fn dropout(
    x: &[f64],
    rate: f64,
    rng: &mut RngStream,
    phase: Phase,
) -> Result<(Vec<f64>, DropoutMask)> {
    check_rate(rate)?;
    if phase == Phase::Eval || rate == 0.0 {
        return Ok((x.to_vec(), DropoutMask::identity()));
    }
    let keep = 1.0 / (1.0 - rate);
    let scales: Vec<f64> = x.iter().map(|_| if rng.bernoulli(rate) { 0.0 } else { keep }).collect();
    let out = x.iter().zip(&scales).map(|(v, s)| v * s).collect();
    Ok((out, DropoutMask(Some(scales))))
}

pub fn dropout_backward(mask: &DropoutMask, upstream: &[f64]) -> Vec<f64> {
    match &mask.0 {
        None => upstream.to_vec(),
        Some(scales) => upstream.iter().zip(scales).map(|(g, s)| g * s).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_rate_and_eval_are_identity() {
        let x = [1.0, -2.0, 3.0];
        let mut rng = RngStream::new(1);
        assert_eq!(dropout(&x, 0.0, &mut rng, Phase::Train).unwrap().0, x);
        assert_eq!(dropout(&x, 0.6, &mut rng, Phase::Eval).unwrap().0, x);
    }

    #[test]
    fn invalid_rate() {
        let mut rng = RngStream::new(1);
        assert!(matches!(
            dropout(&[1.0], 1.0, &mut rng, Phase::Train),
            Err(crate::Error::Config(_))
        ));
        assert!(dropout(&[1.0], -0.1, &mut rng, Phase::Train).is_err());
    }

    #[test]
    fn keep_fraction_law_of_large_numbers() {
        let x = vec![1.0; 100_000];
        let mut rng = RngStream::new(2024);
        let (y, _) = dropout(&x, 0.3, &mut rng, Phase::Train).unwrap();
        let kept = y.iter().filter(|&&v| v != 0.0).count() as f64 / x.len() as f64;
        assert!((kept - 0.7).abs() < 0.01, "kept fraction {kept}");
        assert!(y.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.7).abs() < 1e-15));
    }

    #[test]
    fn backward_reuses_mask() {
        let mut rng = RngStream::new(5);
        let (y, mask) = dropout(&[2.0; 8], 0.5, &mut rng, Phase::Train).unwrap();
        let g = dropout_backward(&mask, &[1.0; 8]);
        for (yi, gi) in y.iter().zip(&g) {
            assert_eq!(*yi, 2.0 * gi);
        }
    }
}
