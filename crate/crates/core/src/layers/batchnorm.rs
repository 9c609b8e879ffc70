use alloc::vec;
use alloc::vec::Vec;

use super::Phase;
use crate::error::{bail, Result};
use crate::tensor::Tensor;

pub const BN_EPSILON: f64 = 1e-5;
/// Weight of the old running statistic in each update.
pub const BN_MOMENTUM: f64 = 0.9;

/// Per-feature batch mean and (biased) variance from a training pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchStats {
    /// `running = momentum * running + (1 - momentum) * batch`.
    pub fn update_running(&self, running_mean: &mut Tensor, running_var: &mut Tensor) {
        let blend = |r: &mut [f64], b: &[f64]| {
            r.iter_mut().zip(b).for_each(|(r, b)| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * b)
        };
        blend(running_mean.data_mut(), &self.mean);
        blend(running_var.data_mut(), &self.var);
    }
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    x_hat: Tensor,
    inv_std: Vec<f64>,
    phase: Phase,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub input: Tensor,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Batch normalisation over the rows of `x` (`[n, features]`).
///
/// Training normalises by the batch statistics and returns them so the
/// caller can fold them into the running averages; evaluation normalises by
/// the running statistics.
pub fn batchnorm(
    x: &Tensor,
    gamma: &[f64],
    beta: &[f64],
    running_mean: &[f64],
    running_var: &[f64],
    phase: Phase,
) -> Result<(Tensor, BatchNormCache, Option<BatchStats>)> {
    if x.rank() != 2 {
        bail!(Dimension, "batchnorm input must be [batch, features], got {:?}", x.shape());
    }
    let (n, f) = (x.shape()[0], x.shape()[1]);
    for (what, len) in [
        ("gamma", gamma.len()),
        ("beta", beta.len()),
        ("running mean", running_mean.len()),
        ("running var", running_var.len()),
    ] {
        if len != f {
            bail!(Dimension, "batchnorm {what} has length {len}, expected {f}");
        }
    }
    let (mean, var, stats) = match phase {
        Phase::Train => {
            if n < 2 {
                bail!(Config, "batchnorm in training needs a batch of at least 2, got {n}");
            }
            let mut mean = vec![0.0; f];
            for row in x.data().chunks_exact(f) {
                mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= n as f64);
            let mut var = vec![0.0; f];
            for row in x.data().chunks_exact(f) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= n as f64);
            let stats = BatchStats { mean: mean.clone(), var: var.clone() };
            (mean, var, Some(stats))
        }
        Phase::Eval => (running_mean.to_vec(), running_var.to_vec(), None),
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + BN_EPSILON)).collect();
    let mut x_hat = x.clone();
    let mut y = x.clone();
    for (hrow, yrow) in x_hat.data_mut().chunks_exact_mut(f).zip(y.data_mut().chunks_exact_mut(f)) {
        for j in 0..f {
            hrow[j] = (hrow[j] - mean[j]) * inv_std[j];
            yrow[j] = gamma[j] * hrow[j] + beta[j];
        }
    }
    Ok((y, BatchNormCache { x_hat, inv_std, phase }, stats))
}

pub fn batchnorm_backward(cache: &BatchNormCache, gamma: &[f64], grad_out: &Tensor) -> BatchNormGrads {
    let f = gamma.len();
    let n = grad_out.shape()[0] as f64;
    let mut dgamma = vec![0.0; f];
    let mut dbeta = vec![0.0; f];
    for (g, h) in grad_out.data().chunks_exact(f).zip(cache.x_hat.data().chunks_exact(f)) {
        for j in 0..f {
            dbeta[j] += g[j];
            dgamma[j] += g[j] * h[j];
        }
    }
    let mut dx = grad_out.clone();
    for (d, h) in dx.data_mut().chunks_exact_mut(f).zip(cache.x_hat.data().chunks_exact(f)) {
        for j in 0..f {
            let scale = gamma[j] * cache.inv_std[j];
            d[j] = match cache.phase {
                Phase::Train => scale * (d[j] - dbeta[j] / n - h[j] * dgamma[j] / n),
                Phase::Eval => scale * d[j],
            };
        }
    }
    BatchNormGrads { input: dx, gamma: dgamma, beta: dbeta }
}
