//! Regression, binary and 7-class sentiment metrics.
//!
//! Binary labels split at zero with zero counted positive. Seven-class
//! labels clamp to `[-3, 3]` and round half away from zero. F1 is the F1 of
//! the positive class.

use core::fmt;

use crate::error::{bail, Result};

fn check_pair(pred: &[f64], target: &[f64]) -> Result<usize> {
    if pred.len() != target.len() {
        bail!(Data, "prediction length {} differs from target length {}", pred.len(), target.len());
    }
    if pred.is_empty() {
        bail!(Data, "metrics need at least one sample");
    }
    Ok(pred.len())
}

pub fn mae(pred: &[f64], target: &[f64]) -> Result<f64> {
    let n = check_pair(pred, target)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum::<f64>() / n as f64)
}

/// Sample Pearson correlation. Zero variance on either side is an error,
/// never a silent zero.
pub fn pearson(pred: &[f64], target: &[f64]) -> Result<f64> {
    let n = check_pair(pred, target)?;
    if n < 2 {
        bail!(UndefinedMetric, "correlation needs at least 2 samples");
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / n as f64;
    let (mp, mt) = (mean(pred), mean(target));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(target) {
        let (dp, dt) = (p - mp, t - mt);
        sxy += dp * dt;
        sxx += dp * dp;
        syy += dt * dt;
    }
    if sxx == 0.0 || syy == 0.0 {
        bail!(UndefinedMetric, "correlation undefined for a constant vector");
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Class index in `0..=6` for a sentiment score.
pub fn map_to_class7(y: f64) -> Result<usize> {
    if !y.is_finite() {
        bail!(Data, "cannot map non-finite value {y} to a class");
    }
    let s = libm::round(y.clamp(-3.0, 3.0));
    Ok((s + 3.0) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when neither predictions nor targets contain a positive; F1 is
    /// then reported as 1.
    pub f1_degenerate: bool,
}

pub fn binary_metrics(pred: &[f64], target: &[f64]) -> Result<BinaryMetrics> {
    let n = check_pair(pred, target)?;
    let (mut tp, mut fp, mut fneg, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for (p, t) in pred.iter().zip(target) {
        let (pp, tp_) = (*p >= 0.0, *t >= 0.0);
        correct += usize::from(pp == tp_);
        match (pp, tp_) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fneg += 1,
            (false, false) => {}
        }
    }
    let accuracy = correct as f64 / n as f64;
    if tp + fp + fneg == 0 {
        return Ok(BinaryMetrics { accuracy, precision: 1.0, recall: 1.0, f1: 1.0, f1_degenerate: true });
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(BinaryMetrics { accuracy, precision, recall, f1, f1_degenerate: false })
}

pub fn class7_accuracy(pred: &[f64], target: &[f64]) -> Result<f64> {
    let n = check_pair(pred, target)?;
    let mut hits = 0;
    for (p, t) in pred.iter().zip(target) {
        hits += usize::from(map_to_class7(*p)? == map_to_class7(*t)?);
    }
    Ok(hits as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    /// `None` when the correlation is undefined (constant predictions).
    pub correlation: Option<f64>,
    pub binary_accuracy: f64,
    pub binary_f1: f64,
    pub f1_degenerate: bool,
    pub class7_accuracy: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(pred: &[f64], target: &[f64]) -> Result<Self> {
        let n = check_pair(pred, target)?;
        let correlation = match pearson(pred, target) {
            Ok(r) => Some(r),
            Err(crate::Error::UndefinedMetric(_)) => None,
            Err(e) => return Err(e),
        };
        let binary = binary_metrics(pred, target)?;
        Ok(Self {
            mae: mae(pred, target)?,
            correlation,
            binary_accuracy: binary.accuracy,
            binary_f1: binary.f1,
            f1_degenerate: binary.f1_degenerate,
            class7_accuracy: class7_accuracy(pred, target)?,
            n,
        })
    }
}

/// Flat `key=value` block, one metric per line.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n={}", self.n)?;
        writeln!(f, "mae={:.6}", self.mae)?;
        match self.correlation {
            Some(r) => writeln!(f, "correlation={r:.6}")?,
            None => writeln!(f, "correlation=undefined")?,
        }
        writeln!(f, "binary_accuracy={:.6}", self.binary_accuracy)?;
        writeln!(f, "binary_f1={:.6}", self.binary_f1)?;
        writeln!(f, "binary_f1_degenerate={}", self.f1_degenerate)?;
        writeln!(f, "class7_accuracy={:.6}", self.class7_accuracy)
    }
}
