//! Synthetic sentiment task with planted cross-modal cues.
//!
//! Features are standard normal. Each label mixes two planted components:
//!
//! * a synchronous cue, the time average of `l_k[0] * v_k[0] * a_k[0]`,
//!   which is a sum of per-step trilinear products;
//! * an asynchronous cue `v_{k*}[1] * a_{k*}[1]` at a single step `k*`.
//!   For "late" instances (probability `async_fraction`) the cue sits at the
//!   last step, after the language stream has ended; otherwise `k*` is drawn
//!   uniformly.
//!
//! `label = clamp(s_sync + s_async + noise, -3, 3)`.
//!
//! The synchronous cue is a sum over steps of per-step products, which a
//! per-step tensor with sum pooling reads directly but a final recurrent
//! state does not. The late cue depends on position, which sum pooling
//! cannot see but a recurrent final state can.

use alloc::vec::Vec;

use crate::data::{DataDims, MultimodalDataset, MultimodalInstance, Split, LABEL_RANGE};
use crate::error::{bail, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub dims: DataDims,
    pub async_fraction: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let d = self.dims;
        if self.n == 0 {
            bail!(Config, "synthetic dataset needs at least one instance");
        }
        if d.t_k < 2 || d.d_l < 2 || d.d_v < 2 || d.d_a < 2 {
            bail!(Config, "synthetic dims must all be >= 2, got ({d})");
        }
        if !(0.0..=1.0).contains(&self.async_fraction) {
            bail!(Config, "async fraction must lie in [0, 1], got {}", self.async_fraction);
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            bail!(Config, "noise sigma must be finite and non-negative, got {}", self.noise_sigma);
        }
        Ok(())
    }
}

/// Generated dataset plus the per-instance cue placement.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: MultimodalDataset,
    /// Step carrying the asynchronous cue of each instance.
    pub cue_steps: Vec<usize>,
    /// Whether the instance was a late-cue instance.
    pub late: Vec<bool>,
}

fn normal_matrix(rng: &mut RngStream, t: usize, d: usize) -> Result<Tensor> {
    let data = (0..t * d).map(|_| rng.standard_normal()).collect();
    Tensor::from_vec(&[t, d], data)
}

pub fn synth_generate(spec: &SynthSpec) -> Result<SynthOutput> {
    spec.validate()?;
    let DataDims { t_k, d_l, d_v, d_a } = spec.dims;
    let mut rng = RngStream::named(spec.seed, "synth");
    let mut instances = Vec::with_capacity(spec.n);
    let mut cue_steps = Vec::with_capacity(spec.n);
    let mut late = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let language = normal_matrix(&mut rng, t_k, d_l)?;
        let visual = normal_matrix(&mut rng, t_k, d_v)?;
        let acoustic = normal_matrix(&mut rng, t_k, d_a)?;
        let is_late = rng.bernoulli(spec.async_fraction);
        let cue = if is_late { t_k - 1 } else { rng.below(t_k) };
        let noise = if spec.noise_sigma > 0.0 { rng.normal(0.0, spec.noise_sigma) } else { 0.0 };

        let sync = (0..t_k)
            .map(|k| language.get(&[k, 0]) * visual.get(&[k, 0]) * acoustic.get(&[k, 0]))
            .sum::<f64>()
            / t_k as f64;
        let asynchronous = visual.get(&[cue, 1]) * acoustic.get(&[cue, 1]);
        let label = (sync + asynchronous + noise).clamp(LABEL_RANGE.0, LABEL_RANGE.1);

        instances.push(MultimodalInstance::new(language, visual, acoustic, label)?);
        cue_steps.push(cue);
        late.push(is_late);
    }
    Ok(SynthOutput { dataset: MultimodalDataset::new(instances, Split::Train)?, cue_steps, late })
}
