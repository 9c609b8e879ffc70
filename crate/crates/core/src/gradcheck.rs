//! Central finite-difference check of analytic gradients.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::data::{DataDims, MultimodalDataset, MultimodalInstance};
use crate::error::{bail, Result};
use crate::layers::Phase;
use crate::model::HoseqModel;
use crate::params::{group_of, ParamId, ParamStore};
use crate::precise::{reference_loss, Dd, ReferenceLoss};
use crate::rng::RngStream;
use crate::synth::{synth_generate, SynthSpec};
use crate::tensor::Tensor;

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Worst element of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    /// Elements whose `±epsilon` perturbation crossed a kink of the loss
    /// and were differenced again with a smaller step.
    pub kink_refined: usize,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn by_group(&self) -> BTreeMap<String, f64> {
        let mut groups = BTreeMap::new();
        for p in &self.params {
            let e = groups.entry(String::from(group_of(&p.name))).or_insert(0.0_f64);
            *e = e.max(p.max_rel_error);
        }
        groups
    }

    pub fn passes(&self, threshold: f64) -> bool {
        self.params.iter().all(|p| p.max_rel_error < threshold)
    }
}

/// A loss value a central difference can be taken in.
pub trait LossValue: Copy + PartialEq + core::fmt::Debug {
    /// `(plus - minus) / (x_plus - x_minus)`.
    fn central_difference(plus: Self, minus: Self, x_plus: f64, x_minus: f64) -> f64;

    /// Identifies the smooth piece of a piecewise-smooth loss the value was
    /// evaluated on.
    fn regime(&self) -> u64 {
        0
    }
}

impl LossValue for f64 {
    fn central_difference(plus: f64, minus: f64, x_plus: f64, x_minus: f64) -> f64 {
        (plus - minus) / (x_plus - x_minus)
    }
}

impl LossValue for Dd {
    fn central_difference(plus: Dd, minus: Dd, x_plus: f64, x_minus: f64) -> f64 {
        ((plus - minus) / (Dd::from(x_plus) - Dd::from(x_minus))).to_f64()
    }
}

impl LossValue for ReferenceLoss {
    fn central_difference(plus: Self, minus: Self, x_plus: f64, x_minus: f64) -> f64 {
        Dd::central_difference(plus.value, minus.value, x_plus, x_minus)
    }

    fn regime(&self) -> u64 {
        self.regime
    }
}

/// Smallest fraction of the step a kink-straddling difference is shrunk to.
const MIN_STEP_FRACTION: f64 = 1e-6;

/// Compares the gradient `analytic` accumulates into `store` against
/// central differences of `loss` for every element of the parameters in
/// `ids`.
///
/// `loss` is evaluated twice up front and must agree with itself exactly.
/// When a perturbation leaves the smooth piece the unperturbed loss lies on
/// (see [`LossValue::regime`]) the difference is not a derivative estimate;
/// the step is then divided by 10 until both sides stay on that piece, down
/// to `epsilon * 1e-6`. Parameter values are left as they were and gradients
/// are zeroed.
pub fn grad_check<V, G, F>(
    store: &mut ParamStore,
    ids: &[ParamId],
    epsilon: f64,
    analytic: G,
    mut loss: F,
) -> Result<GradCheckReport>
where
    V: LossValue,
    G: FnOnce(&mut ParamStore) -> Result<()>,
    F: FnMut(&ParamStore) -> Result<V>,
{
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        bail!(Config, "finite-difference step must be positive, got {epsilon}");
    }
    store.zero_grads();
    analytic(store)?;
    let grads: Vec<Tensor> = ids.iter().map(|&id| store.grad(id).clone()).collect();
    store.zero_grads();
    let (first, second) = (loss(store)?, loss(store)?);
    if first != second {
        bail!(Numeric, "loss is not deterministic: {first:?} then {second:?}");
    }
    let regime = first.regime();

    let mut report = GradCheckReport::default();
    for (&id, grad) in ids.iter().zip(&grads) {
        let mut worst = ParamCheck {
            name: String::from(store.name(id)),
            max_rel_error: 0.0,
            index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for (i, &a) in grad.data().iter().enumerate() {
            let original = store.value(id).data()[i];
            let mut step = epsilon;
            let numeric = loop {
                let (x_plus, x_minus) = (original + step, original - step);
                store.value_mut(id).data_mut()[i] = x_plus;
                let plus = loss(store);
                store.value_mut(id).data_mut()[i] = x_minus;
                let minus = loss(store);
                store.value_mut(id).data_mut()[i] = original;
                let (plus, minus) = (plus?, minus?);
                let smooth = plus.regime() == regime && minus.regime() == regime;
                if smooth || step <= epsilon * MIN_STEP_FRACTION {
                    break V::central_difference(plus, minus, x_plus, x_minus);
                }
                if step == epsilon {
                    report.kink_refined += 1;
                }
                step /= 10.0;
            };
            let err = relative_error(a, numeric);
            if err.is_nan() || err > worst.max_rel_error {
                worst = ParamCheck { max_rel_error: err, index: i, analytic: a, numeric, ..worst };
            }
        }
        report.params.push(worst);
    }
    Ok(report)
}

/// Two-instance problem with `t_k = 4` and modality widths 6 / 4 / 5.
pub fn toy_dataset(seed: u64) -> Result<MultimodalDataset> {
    let spec = SynthSpec {
        n: 2,
        dims: DataDims { t_k: 4, d_l: 6, d_v: 4, d_a: 5 },
        async_fraction: 0.5,
        noise_sigma: 0.1,
        seed,
    };
    Ok(synth_generate(&spec)?.dataset)
}

/// Checks the training-mode loss of `model` on `dataset` over the
/// parameters its mode trains. Analytic gradients come from the model's
/// backward pass, differences from [`reference_loss`]. The model must be
/// built without dropout. `grad_scale` multiplies the analytic gradient;
/// anything but 1 is a deliberately broken backward pass.
pub fn check_model(
    model: &HoseqModel,
    store: &mut ParamStore,
    dataset: &MultimodalDataset,
    epsilon: f64,
    grad_scale: f64,
) -> Result<GradCheckReport> {
    let cfg = model.config();
    if cfg.common.dropout_rate != 0.0 || cfg.unique.dropout_rate != 0.0 {
        bail!(Config, "gradient check needs dropout disabled");
    }
    let ids: Vec<ParamId> = store.ids().filter(|&id| model.trains(store.name(id))).collect();
    let batch: Vec<&MultimodalInstance> = dataset.instances().iter().collect();
    let mut model_loss = 0.0;
    let report = grad_check(
        store,
        &ids,
        epsilon,
        |store| {
            let mut rng = RngStream::named(cfg.seed, "gradcheck");
            model_loss = model.loss_and_grad(store, &batch, Phase::Train, &mut rng)?.0;
            let (_, mut grads) = store.split_mut();
            for &id in &ids {
                grads[id].data_mut().iter_mut().for_each(|g| *g *= grad_scale);
            }
            Ok(())
        },
        |store| reference_loss(cfg, store, &batch),
    )?;
    let reference = reference_loss(cfg, store, &batch)?.value.to_f64();
    if relative_error(model_loss, reference) > 1e-12 {
        bail!(Numeric, "model loss {model_loss} disagrees with the reference evaluation {reference}");
    }
    Ok(report)
}
