//! Parameter handles for the layers both sub-networks are assembled from.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{bail, Result};
use crate::layers::{
    batchnorm, batchnorm_backward, dense, dense_backward, BatchNormCache, BatchStats,
    LstmGrads, LstmParams, Phase,
};
use crate::params::{xavier_uniform, BufferId, Grads, ParamId, ParamStore, Values};
use crate::tensor::{conv3d, conv3d_backward, Tensor};

/// One value per modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PerModality<T> {
    pub language: T,
    pub visual: T,
    pub acoustic: T,
}

impl<T> PerModality<T> {
    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> PerModality<U> {
        PerModality { language: f(self.language), visual: f(self.visual), acoustic: f(self.acoustic) }
    }

    pub fn as_ref(&self) -> PerModality<&T> {
        PerModality { language: &self.language, visual: &self.visual, acoustic: &self.acoustic }
    }

    pub fn try_map<U>(self, mut f: impl FnMut(T) -> Result<U>) -> Result<PerModality<U>> {
        Ok(PerModality {
            language: f(self.language)?,
            visual: f(self.visual)?,
            acoustic: f(self.acoustic)?,
        })
    }
}

impl<T: Copy> PerModality<T> {
    pub fn splat(value: T) -> Self {
        Self { language: value, visual: value, acoustic: value }
    }
}

/// Short modality tags used in parameter names.
pub(crate) const TAGS: PerModality<&str> = PerModality { language: "l", visual: "v", acoustic: "a" };

/// Initial dense, convolution and batch-norm shift. Slightly positive so that an
/// all-zero input (common after a rectified layer) does not land exactly on
/// the rectifier's kink.
pub(crate) const BIAS_INIT: f64 = 0.01;

pub(crate) fn accumulate(grads: &mut Grads<'_>, id: ParamId, delta: &[f64]) {
    grads[id].data_mut().iter_mut().zip(delta).for_each(|(g, d)| *g += d);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct DenseIds {
    pub w: ParamId,
    pub b: ParamId,
}

impl DenseIds {
    pub fn register(store: &mut ParamStore, seed: u64, name: &str, fan_in: usize, fan_out: usize) -> Result<Self> {
        let (wname, bname) = (format!("{name}.w"), format!("{name}.b"));
        let w = xavier_uniform(seed, &wname, &[fan_in, fan_out], fan_in, fan_out)?;
        let b = Tensor::filled(&[fan_out], BIAS_INIT)?;
        Ok(Self { w: store.register(&wname, w)?, b: store.register(&bname, b)? })
    }

    pub fn forward(&self, values: Values<'_>, x: &[f64]) -> Result<Vec<f64>> {
        dense(x, &values[self.w], values[self.b].data())
    }

    /// Accumulates weight and bias gradients, returns the input gradient.
    pub fn backward(&self, values: Values<'_>, grads: &mut Grads<'_>, x: &[f64], d_out: &[f64]) -> Result<Vec<f64>> {
        let g = dense_backward(x, &values[self.w], d_out)?;
        accumulate(grads, self.w, g.weight.data());
        accumulate(grads, self.b, &g.bias);
        Ok(g.input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvIds {
    pub kernels: ParamId,
    pub bias: Option<ParamId>,
    pub filters: usize,
    pub stride: usize,
}

impl ConvIds {
    pub fn register(
        store: &mut ParamStore,
        seed: u64,
        name: &str,
        filters: usize,
        kernel: usize,
        stride: usize,
        with_bias: bool,
    ) -> Result<Self> {
        let (kname, bname) = (format!("{name}.kernels"), format!("{name}.bias"));
        let k3 = kernel * kernel * kernel;
        let kernels = xavier_uniform(seed, &kname, &[filters, kernel, kernel, kernel], k3, filters * k3)?;
        let kernels = store.register(&kname, kernels)?;
        let bias = match with_bias {
            true => Some(store.register(&bname, Tensor::filled(&[filters], BIAS_INIT)?)?),
            false => None,
        };
        Ok(Self { kernels, bias, filters, stride })
    }

    pub fn forward(&self, values: Values<'_>, cube: &Tensor) -> Result<Tensor> {
        match self.bias {
            Some(b) => conv3d(cube, &values[self.kernels], values[b].data(), self.stride),
            None => conv3d(cube, &values[self.kernels], &vec![0.0; self.filters], self.stride),
        }
    }

    pub fn backward(&self, values: Values<'_>, grads: &mut Grads<'_>, cube: &Tensor, d_out: &Tensor) -> Result<Tensor> {
        let g = conv3d_backward(cube, &values[self.kernels], self.stride, d_out)?;
        accumulate(grads, self.kernels, g.kernels.data());
        if let Some(b) = self.bias {
            accumulate(grads, b, &g.bias);
        }
        Ok(g.input)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LstmIds {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
}

impl LstmIds {
    /// Xavier weights; zero biases except the forget gate at 1.
    pub fn register(store: &mut ParamStore, seed: u64, name: &str, input: usize, hidden: usize) -> Result<Self> {
        let (xn, hn) = (format!("{name}.w_x"), format!("{name}.w_h"));
        let w_x = xavier_uniform(seed, &xn, &[input, 4 * hidden], input, 4 * hidden)?;
        let w_h = xavier_uniform(seed, &hn, &[hidden, 4 * hidden], hidden, 4 * hidden)?;
        let mut bias = Tensor::zeros(&[4 * hidden])?;
        bias.data_mut()[2 * hidden..3 * hidden].fill(1.0);
        Ok(Self {
            w_x: store.register(&xn, w_x)?,
            w_h: store.register(&hn, w_h)?,
            bias: store.register(&format!("{name}.bias"), bias)?,
        })
    }

    pub fn params<'a>(&self, values: Values<'a>) -> LstmParams<'a> {
        LstmParams { w_x: values.get(self.w_x), w_h: values.get(self.w_h), bias: values.get(self.bias) }
    }

    pub fn accumulate(&self, grads: &mut Grads<'_>, g: &LstmGrads) {
        accumulate(grads, self.w_x, g.w_x.data());
        accumulate(grads, self.w_h, g.w_h.data());
        accumulate(grads, self.bias, g.bias.data());
    }
}

/// Batch-norm affine parameters and running statistics over `features`
/// columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BnIds {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
}

impl BnIds {
    pub fn register(store: &mut ParamStore, name: &str, features: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.register(&format!("{name}.gamma"), Tensor::filled(&[features], 1.0)?)?,
            beta: store.register(&format!("{name}.beta"), Tensor::filled(&[features], BIAS_INIT)?)?,
            running_mean: store.register_buffer(&format!("{name}.running_mean"), Tensor::zeros(&[features])?)?,
            running_var: store.register_buffer(&format!("{name}.running_var"), Tensor::filled(&[features], 1.0)?)?,
        })
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        rows: &[Vec<f64>],
        phase: Phase,
    ) -> Result<(Vec<Vec<f64>>, BatchNormCache, Option<BatchStats>)> {
        let x = stack_rows(rows)?;
        let (y, cache, stats) = batchnorm(
            &x,
            store.value(self.gamma).data(),
            store.value(self.beta).data(),
            store.buffer(self.running_mean).data(),
            store.buffer(self.running_var).data(),
            phase,
        )?;
        Ok((unstack_rows(&y), cache, stats))
    }

    pub fn backward(
        &self,
        values: Values<'_>,
        grads: &mut Grads<'_>,
        cache: &BatchNormCache,
        d_rows: &[Vec<f64>],
    ) -> Result<Vec<Vec<f64>>> {
        let g = batchnorm_backward(cache, values[self.gamma].data(), &stack_rows(d_rows)?);
        accumulate(grads, self.gamma, &g.gamma);
        accumulate(grads, self.beta, &g.beta);
        Ok(unstack_rows(&g.input))
    }

    pub fn update_running(&self, store: &mut ParamStore, stats: &BatchStats) {
        let mut mean = store.buffer(self.running_mean).clone();
        let mut var = store.buffer(self.running_var).clone();
        stats.update_running(&mut mean, &mut var);
        *store.buffer_mut(self.running_mean) = mean;
        *store.buffer_mut(self.running_var) = var;
    }
}

fn stack_rows(rows: &[Vec<f64>]) -> Result<Tensor> {
    let Some(first) = rows.first() else {
        bail!(Dimension, "cannot normalise an empty batch");
    };
    let width = first.len();
    let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
    Tensor::from_vec(&[rows.len(), width], data)
}

fn unstack_rows(t: &Tensor) -> Vec<Vec<f64>> {
    t.data().chunks_exact(t.shape()[1]).map(<[f64]>::to_vec).collect()
}

/// Parameter name for a per-step block: `unique.step_fc` + step 3 gives
/// `unique.step_fc.s03`.
pub(crate) fn step_name(base: &str, step: Option<usize>) -> String {
    match step {
        Some(k) => format!("{base}.s{k:02}"),
        None => String::from(base),
    }
}
