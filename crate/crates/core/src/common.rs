//! Common sub-network.
//!
//! Each modality sequence is summarised by the final hidden state of its own
//! LSTM, projected to `latent_dim` and activated. The three latent vectors
//! form the cube `h_V ⊗ h_A ⊗ h_L`, which goes through a valid 3D
//! convolution (optionally batch-normalised) and an activation, is flattened
//! and passes a stack of activated fully-connected layers with dropout. The
//! last layer's output is `h_com`; an affine head maps it to `y_com`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::blocks::{BnIds, ConvIds, DenseIds, LstmIds, PerModality, TAGS};
use crate::data::{DataDims, MultimodalInstance};
use crate::error::{bail, Result};
use crate::layers::{
    dropout, dropout_backward, lstm_run, lstm_run_backward, Activation, BatchNormCache, BatchStats,
    DropoutMask, LstmGrads, LstmRunCache, Phase,
};
use crate::params::ParamStore;
use crate::rng::RngStream;
use crate::tensor::{conv_out_extent, outer3, outer3_backward, Tensor};

/// Latent sizes searched when tuning the fusion cube.
pub const LATENT_GRID: [usize; 6] = [5, 10, 15, 20, 25, 30];
/// Inclusive range of convolution filter counts.
pub const FILTER_RANGE: (usize, usize) = (1, 3);

#[derive(Debug, Clone, PartialEq)]
pub struct CommonConfig {
    pub lstm_hidden: PerModality<usize>,
    pub latent_dim: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub num_filters: usize,
    /// Widths of the fully-connected stack after the convolution. The last
    /// width is `|h_com|`.
    pub fc_widths: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for CommonConfig {
    fn default() -> Self {
        Self {
            lstm_hidden: PerModality::splat(5),
            latent_dim: 5,
            conv_kernel: 2,
            conv_stride: 1,
            num_filters: 2,
            fc_widths: vec![16, 8],
            dropout_rate: 0.1,
        }
    }
}

pub(crate) fn validate_cube(latent: usize, kernel: usize, stride: usize, filters: usize, who: &str) -> Result<()> {
    if latent == 0 || kernel == 0 || stride == 0 {
        bail!(Config, "{who}: latent dim, kernel and stride must be positive");
    }
    if kernel > latent {
        bail!(Config, "{who}: conv kernel {kernel} exceeds latent dim {latent}");
    }
    if !(FILTER_RANGE.0..=FILTER_RANGE.1).contains(&filters) {
        bail!(Config, "{who}: number of filters must be in [1, 3], got {filters}");
    }
    Ok(())
}

impl CommonConfig {
    pub fn validate(&self) -> Result<()> {
        validate_cube(self.latent_dim, self.conv_kernel, self.conv_stride, self.num_filters, "common")?;
        let h = self.lstm_hidden;
        if h.language == 0 || h.visual == 0 || h.acoustic == 0 {
            bail!(Config, "common: LSTM hidden sizes must be positive");
        }
        if self.fc_widths.is_empty() || self.fc_widths.contains(&0) {
            bail!(Config, "common: need at least one fully-connected layer, all widths positive");
        }
        crate::layers::dropout_rate_check(self.dropout_rate)
    }

    pub fn conv_extent(&self) -> usize {
        conv_out_extent(self.latent_dim, self.conv_kernel, self.conv_stride)
    }

    /// Length of the flattened convolution output.
    pub fn flat_width(&self) -> usize {
        self.num_filters * self.conv_extent().pow(3)
    }

    pub fn output_width(&self) -> usize {
        *self.fc_widths.last().expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommonOutput {
    pub h_com: Vec<f64>,
    pub y_com: f64,
}

#[derive(Debug, Clone)]
pub struct CommonNet {
    config: CommonConfig,
    activation: Activation,
    dims: DataDims,
    lstm: PerModality<LstmIds>,
    proj: PerModality<DenseIds>,
    conv: ConvIds,
    bn: Option<BnIds>,
    fc: Vec<DenseIds>,
    head: DenseIds,
}

#[derive(Debug, Clone)]
struct Front {
    lstm: PerModality<LstmRunCache>,
    final_hidden: PerModality<Vec<f64>>,
    proj_pre: PerModality<Vec<f64>>,
    latent: PerModality<Vec<f64>>,
    cube: Tensor,
    conv_pre: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Back {
    /// Convolution output after optional normalisation, before activation.
    conv_z: Vec<f64>,
    fc_inputs: Vec<Vec<f64>>,
    fc_pre: Vec<Vec<f64>>,
    masks: Vec<DropoutMask>,
    h_com: Vec<f64>,
}

/// Intermediates of a batched forward pass, consumed by the backward pass.
#[derive(Debug, Clone)]
pub struct CommonCache {
    fronts: Vec<Front>,
    bn: Option<BatchNormCache>,
    backs: Vec<Back>,
    stats: Option<BatchStats>,
}

impl CommonCache {
    pub fn len(&self) -> usize {
        self.fronts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fronts.is_empty()
    }

    /// The trilinear cube of instance `i`.
    pub fn cube(&self, i: usize) -> &Tensor {
        &self.fronts[i].cube
    }

    /// `(h_V, h_A, h_L)` of instance `i`.
    pub fn latents(&self, i: usize) -> (&[f64], &[f64], &[f64]) {
        let l = &self.fronts[i].latent;
        (&l.visual, &l.acoustic, &l.language)
    }
}

impl CommonNet {
    pub fn build(
        store: &mut ParamStore,
        config: &CommonConfig,
        dims: DataDims,
        activation: Activation,
        batchnorm: bool,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let inputs = PerModality { language: dims.d_l, visual: dims.d_v, acoustic: dims.d_a };
        let mut lstm = PerModality::splat(None);
        let mut proj = PerModality::splat(None);
        for (tag, input, hidden, l, p) in [
            (TAGS.language, inputs.language, config.lstm_hidden.language, &mut lstm.language, &mut proj.language),
            (TAGS.visual, inputs.visual, config.lstm_hidden.visual, &mut lstm.visual, &mut proj.visual),
            (TAGS.acoustic, inputs.acoustic, config.lstm_hidden.acoustic, &mut lstm.acoustic, &mut proj.acoustic),
        ] {
            *l = Some(LstmIds::register(store, seed, &format!("common.lstm.{tag}"), input, hidden)?);
            *p = Some(DenseIds::register(store, seed, &format!("common.proj.{tag}"), hidden, config.latent_dim)?);
        }
        let conv = ConvIds::register(
            store,
            seed,
            "common.conv",
            config.num_filters,
            config.conv_kernel,
            config.conv_stride,
            !batchnorm,
        )?;
        let bn = if batchnorm { Some(BnIds::register(store, "common.bn", config.flat_width())?) } else { None };
        let mut fc = Vec::with_capacity(config.fc_widths.len());
        let mut width = config.flat_width();
        for (i, &w) in config.fc_widths.iter().enumerate() {
            fc.push(DenseIds::register(store, seed, &format!("common.fc.{i}"), width, w)?);
            width = w;
        }
        let head = DenseIds::register(store, seed, "common.head", width, 1)?;
        Ok(Self {
            config: config.clone(),
            activation,
            dims,
            lstm: lstm.map(|x| x.expect("registered")),
            proj: proj.map(|x| x.expect("registered")),
            conv,
            bn,
            fc,
            head,
        })
    }

    pub fn config(&self) -> &CommonConfig {
        &self.config
    }

    fn check_instance(&self, x: &MultimodalInstance) -> Result<()> {
        let d = x.dims();
        if (d.d_l, d.d_v, d.d_a) != (self.dims.d_l, self.dims.d_v, self.dims.d_a) {
            bail!(
                Data,
                "instance feature dims d_l={} d_v={} d_a={} do not match model d_l={} d_v={} d_a={}",
                d.d_l,
                d.d_v,
                d.d_a,
                self.dims.d_l,
                self.dims.d_v,
                self.dims.d_a
            );
        }
        Ok(())
    }

    fn front(&self, store: &ParamStore, x: &MultimodalInstance) -> Result<Front> {
        self.check_instance(x)?;
        let values = store.values();
        let seqs = PerModality { language: x.language(), visual: x.visual(), acoustic: x.acoustic() };
        let lstm_ids = self.lstm;
        let runs = PerModality {
            language: lstm_run(seqs.language, &lstm_ids.language.params(values))?,
            visual: lstm_run(seqs.visual, &lstm_ids.visual.params(values))?,
            acoustic: lstm_run(seqs.acoustic, &lstm_ids.acoustic.params(values))?,
        };
        let final_hidden = runs.as_ref().map(|(s, _)| s.hidden.clone());
        let proj_pre = PerModality {
            language: self.proj.language.forward(values, &final_hidden.language)?,
            visual: self.proj.visual.forward(values, &final_hidden.visual)?,
            acoustic: self.proj.acoustic.forward(values, &final_hidden.acoustic)?,
        };
        let latent = proj_pre.as_ref().map(|p| self.activation.apply(p));
        let cube = outer3(&latent.visual, &latent.acoustic, &latent.language)?;
        let conv_pre = self.conv.forward(values, &cube)?.into_data();
        Ok(Front { lstm: runs.map(|(_, c)| c), final_hidden, proj_pre, latent, cube, conv_pre })
    }

    fn back(&self, store: &ParamStore, conv_z: Vec<f64>, phase: Phase, rng: &mut RngStream) -> Result<(Back, f64)> {
        let values = store.values();
        let mut x = self.activation.apply(&conv_z);
        let mut fc_inputs = Vec::with_capacity(self.fc.len());
        let mut fc_pre = Vec::with_capacity(self.fc.len());
        let mut masks = Vec::with_capacity(self.fc.len());
        for layer in &self.fc {
            let pre = layer.forward(values, &x)?;
            let act = self.activation.apply(&pre);
            let (out, mask) = dropout(&act, self.config.dropout_rate, rng, phase)?;
            fc_inputs.push(core::mem::replace(&mut x, out));
            fc_pre.push(pre);
            masks.push(mask);
        }
        let y = self.head.forward(values, &x)?[0];
        Ok((Back { conv_z, fc_inputs, fc_pre, masks, h_com: x }, y))
    }

    /// Batched forward pass. Batch normalisation, when enabled, couples the
    /// instances of the batch; otherwise each output depends only on its own
    /// instance.
    pub fn forward(
        &self,
        store: &ParamStore,
        batch: &[&MultimodalInstance],
        phase: Phase,
        rng: &mut RngStream,
    ) -> Result<(Vec<CommonOutput>, CommonCache)> {
        let fronts = batch.iter().map(|x| self.front(store, x)).collect::<Result<Vec<_>>>()?;
        let rows: Vec<Vec<f64>> = fronts.iter().map(|f| f.conv_pre.clone()).collect();
        let (rows, bn, stats) = match &self.bn {
            Some(bn) => {
                let (rows, cache, stats) = bn.forward(store, &rows, phase)?;
                (rows, Some(cache), stats)
            }
            None => (rows, None, None),
        };
        let mut outputs = Vec::with_capacity(batch.len());
        let mut backs = Vec::with_capacity(batch.len());
        for z in rows {
            let (back, y_com) = self.back(store, z, phase, rng)?;
            outputs.push(CommonOutput { h_com: back.h_com.clone(), y_com });
            backs.push(back);
        }
        Ok((outputs, CommonCache { fronts, bn, backs, stats }))
    }

    /// Single-instance forward pass.
    pub fn forward_one(
        &self,
        store: &ParamStore,
        instance: &MultimodalInstance,
        phase: Phase,
        rng: &mut RngStream,
    ) -> Result<(CommonOutput, CommonCache)> {
        let (mut out, cache) = self.forward(store, &[instance], phase, rng)?;
        Ok((out.remove(0), cache))
    }

    /// Accumulates parameter gradients given per-instance gradients on
    /// `h_com` and on `y_com`.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &CommonCache,
        d_h_com: &[Vec<f64>],
        d_y_com: &[f64],
    ) -> Result<()> {
        let n = cache.fronts.len();
        if d_h_com.len() != n || d_y_com.len() != n {
            bail!(
                Usage,
                "common backward got {} / {} upstream gradients for a cache of {n} instances",
                d_h_com.len(),
                d_y_com.len()
            );
        }
        let (values, mut grads) = store.split_mut();
        let mut d_rows = Vec::with_capacity(n);
        for ((back, dh), &dy) in cache.backs.iter().zip(d_h_com).zip(d_y_com) {
            let mut d = self.head.backward(values, &mut grads, &back.h_com, &[dy])?;
            if dh.len() != d.len() {
                bail!(Usage, "h_com gradient has length {}, expected {}", dh.len(), d.len());
            }
            d.iter_mut().zip(dh).for_each(|(a, b)| *a += b);
            for (i, layer) in self.fc.iter().enumerate().rev() {
                let d_act = dropout_backward(&back.masks[i], &d);
                let d_pre = self.activation.backward(&back.fc_pre[i], &d_act);
                d = layer.backward(values, &mut grads, &back.fc_inputs[i], &d_pre)?;
            }
            d_rows.push(self.activation.backward(&back.conv_z, &d));
        }
        if let (Some(bn), Some(bn_cache)) = (&self.bn, &cache.bn) {
            d_rows = bn.backward(values, &mut grads, bn_cache, &d_rows)?;
        }
        let conv_shape = {
            let e = self.config.conv_extent();
            [self.config.num_filters, e, e, e]
        };
        for (front, d_conv) in cache.fronts.iter().zip(d_rows) {
            let d_conv = Tensor::from_vec(&conv_shape, d_conv)?;
            let d_cube = self.conv.backward(values, &mut grads, &front.cube, &d_conv)?;
            let (dv, da, dl) =
                outer3_backward(&front.latent.visual, &front.latent.acoustic, &front.latent.language, &d_cube)?;
            let d_latent = PerModality { language: dl, visual: dv, acoustic: da };
            for (proj, lstm, pre, hidden, run, d_lat) in [
                (&self.proj.language, &self.lstm.language, &front.proj_pre.language, &front.final_hidden.language, &front.lstm.language, &d_latent.language),
                (&self.proj.visual, &self.lstm.visual, &front.proj_pre.visual, &front.final_hidden.visual, &front.lstm.visual, &d_latent.visual),
                (&self.proj.acoustic, &self.lstm.acoustic, &front.proj_pre.acoustic, &front.final_hidden.acoustic, &front.lstm.acoustic, &d_latent.acoustic),
            ] {
                let d_pre = self.activation.backward(pre, d_lat);
                let d_hidden = proj.backward(values, &mut grads, hidden, &d_pre)?;
                let params = lstm.params(values);
                let mut lg = LstmGrads::zeros_like(&params);
                let zeros = vec![0.0; d_hidden.len()];
                lstm_run_backward(run, &params, &d_hidden, &zeros, &mut lg)?;
                lstm.accumulate(&mut grads, &lg);
            }
        }
        Ok(())
    }

    /// Folds the batch statistics of a training pass into the running
    /// averages.
    pub fn apply_batch_stats(&self, store: &mut ParamStore, cache: &CommonCache) {
        if let (Some(bn), Some(stats)) = (&self.bn, &cache.stats) {
            bn.update_running(store, stats);
        }
    }
}
