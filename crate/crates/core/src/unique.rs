//! Unique sub-network.
//!
//! At every time step the three raw feature vectors are projected to
//! `latent_dim` by activated dense layers and crossed into a cube
//! `h_{V,k} ⊗ h_{A,k} ⊗ h_{L,k}`. The cube is convolved, activated,
//! flattened and mapped by an activated dense layer to the step feature
//! `h_k`. Step features are sum-pooled over time,
//! `h_pool = Σ_k h_k`, then `h_uni = act(dense(h_pool))` with dropout and an
//! affine head gives `y_uni`.
//!
//! With `share_step_weights` one set of step weights serves every step;
//! otherwise step `k` owns its projections, convolution and dense layer.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::blocks::{step_name, BnIds, ConvIds, DenseIds, PerModality, TAGS};
use crate::common::validate_cube;
use crate::data::{DataDims, MultimodalInstance};
use crate::error::{bail, Result};
use crate::layers::{
    dropout, dropout_backward, Activation, BatchNormCache, BatchStats, DropoutMask, Phase,
};
use crate::params::ParamStore;
use crate::rng::RngStream;
use crate::tensor::{conv_out_extent, outer3, outer3_backward, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct UniqueConfig {
    pub latent_dim: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    pub num_filters: usize,
    /// Width of `h_k`.
    pub step_fc_width: usize,
    /// Width of `h_uni`.
    pub pool_fc_width: usize,
    pub dropout_rate: f64,
    pub share_step_weights: bool,
}

impl Default for UniqueConfig {
    fn default() -> Self {
        Self {
            latent_dim: 5,
            conv_kernel: 2,
            conv_stride: 1,
            num_filters: 2,
            step_fc_width: 8,
            pool_fc_width: 8,
            dropout_rate: 0.1,
            share_step_weights: true,
        }
    }
}

impl UniqueConfig {
    pub fn validate(&self) -> Result<()> {
        validate_cube(self.latent_dim, self.conv_kernel, self.conv_stride, self.num_filters, "unique")?;
        if self.step_fc_width == 0 || self.pool_fc_width == 0 {
            bail!(Config, "unique: step and pool widths must be positive");
        }
        crate::layers::dropout_rate_check(self.dropout_rate)
    }

    pub fn conv_extent(&self) -> usize {
        conv_out_extent(self.latent_dim, self.conv_kernel, self.conv_stride)
    }

    pub fn flat_width(&self) -> usize {
        self.num_filters * self.conv_extent().pow(3)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniqueOutput {
    pub h_uni: Vec<f64>,
    pub y_uni: f64,
}

#[derive(Debug, Clone, Copy)]
struct StepIds {
    proj: PerModality<DenseIds>,
    conv: ConvIds,
    fc: DenseIds,
}

#[derive(Debug, Clone)]
pub struct UniqueNet {
    config: UniqueConfig,
    activation: Activation,
    dims: DataDims,
    steps: Vec<StepIds>,
    bn: Option<BnIds>,
    pool: DenseIds,
    head: DenseIds,
}

#[derive(Debug, Clone)]
struct StepFront {
    input: PerModality<Vec<f64>>,
    proj_pre: PerModality<Vec<f64>>,
    latent: PerModality<Vec<f64>>,
    cube: Tensor,
    conv_pre: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepBack {
    conv_z: Vec<f64>,
    fc_in: Vec<f64>,
    fc_pre: Vec<f64>,
    h_k: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Back {
    steps: Vec<StepBack>,
    h_pool: Vec<f64>,
    pool_pre: Vec<f64>,
    mask: DropoutMask,
    h_uni: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct UniqueCache {
    fronts: Vec<Vec<StepFront>>,
    bn: Option<BatchNormCache>,
    backs: Vec<Back>,
    stats: Option<BatchStats>,
}

impl UniqueCache {
    pub fn len(&self) -> usize {
        self.fronts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fronts.is_empty()
    }

    /// Pooled step features `h_pool` of instance `i`.
    pub fn h_pool(&self, i: usize) -> &[f64] {
        &self.backs[i].h_pool
    }

    /// Step features `h_k` of instance `i`.
    pub fn step_features(&self, i: usize) -> Vec<&[f64]> {
        self.backs[i].steps.iter().map(|s| s.h_k.as_slice()).collect()
    }
}

impl UniqueNet {
    pub fn build(
        store: &mut ParamStore,
        config: &UniqueConfig,
        dims: DataDims,
        activation: Activation,
        batchnorm: bool,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        let count = if config.share_step_weights { 1 } else { dims.t_k };
        let mut steps = Vec::with_capacity(count);
        for k in 0..count {
            let step = (!config.share_step_weights).then_some(k);
            let proj_base = step_name("unique.step_proj", step);
            let inputs = PerModality { language: dims.d_l, visual: dims.d_v, acoustic: dims.d_a };
            let mut reg = |tag: &str, d: usize| {
                DenseIds::register(store, seed, &format!("{proj_base}.{tag}"), d, config.latent_dim)
            };
            let proj = PerModality {
                language: reg(TAGS.language, inputs.language)?,
                visual: reg(TAGS.visual, inputs.visual)?,
                acoustic: reg(TAGS.acoustic, inputs.acoustic)?,
            };
            let conv = ConvIds::register(
                store,
                seed,
                &step_name("unique.step_conv", step),
                config.num_filters,
                config.conv_kernel,
                config.conv_stride,
                !(batchnorm && count == 1),
            )?;
            let fc = DenseIds::register(
                store,
                seed,
                &step_name("unique.step_fc", step),
                config.flat_width(),
                config.step_fc_width,
            )?;
            steps.push(StepIds { proj, conv, fc });
        }
        let bn = if batchnorm { Some(BnIds::register(store, "unique.bn", config.flat_width())?) } else { None };
        let pool = DenseIds::register(store, seed, "unique.pool", config.step_fc_width, config.pool_fc_width)?;
        let head = DenseIds::register(store, seed, "unique.head", config.pool_fc_width, 1)?;
        Ok(Self { config: config.clone(), activation, dims, steps, bn, pool, head })
    }

    pub fn config(&self) -> &UniqueConfig {
        &self.config
    }

    fn ids(&self, k: usize) -> &StepIds {
        if self.config.share_step_weights {
            &self.steps[0]
        } else {
            &self.steps[k]
        }
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
        if !self.config.share_step_weights && d.t_k != self.dims.t_k {
            bail!(Data, "per-step weights exist for t_k={}, instance has t_k={}", self.dims.t_k, d.t_k);
        }
        Ok(())
    }

    fn step_front(&self, store: &ParamStore, x_v: &[f64], x_a: &[f64], x_l: &[f64], k: usize) -> Result<StepFront> {
        let ids = self.ids(k);
        let values = store.values();
        let input = PerModality { language: x_l.to_vec(), visual: x_v.to_vec(), acoustic: x_a.to_vec() };
        let proj_pre = PerModality {
            language: ids.proj.language.forward(values, x_l)?,
            visual: ids.proj.visual.forward(values, x_v)?,
            acoustic: ids.proj.acoustic.forward(values, x_a)?,
        };
        let latent = proj_pre.as_ref().map(|p| self.activation.apply(p));
        let cube = outer3(&latent.visual, &latent.acoustic, &latent.language)?;
        let conv_pre = ids.conv.forward(values, &cube)?.into_data();
        Ok(StepFront { input, proj_pre, latent, cube, conv_pre })
    }

    fn step_back(&self, store: &ParamStore, conv_z: Vec<f64>, k: usize) -> Result<StepBack> {
        let fc_in = self.activation.apply(&conv_z);
        let fc_pre = self.ids(k).fc.forward(store.values(), &fc_in)?;
        let h_k = self.activation.apply(&fc_pre);
        Ok(StepBack { conv_z, fc_in, fc_pre, h_k })
    }

    /// Evaluation-mode step feature `h_k` for raw step inputs. Uses running
    /// statistics when batch normalisation is enabled.
    pub fn step(&self, store: &ParamStore, x_v: &[f64], x_a: &[f64], x_l: &[f64], k: usize) -> Result<Vec<f64>> {
        for (name, x, d) in [("visual", x_v, self.dims.d_v), ("acoustic", x_a, self.dims.d_a), ("language", x_l, self.dims.d_l)] {
            if x.len() != d {
                bail!(Data, "{name} step input has length {}, model expects {d}", x.len());
            }
        }
        if k >= self.steps.len() && !self.config.share_step_weights {
            bail!(Data, "step {k} out of range for {} per-step weight sets", self.steps.len());
        }
        let front = self.step_front(store, x_v, x_a, x_l, k)?;
        let z = match &self.bn {
            Some(bn) => bn.forward(store, &[front.conv_pre], Phase::Eval)?.0.remove(0),
            None => front.conv_pre,
        };
        Ok(self.step_back(store, z, k)?.h_k)
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        batch: &[&MultimodalInstance],
        phase: Phase,
        rng: &mut RngStream,
    ) -> Result<(Vec<UniqueOutput>, UniqueCache)> {
        let mut fronts = Vec::with_capacity(batch.len());
        for x in batch {
            self.check_instance(x)?;
            let steps = (0..x.dims().t_k)
                .map(|k| {
                    let (l, v, a) = x.step(k);
                    self.step_front(store, v, a, l, k)
                })
                .collect::<Result<Vec<_>>>()?;
            fronts.push(steps);
        }
        let rows: Vec<Vec<f64>> = fronts.iter().flatten().map(|s| s.conv_pre.clone()).collect();
        let (rows, bn, stats) = match &self.bn {
            Some(bn) => {
                let (rows, cache, stats) = bn.forward(store, &rows, phase)?;
                (rows, Some(cache), stats)
            }
            None => (rows, None, None),
        };
        let values = store.values();
        let mut rows = rows.into_iter();
        let mut outputs = Vec::with_capacity(batch.len());
        let mut backs = Vec::with_capacity(batch.len());
        for steps_front in &fronts {
            let mut steps = Vec::with_capacity(steps_front.len());
            let mut h_pool = vec![0.0; self.config.step_fc_width];
            for k in 0..steps_front.len() {
                let step = self.step_back(store, rows.next().expect("one row per step"), k)?;
                h_pool.iter_mut().zip(&step.h_k).for_each(|(p, h)| *p += h);
                steps.push(step);
            }
            let pool_pre = self.pool.forward(values, &h_pool)?;
            let pooled = self.activation.apply(&pool_pre);
            let (h_uni, mask) = dropout(&pooled, self.config.dropout_rate, rng, phase)?;
            let y_uni = self.head.forward(values, &h_uni)?[0];
            outputs.push(UniqueOutput { h_uni: h_uni.clone(), y_uni });
            backs.push(Back { steps, h_pool, pool_pre, mask, h_uni });
        }
        Ok((outputs, UniqueCache { fronts, bn, backs, stats }))
    }

    pub fn forward_one(
        &self,
        store: &ParamStore,
        instance: &MultimodalInstance,
        phase: Phase,
        rng: &mut RngStream,
    ) -> Result<(UniqueOutput, UniqueCache)> {
        let (mut out, cache) = self.forward(store, &[instance], phase, rng)?;
        Ok((out.remove(0), cache))
    }

    /// Accumulates parameter gradients given per-instance gradients on
    /// `h_uni` and `y_uni`. The pooled gradient reaches every step, and
    /// shared step weights sum the contributions of all steps.
    pub fn backward(
        &self,
        store: &mut ParamStore,
        cache: &UniqueCache,
        d_h_uni: &[Vec<f64>],
        d_y_uni: &[f64],
    ) -> Result<()> {
        let n = cache.fronts.len();
        if d_h_uni.len() != n || d_y_uni.len() != n || cache.backs.len() != n {
            bail!(
                Usage,
                "unique backward got {} / {} upstream gradients for a cache of {n} instances",
                d_h_uni.len(),
                d_y_uni.len()
            );
        }
        let (values, mut grads) = store.split_mut();
        let mut d_rows = Vec::new();
        for ((back, dh), &dy) in cache.backs.iter().zip(d_h_uni).zip(d_y_uni) {
            let mut d = self.head.backward(values, &mut grads, &back.h_uni, &[dy])?;
            if dh.len() != d.len() {
                bail!(Usage, "h_uni gradient has length {}, expected {}", dh.len(), d.len());
            }
            d.iter_mut().zip(dh).for_each(|(a, b)| *a += b);
            let d = dropout_backward(&back.mask, &d);
            let d_pool_pre = self.activation.backward(&back.pool_pre, &d);
            let d_h_pool = self.pool.backward(values, &mut grads, &back.h_pool, &d_pool_pre)?;
            for (k, step) in back.steps.iter().enumerate() {
                let d_fc_pre = self.activation.backward(&step.fc_pre, &d_h_pool);
                let d_fc_in = self.ids(k).fc.backward(values, &mut grads, &step.fc_in, &d_fc_pre)?;
                d_rows.push(self.activation.backward(&step.conv_z, &d_fc_in));
            }
        }
        if d_rows.len() != cache.fronts.iter().map(Vec::len).sum::<usize>() {
            bail!(Usage, "unique backward: cache step count does not match pooled steps");
        }
        if let (Some(bn), Some(bn_cache)) = (&self.bn, &cache.bn) {
            d_rows = bn.backward(values, &mut grads, bn_cache, &d_rows)?;
        }
        let conv_shape = {
            let e = self.config.conv_extent();
            [self.config.num_filters, e, e, e]
        };
        let mut d_rows = d_rows.into_iter();
        for steps in &cache.fronts {
            for (k, front) in steps.iter().enumerate() {
                let ids = self.ids(k);
                let d_conv = Tensor::from_vec(&conv_shape, d_rows.next().expect("one row per step"))?;
                let d_cube = ids.conv.backward(values, &mut grads, &front.cube, &d_conv)?;
                let (dv, da, dl) =
                    outer3_backward(&front.latent.visual, &front.latent.acoustic, &front.latent.language, &d_cube)?;
                for (proj, pre, input, d_lat) in [
                    (&ids.proj.language, &front.proj_pre.language, &front.input.language, &dl),
                    (&ids.proj.visual, &front.proj_pre.visual, &front.input.visual, &dv),
                    (&ids.proj.acoustic, &front.proj_pre.acoustic, &front.input.acoustic, &da),
                ] {
                    let d_pre = self.activation.backward(pre, d_lat);
                    proj.backward(values, &mut grads, input, &d_pre)?;
                }
            }
        }
        Ok(())
    }

    pub fn apply_batch_stats(&self, store: &mut ParamStore, cache: &UniqueCache) {
        if let (Some(bn), Some(stats)) = (&self.bn, &cache.stats) {
            bn.update_running(store, stats);
        }
    }
}
