//! End-to-end model: both sub-networks, the mean-pooling fusion layer, the
//! squared-error loss and parameter accounting.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::blocks::DenseIds;
use crate::common::{CommonCache, CommonConfig, CommonNet, CommonOutput};
use crate::data::{DataDims, MultimodalDataset, MultimodalInstance};
use crate::error::{bail, Error, Result};
use crate::layers::{Activation, Phase};
use crate::params::{group_of, ParamStore};
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::unique::{UniqueCache, UniqueConfig, UniqueNet, UniqueOutput};

/// Which prediction is trained and reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModelMode {
    /// Fused prediction from both sub-networks.
    #[default]
    Full,
    /// Common-network head only.
    CommonOnly,
    /// Unique-network head only.
    UniqueOnly,
}

impl ModelMode {
    pub fn uses_common(self) -> bool {
        self != Self::UniqueOnly
    }

    pub fn uses_unique(self) -> bool {
        self != Self::CommonOnly
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::CommonOnly => "common",
            Self::UniqueOnly => "unique",
        }
    }
}

impl fmt::Display for ModelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "common" | "common_only" => Ok(Self::CommonOnly),
            "unique" | "unique_only" => Ok(Self::UniqueOnly),
            other => Err(Error::Config(alloc::format!(
                "unknown mode {other:?} (expected full, common or unique)"
            ))),
        }
    }
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct HoseqConfig {
    pub common: CommonConfig,
    pub unique: UniqueConfig,
    /// `|h_com| = |h_uni|`.
    pub fused_dim: usize,
    pub mode: ModelMode,
    pub activation: Activation,
    pub batchnorm: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for HoseqConfig {
    fn default() -> Self {
        Self {
            common: CommonConfig::default(),
            unique: UniqueConfig::default(),
            fused_dim: 8,
            mode: ModelMode::Full,
            activation: Activation::Relu,
            batchnorm: false,
            learning_rate: 6e-3,
            batch_size: 256,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl HoseqConfig {
    pub fn validate(&self) -> Result<()> {
        self.common.validate()?;
        self.unique.validate()?;
        if self.fused_dim == 0 {
            bail!(Config, "fused_dim must be positive");
        }
        if self.common.output_width() != self.fused_dim {
            bail!(
                Config,
                "last common fc width {} must equal fused_dim {}",
                self.common.output_width(),
                self.fused_dim
            );
        }
        if self.unique.pool_fc_width != self.fused_dim {
            bail!(
                Config,
                "unique pool width {} must equal fused_dim {}",
                self.unique.pool_fc_width,
                self.fused_dim
            );
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            bail!(Config, "learning rate must be positive, got {}", self.learning_rate);
        }
        if self.batch_size == 0 {
            bail!(Config, "batch size must be positive");
        }
        if self.patience == 0 {
            bail!(Config, "patience must be at least 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            bail!(Config, "Adam betas must lie in [0, 1)");
        }
        if self.adam_epsilon.is_nan() || self.adam_epsilon <= 0.0 {
            bail!(Config, "Adam epsilon must be positive");
        }
        Ok(())
    }

    /// Same configuration with dropout disabled in both sub-networks.
    pub fn without_dropout(&self) -> Self {
        let mut c = self.clone();
        c.common.dropout_rate = 0.0;
        c.unique.dropout_rate = 0.0;
        c
    }
}

/// `h_combined = (h_com + h_uni) / 2`, `ŷ = h_combinedᵀ W + b` with `W`
/// stored as `[fused_dim, 1]`.
pub fn fuse(h_com: &[f64], h_uni: &[f64], w: &Tensor, b: f64) -> Result<(Vec<f64>, f64)> {
    if h_com.len() != h_uni.len() {
        bail!(Config, "fusion width mismatch: h_com {} vs h_uni {}", h_com.len(), h_uni.len());
    }
    if w.shape() != [h_com.len(), 1] {
        bail!(Config, "fusion weight shape {:?} does not fit width {}", w.shape(), h_com.len());
    }
    let combined: Vec<f64> = h_com.iter().zip(h_uni).map(|(a, b)| 0.5 * (a + b)).collect();
    let y = combined.iter().zip(w.data()).map(|(h, w)| h * w).sum::<f64>() + b;
    Ok((combined, y))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuseGrads {
    pub h_com: Vec<f64>,
    pub h_uni: Vec<f64>,
    pub w: Vec<f64>,
    pub b: f64,
}

/// Gradients of [`fuse`]; the two branches receive identical gradients
/// `½ W dŷ`.
pub fn fuse_backward(combined: &[f64], w: &Tensor, d_y: f64) -> FuseGrads {
    let branch: Vec<f64> = w.data().iter().map(|w| 0.5 * w * d_y).collect();
    FuseGrads {
        h_com: branch.clone(),
        h_uni: branch,
        w: combined.iter().map(|h| h * d_y).collect(),
        b: d_y,
    }
}

/// Mean squared error and its gradient with respect to the predictions.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        bail!(Data, "prediction length {} differs from target length {}", pred.len(), target.len());
    }
    if pred.is_empty() {
        bail!(Data, "loss over an empty batch");
    }
    let n = pred.len() as f64;
    let loss = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
    let grad = pred.iter().zip(target).map(|(p, t)| 2.0 * (p - t) / n).collect();
    Ok((loss, grad))
}

#[derive(Debug, Clone)]
pub struct HoseqModel {
    config: HoseqConfig,
    dims: DataDims,
    common: CommonNet,
    unique: UniqueNet,
    fusion: DenseIds,
}

/// Outputs and caches of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub predictions: Vec<f64>,
    pub common: Option<(Vec<CommonOutput>, CommonCache)>,
    pub unique: Option<(Vec<UniqueOutput>, UniqueCache)>,
    /// `h_combined` per instance; empty unless both branches ran.
    pub combined: Vec<Vec<f64>>,
}

impl HoseqModel {
    /// Validates `config` and registers every parameter, initialised from
    /// `config.seed`. All sub-networks are registered whatever the mode.
    pub fn build(config: &HoseqConfig, dims: DataDims) -> Result<(Self, ParamStore)> {
        config.validate()?;
        if dims.t_k == 0 || dims.d_l == 0 || dims.d_v == 0 || dims.d_a == 0 {
            bail!(Config, "data dims must be positive, got ({dims})");
        }
        let mut store = ParamStore::new();
        let seed = config.seed;
        let common =
            CommonNet::build(&mut store, &config.common, dims, config.activation, config.batchnorm, seed)?;
        let unique =
            UniqueNet::build(&mut store, &config.unique, dims, config.activation, config.batchnorm, seed)?;
        let fusion = DenseIds::register(&mut store, seed, "fusion.head", config.fused_dim, 1)?;
        Ok((Self { config: config.clone(), dims, common, unique, fusion }, store))
    }

    pub fn config(&self) -> &HoseqConfig {
        &self.config
    }

    pub fn dims(&self) -> DataDims {
        self.dims
    }

    pub fn mode(&self) -> ModelMode {
        self.config.mode
    }

    pub fn common(&self) -> &CommonNet {
        &self.common
    }

    pub fn unique(&self) -> &UniqueNet {
        &self.unique
    }

    /// Whether the configured mode can produce a gradient for parameter
    /// `name`.
    pub fn trains(&self, name: &str) -> bool {
        let mode = self.config.mode;
        match group_of(name) {
            "common.head" => return mode == ModelMode::CommonOnly,
            "unique.head" => return mode == ModelMode::UniqueOnly,
            _ => {}
        }
        match name.split('.').next() {
            Some("common") => mode.uses_common(),
            Some("unique") => mode.uses_unique(),
            Some("fusion") => mode == ModelMode::Full,
            _ => false,
        }
    }

    pub fn forward(
        &self,
        store: &ParamStore,
        batch: &[&MultimodalInstance],
        phase: Phase,
        rng: &mut RngStream,
    ) -> Result<ForwardPass> {
        let mode = self.config.mode;
        let common = if mode.uses_common() {
            Some(self.common.forward(store, batch, phase, rng)?)
        } else {
            None
        };
        let unique = if mode.uses_unique() {
            Some(self.unique.forward(store, batch, phase, rng)?)
        } else {
            None
        };
        let mut combined = Vec::new();
        let predictions = match (&common, &unique) {
            (Some((c, _)), Some((u, _))) => {
                let w = store.value(self.fusion.w);
                let b = store.value(self.fusion.b).data()[0];
                let mut preds = Vec::with_capacity(batch.len());
                for (c, u) in c.iter().zip(u) {
                    let (h, y) = fuse(&c.h_com, &u.h_uni, w, b)?;
                    combined.push(h);
                    preds.push(y);
                }
                preds
            }
            (Some((c, _)), None) => c.iter().map(|o| o.y_com).collect(),
            (None, Some((u, _))) => u.iter().map(|o| o.y_uni).collect(),
            (None, None) => unreachable!("every mode uses a sub-network"),
        };
        if let Some(i) = predictions.iter().position(|y| !y.is_finite()) {
            bail!(Numeric, "non-finite prediction for batch item {i}");
        }
        Ok(ForwardPass { predictions, common, unique, combined })
    }

    /// Accumulates the gradients of a scalar loss given `d_pred`, its
    /// gradient with respect to each prediction of `pass`.
    pub fn backward(&self, store: &mut ParamStore, pass: &ForwardPass, d_pred: &[f64]) -> Result<()> {
        if d_pred.len() != pass.predictions.len() {
            bail!(
                Usage,
                "{} prediction gradients for a pass of {} predictions",
                d_pred.len(),
                pass.predictions.len()
            );
        }
        let n = d_pred.len();
        let zeros = vec![0.0; n];
        match self.config.mode {
            ModelMode::Full => {
                let (Some((_, ccache)), Some((_, ucache))) = (&pass.common, &pass.unique) else {
                    bail!(Usage, "full-mode backward needs both sub-network caches");
                };
                let w = store.value(self.fusion.w).clone();
                let mut d_branch = Vec::with_capacity(n);
                {
                    let (_, mut grads) = store.split_mut();
                    for (h, &d) in pass.combined.iter().zip(d_pred) {
                        let g = fuse_backward(h, &w, d);
                        crate::blocks::accumulate(&mut grads, self.fusion.w, &g.w);
                        crate::blocks::accumulate(&mut grads, self.fusion.b, &[g.b]);
                        d_branch.push(g.h_com);
                    }
                }
                self.common.backward(store, ccache, &d_branch, &zeros)?;
                self.unique.backward(store, ucache, &d_branch, &zeros)?;
            }
            ModelMode::CommonOnly => {
                let Some((_, cache)) = &pass.common else {
                    bail!(Usage, "common-mode backward needs the common cache");
                };
                let dh = vec![vec![0.0; self.config.fused_dim]; n];
                self.common.backward(store, cache, &dh, d_pred)?;
            }
            ModelMode::UniqueOnly => {
                let Some((_, cache)) = &pass.unique else {
                    bail!(Usage, "unique-mode backward needs the unique cache");
                };
                let dh = vec![vec![0.0; self.config.fused_dim]; n];
                self.unique.backward(store, cache, &dh, d_pred)?;
            }
        }
        Ok(())
    }

    pub fn apply_batch_stats(&self, store: &mut ParamStore, pass: &ForwardPass) {
        if let Some((_, cache)) = &pass.common {
            self.common.apply_batch_stats(store, cache);
        }
        if let Some((_, cache)) = &pass.unique {
            self.unique.apply_batch_stats(store, cache);
        }
    }

    /// Forward, squared-error loss and backward over one batch. Gradients
    /// accumulate into `store`; running statistics are not updated.
    pub fn loss_and_grad(
        &self,
        store: &mut ParamStore,
        batch: &[&MultimodalInstance],
        phase: Phase,
        rng: &mut RngStream,
    ) -> Result<(f64, ForwardPass)> {
        let pass = self.forward(store, batch, phase, rng)?;
        let targets: Vec<f64> = batch.iter().map(|x| x.label()).collect();
        let (loss, d_pred) = mse_loss(&pass.predictions, &targets)?;
        self.backward(store, &pass, &d_pred)?;
        Ok((loss, pass))
    }

    /// Evaluation-mode predictions in dataset order.
    pub fn predict(&self, store: &ParamStore, dataset: &MultimodalDataset) -> Result<Vec<f64>> {
        let mut rng = RngStream::named(self.config.seed, "predict");
        let mut out = Vec::with_capacity(dataset.len());
        let refs: Vec<&MultimodalInstance> = dataset.instances().iter().collect();
        for chunk in refs.chunks(64) {
            out.extend(self.forward(store, chunk, Phase::Eval, &mut rng)?.predictions);
        }
        Ok(out)
    }
}

/// Parameter element counts grouped by the first two segments of each name
/// (`common.lstm`, `unique.step_proj`, ...) and by sub-network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterCount {
    pub total: usize,
    pub by_group: BTreeMap<String, usize>,
    pub by_network: BTreeMap<String, usize>,
}

impl ParameterCount {
    /// Group with the most parameters; ties go to the first name in order.
    pub fn largest_group(&self) -> Option<(&str, usize)> {
        self.by_group
            .iter()
            .fold(None, |best: Option<(&str, usize)>, (g, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((g.as_str(), c)),
            })
    }

    /// Fraction of all parameters held by `group`.
    pub fn share(&self, group: &str) -> f64 {
        self.by_group.get(group).copied().unwrap_or(0) as f64 / self.total.max(1) as f64
    }
}

impl fmt::Display for ParameterCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "total={}", self.total)?;
        for (net, c) in &self.by_network {
            writeln!(f, "network.{net}={c}")?;
        }
        for (g, c) in &self.by_group {
            writeln!(f, "group.{g}={c} ({:.2}%)", 100.0 * self.share(g))?;
        }
        Ok(())
    }
}

pub fn count_parameters(store: &ParamStore) -> ParameterCount {
    let mut by_group = BTreeMap::new();
    let mut by_network = BTreeMap::new();
    for (name, value) in store.iter() {
        *by_group.entry(String::from(group_of(name))).or_insert(0) += value.len();
        let net = name.split('.').next().unwrap_or(name);
        *by_network.entry(String::from(net)).or_insert(0) += value.len();
    }
    ParameterCount { total: store.total_parameter_count(), by_group, by_network }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().0, 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, -1.0]).unwrap().0, 1.0);
        assert_eq!(mse_loss(&[2.0], &[0.0]).unwrap().1, [4.0]);
        assert!(matches!(mse_loss(&[], &[]), Err(Error::Data(_))));
    }

    #[test]
    fn fuse_idempotence_and_cancellation() {
        let w = Tensor::from_vec(&[3, 1], vec![0.5, -1.0, 2.0]).unwrap();
        let h = [0.3, 1.2, -0.7];
        let (c, y) = fuse(&h, &h, &w, 0.25).unwrap();
        assert_eq!(c, h);
        assert!((y - (0.15 - 1.2 - 1.4 + 0.25)).abs() < 1e-15);
        let neg: Vec<f64> = h.iter().map(|x| -x).collect();
        let (c, y) = fuse(&h, &neg, &w, 0.25).unwrap();
        assert!(c.iter().all(|&x| x == 0.0));
        assert_eq!(y, 0.25);
        assert!(matches!(fuse(&h, &[1.0], &w, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("common".parse::<ModelMode>().unwrap(), ModelMode::CommonOnly);
        assert_eq!("unique_only".parse::<ModelMode>().unwrap(), ModelMode::UniqueOnly);
        assert!("both".parse::<ModelMode>().is_err());
    }

    #[test]
    fn config_invariants() {
        let c = HoseqConfig::default();
        c.validate().unwrap();
        let mut bad = c.clone();
        bad.fused_dim = 7;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.common.num_filters = 4;
        assert!(bad.validate().is_err());
        let mut bad = c.clone();
        bad.unique.conv_kernel = 6;
        assert!(bad.validate().is_err());
        let mut bad = c;
        bad.patience = 0;
        assert!(bad.validate().is_err());
    }
}
