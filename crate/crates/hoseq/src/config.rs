//! `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are rejected. Every key has a default; [`RunConfig::render`] writes
//! all of them, and parsing that text reproduces the configuration exactly.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use hoseq_core::model::HoseqConfig;
use hoseq_core::PerModality;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub model: HoseqConfig,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Every key with a one-line description, in rendering order.
pub const KEYS: &[(&str, &str)] = &[
    ("mode", "full, common or unique"),
    ("activation", "hidden activation: relu, tanh, sigmoid or identity"),
    ("batchnorm", "batch normalisation after each convolution"),
    ("learning_rate", "Adam step size"),
    ("batch_size", "minibatch size, clamped to the training set size"),
    ("max_epochs", "upper bound on training epochs"),
    ("patience", "epochs without validation improvement before stopping"),
    ("seed", "root of every random stream"),
    ("fused_dim", "width of h_com and h_uni"),
    ("adam_beta1", "first-moment decay"),
    ("adam_beta2", "second-moment decay"),
    ("adam_epsilon", "denominator guard"),
    ("common.lstm_hidden_l", "language LSTM hidden size"),
    ("common.lstm_hidden_v", "visual LSTM hidden size"),
    ("common.lstm_hidden_a", "acoustic LSTM hidden size"),
    ("common.latent_dim", "latent size per modality, the cube extent"),
    ("common.conv_kernel", "convolution kernel extent"),
    ("common.conv_stride", "convolution stride"),
    ("common.num_filters", "convolution filters, 1 to 3"),
    ("common.fc_widths", "comma-separated fully-connected widths; the last is fused_dim"),
    ("common.dropout", "dropout rate on fully-connected outputs"),
    ("unique.latent_dim", "per-step latent size"),
    ("unique.conv_kernel", "convolution kernel extent"),
    ("unique.conv_stride", "convolution stride"),
    ("unique.num_filters", "convolution filters, 1 to 3"),
    ("unique.step_fc_width", "width of each step feature h_k"),
    ("unique.pool_fc_width", "width after pooling; must equal fused_dim"),
    ("unique.dropout", "dropout rate on fully-connected outputs"),
    ("unique.share_step_weights", "one weight set for all steps (false: one per step)"),
    ("train", "training MMSEQ file (empty: none)"),
    ("val", "validation MMSEQ file (empty: none)"),
    ("out", "output directory (empty: none)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e| Error::Usage(format!("{key}: invalid value {value:?}: {e}")))
}

fn path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut seen = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Usage(format!("config line {}: expected key = value", i + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(Error::Usage(format!("config line {}: key {key:?} given twice", i + 1)));
            }
            config.set(key, value).map_err(|e| match e {
                Error::Usage(msg) => Error::Usage(format!("config line {}: {msg}", i + 1)),
                other => other,
            })?;
            seen.push(key);
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let m = &mut self.model;
        let (c, u) = (&mut m.common, &mut m.unique);
        match key {
            "mode" => m.mode = parse(key, value)?,
            "activation" => m.activation = parse(key, value)?,
            "batchnorm" => m.batchnorm = parse(key, value)?,
            "learning_rate" => m.learning_rate = parse(key, value)?,
            "batch_size" => m.batch_size = parse(key, value)?,
            "max_epochs" => m.max_epochs = parse(key, value)?,
            "patience" => m.patience = parse(key, value)?,
            "seed" => m.seed = parse(key, value)?,
            "fused_dim" => m.fused_dim = parse(key, value)?,
            "adam_beta1" => m.adam_beta1 = parse(key, value)?,
            "adam_beta2" => m.adam_beta2 = parse(key, value)?,
            "adam_epsilon" => m.adam_epsilon = parse(key, value)?,
            "common.lstm_hidden_l" => c.lstm_hidden.language = parse(key, value)?,
            "common.lstm_hidden_v" => c.lstm_hidden.visual = parse(key, value)?,
            "common.lstm_hidden_a" => c.lstm_hidden.acoustic = parse(key, value)?,
            "common.latent_dim" => c.latent_dim = parse(key, value)?,
            "common.conv_kernel" => c.conv_kernel = parse(key, value)?,
            "common.conv_stride" => c.conv_stride = parse(key, value)?,
            "common.num_filters" => c.num_filters = parse(key, value)?,
            "common.fc_widths" => {
                c.fc_widths = value.split(',').map(|w| parse(key, w.trim())).collect::<Result<_>>()?;
            }
            "common.dropout" => c.dropout_rate = parse(key, value)?,
            "unique.latent_dim" => u.latent_dim = parse(key, value)?,
            "unique.conv_kernel" => u.conv_kernel = parse(key, value)?,
            "unique.conv_stride" => u.conv_stride = parse(key, value)?,
            "unique.num_filters" => u.num_filters = parse(key, value)?,
            "unique.step_fc_width" => u.step_fc_width = parse(key, value)?,
            "unique.pool_fc_width" => u.pool_fc_width = parse(key, value)?,
            "unique.dropout" => u.dropout_rate = parse(key, value)?,
            "unique.share_step_weights" => u.share_step_weights = parse(key, value)?,
            "train" => self.train = path(value),
            "val" => self.val = path(value),
            "out" => self.out = path(value),
            _ => return Err(Error::Usage(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let m = &self.model;
        let (c, u) = (&m.common, &m.unique);
        let h: PerModality<usize> = c.lstm_hidden;
        Some(match key {
            "mode" => m.mode.name().to_string(),
            "activation" => m.activation.name().to_string(),
            "batchnorm" => m.batchnorm.to_string(),
            "learning_rate" => format!("{:?}", m.learning_rate),
            "batch_size" => m.batch_size.to_string(),
            "max_epochs" => m.max_epochs.to_string(),
            "patience" => m.patience.to_string(),
            "seed" => m.seed.to_string(),
            "fused_dim" => m.fused_dim.to_string(),
            "adam_beta1" => format!("{:?}", m.adam_beta1),
            "adam_beta2" => format!("{:?}", m.adam_beta2),
            "adam_epsilon" => format!("{:?}", m.adam_epsilon),
            "common.lstm_hidden_l" => h.language.to_string(),
            "common.lstm_hidden_v" => h.visual.to_string(),
            "common.lstm_hidden_a" => h.acoustic.to_string(),
            "common.latent_dim" => c.latent_dim.to_string(),
            "common.conv_kernel" => c.conv_kernel.to_string(),
            "common.conv_stride" => c.conv_stride.to_string(),
            "common.num_filters" => c.num_filters.to_string(),
            "common.fc_widths" => c.fc_widths.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
            "common.dropout" => format!("{:?}", c.dropout_rate),
            "unique.latent_dim" => u.latent_dim.to_string(),
            "unique.conv_kernel" => u.conv_kernel.to_string(),
            "unique.conv_stride" => u.conv_stride.to_string(),
            "unique.num_filters" => u.num_filters.to_string(),
            "unique.step_fc_width" => u.step_fc_width.to_string(),
            "unique.pool_fc_width" => u.pool_fc_width.to_string(),
            "unique.dropout" => format!("{:?}", u.dropout_rate),
            "unique.share_step_weights" => u.share_step_weights.to_string(),
            "train" => show_path(&self.train),
            "val" => show_path(&self.val),
            "out" => show_path(&self.out),
            _ => return None,
        })
    }

    /// Every key with its description and current value.
    pub fn render(&self) -> String {
        let mut text = String::new();
        for (key, doc) in KEYS {
            let value = self.get(key).expect("listed key");
            text.push_str(&format!("# {doc}\n{key} = {value}\n"));
        }
        text
    }

    pub fn validate(&self) -> Result<()> {
        Ok(self.model.validate()?)
    }
}
