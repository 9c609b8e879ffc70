//! Aligned multimodal sequences with scalar sentiment labels.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{bail, Result};
use crate::tensor::Tensor;

/// Inclusive sentiment label range.
pub const LABEL_RANGE: (f64, f64) = (-3.0, 3.0);

/// Sequence length and per-modality feature widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DataDims {
    pub t_k: usize,
    pub d_l: usize,
    pub d_v: usize,
    pub d_a: usize,
}

impl fmt::Display for DataDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t_k={} d_l={} d_v={} d_a={}", self.t_k, self.d_l, self.d_v, self.d_a)
    }
}

/// One utterance: language, visual and acoustic sequences of a shared
/// length, stored as `[t_k, d]` matrices, plus its label in `[-3, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalInstance {
    language: Tensor,
    visual: Tensor,
    acoustic: Tensor,
    label: f64,
}

impl MultimodalInstance {
    pub fn new(language: Tensor, visual: Tensor, acoustic: Tensor, label: f64) -> Result<Self> {
        for (name, t) in [("language", &language), ("visual", &visual), ("acoustic", &acoustic)] {
            if t.rank() != 2 {
                bail!(Data, "{name} sequence must be a [t_k, d] matrix, got {:?}", t.shape());
            }
            if !t.is_finite() {
                bail!(Data, "{name} sequence contains non-finite values");
            }
        }
        let t_k = language.shape()[0];
        if visual.shape()[0] != t_k || acoustic.shape()[0] != t_k {
            bail!(
                Data,
                "sequence lengths differ across modalities: language {t_k}, visual {}, acoustic {}",
                visual.shape()[0],
                acoustic.shape()[0]
            );
        }
        if !label.is_finite() || label < LABEL_RANGE.0 || label > LABEL_RANGE.1 {
            bail!(Data, "label {label} outside [-3, 3]");
        }
        Ok(Self { language, visual, acoustic, label })
    }

    pub fn language(&self) -> &Tensor {
        &self.language
    }

    pub fn visual(&self) -> &Tensor {
        &self.visual
    }

    pub fn acoustic(&self) -> &Tensor {
        &self.acoustic
    }

    pub fn label(&self) -> f64 {
        self.label
    }

    pub fn dims(&self) -> DataDims {
        DataDims {
            t_k: self.language.shape()[0],
            d_l: self.language.shape()[1],
            d_v: self.visual.shape()[1],
            d_a: self.acoustic.shape()[1],
        }
    }

    /// Row `k` of each modality as `(language, visual, acoustic)`.
    pub fn step(&self, k: usize) -> (&[f64], &[f64], &[f64]) {
        fn row(t: &Tensor, k: usize) -> &[f64] {
            let d = t.shape()[1];
            &t.data()[k * d..(k + 1) * d]
        }
        (row(&self.language, k), row(&self.visual, k), row(&self.acoustic, k))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Train,
    Validation,
    Test,
}

/// Non-empty, dimensionally homogeneous list of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalDataset {
    instances: Vec<MultimodalInstance>,
    dims: DataDims,
    split: Split,
}

impl MultimodalDataset {
    pub fn new(instances: Vec<MultimodalInstance>, split: Split) -> Result<Self> {
        let Some(first) = instances.first() else {
            bail!(Data, "dataset is empty");
        };
        let dims = first.dims();
        if let Some((i, other)) = instances.iter().enumerate().find(|(_, x)| x.dims() != dims) {
            bail!(Data, "instance {i} has dims ({}), dataset has ({dims})", other.dims());
        }
        Ok(Self { instances, dims, split })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dims(&self) -> DataDims {
        self.dims
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn instances(&self) -> &[MultimodalInstance] {
        &self.instances
    }

    pub fn labels(&self) -> Vec<f64> {
        self.instances.iter().map(|x| x.label).collect()
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Contiguous sub-range of instances as a new dataset.
    pub fn slice(&self, range: core::ops::Range<usize>, split: Split) -> Result<Self> {
        if range.end > self.len() || range.start >= range.end {
            bail!(Data, "slice {range:?} invalid for dataset of {}", self.len());
        }
        Self::new(self.instances[range].to_vec(), split)
    }
}
