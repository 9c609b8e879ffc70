//! Named trainable parameters with gradient buffers and Adam moments.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use crate::error::{bail, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Handle to a trainable parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

/// Handle to a non-trainable state buffer (batch-norm running statistics).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BufferId(usize);

/// Parameter values, gradients and optimiser state, kept as parallel arrays
/// indexed by [`ParamId`].
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    pub(crate) values: Vec<Tensor>,
    pub(crate) grads: Vec<Tensor>,
    pub(crate) adam_m: Vec<Tensor>,
    pub(crate) adam_v: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
    buffer_names: Vec<String>,
    buffers: Vec<Tensor>,
    pub(crate) step_count: u64,
}

/// Read-only view of parameter values, borrowed alongside [`Grads`].
#[derive(Clone, Copy)]
pub struct Values<'a>(&'a [Tensor]);

/// Mutable view of gradient buffers.
pub struct Grads<'a>(&'a mut [Tensor]);

impl<'a> Values<'a> {
    /// Value of `id`, borrowed for the lifetime of the view.
    pub fn get(self, id: ParamId) -> &'a Tensor {
        &self.0[id.0]
    }
}

impl Index<ParamId> for Values<'_> {
    type Output = Tensor;
    fn index(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }
}

impl Index<ParamId> for Grads<'_> {
    type Output = Tensor;
    fn index(&self, id: ParamId) -> &Tensor {
        &self.0[id.0]
    }
}

impl IndexMut<ParamId> for Grads<'_> {
    fn index_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.0[id.0]
    }
}

impl Index<ParamId> for ParamStore {
    type Output = Tensor;
    fn index(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }
}

/// Saved parameter values and buffers, used for best-epoch restore.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    values: Vec<Tensor>,
    buffers: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn check_unique(&self, name: &str) -> Result<()> {
        if self.index.contains_key(name) || self.buffer_names.iter().any(|n| n == name) {
            bail!(Config, "parameter name {name:?} is already registered");
        }
        Ok(())
    }

    pub fn register(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        self.check_unique(name)?;
        let id = ParamId(self.values.len());
        let zeros = Tensor::zeros(value.shape())?;
        self.names.push(name.to_string());
        self.grads.push(zeros.clone());
        self.adam_m.push(zeros.clone());
        self.adam_v.push(zeros);
        self.values.push(value);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn register_buffer(&mut self, name: &str, value: Tensor) -> Result<BufferId> {
        self.check_unique(name)?;
        self.buffer_names.push(name.to_string());
        self.buffers.push(value);
        Ok(BufferId(self.buffers.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.grads[id.0]
    }

    pub fn values(&self) -> Values<'_> {
        Values(&self.values)
    }

    /// Borrow values immutably and gradients mutably at the same time.
    pub fn split_mut(&mut self) -> (Values<'_>, Grads<'_>) {
        (Values(&self.values), Grads(&mut self.grads))
    }

    pub fn zero_grads(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn total_parameter_count(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    /// `(name, value)` pairs in registration order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn buffer(&self, id: BufferId) -> &Tensor {
        &self.buffers[id.0]
    }

    pub fn buffer_mut(&mut self, id: BufferId) -> &mut Tensor {
        &mut self.buffers[id.0]
    }

    pub fn buffer_id(&self, name: &str) -> Option<BufferId> {
        self.buffer_names.iter().position(|n| n == name).map(BufferId)
    }

    /// `(name, value)` pairs of non-trainable buffers in registration order.
    pub fn buffers(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.buffer_names.iter().map(String::as_str).zip(&self.buffers)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { values: self.values.clone(), buffers: self.buffers.clone() }
    }

    pub fn restore(&mut self, snapshot: &Snapshot) {
        assert_eq!(snapshot.values.len(), self.values.len(), "snapshot from another store");
        self.values.clone_from(&snapshot.values);
        self.buffers.clone_from(&snapshot.buffers);
    }

    /// Overwrites the value of `name`, checking the shape.
    pub fn load_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = if let Some(id) = self.id(name) {
            &mut self.values[id.0]
        } else if let Some(id) = self.buffer_id(name) {
            &mut self.buffers[id.0]
        } else {
            bail!(Data, "unknown parameter {name:?}");
        };
        if slot.shape() != value.shape() {
            bail!(
                Dimension,
                "parameter {name:?} has shape {:?}, loaded value has {:?}",
                slot.shape(),
                value.shape()
            );
        }
        *slot = value;
        Ok(())
    }
}

/// Uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`, drawn from the
/// sub-stream named after the parameter.
pub fn xavier_uniform(
    seed: u64,
    name: &str,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Result<Tensor> {
    let limit = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    let mut rng = RngStream::named(seed, name);
    let mut t = Tensor::zeros(shape)?;
    t.data_mut().iter_mut().for_each(|x| *x = rng.uniform(-limit, limit));
    Ok(t)
}

/// Parameter group of a dotted name: its first two segments.
pub fn group_of(name: &str) -> &str {
    match name.match_indices('.').nth(1) {
        Some((at, _)) => &name[..at],
        None => name,
    }
}
