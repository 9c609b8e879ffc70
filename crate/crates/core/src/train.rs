//! Minibatch Adam training with validation-MAE early stopping and
//! best-epoch restore.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::adam::Adam;
use crate::data::{MultimodalDataset, MultimodalInstance};
use crate::error::{bail, Error, Result};
use crate::layers::Phase;
use crate::metrics::mae;
use crate::model::{HoseqConfig, HoseqModel};
use crate::params::{group_of, ParamStore};
use crate::rng::RngStream;

/// Wall-clock source. The core crate has no clock of its own.
pub trait Clock {
    fn now_seconds(&mut self) -> f64;
}

/// Reports zero elapsed time; keeps histories bit-reproducible.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_seconds(&mut self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

/// Stops after `patience` consecutive epochs without a strict decrease of
/// the monitored value. Epochs are numbered from 1.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, stale: 0 }
    }

    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        let improved = self.best.is_none_or(|(_, b)| value < b);
        if improved {
            self.best = Some((epoch, value));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision { improved, stop: self.stale >= self.patience }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best.map(|(_, v)| v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

/// Mean per-batch L2 gradient norm of one parameter group over one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradNorm {
    pub epoch: usize,
    pub group: String,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// Only groups the configured mode trains appear here.
    pub grad_norms: Vec<GradNorm>,
}

impl TrainHistory {
    pub fn best_record(&self) -> Option<&EpochRecord> {
        let best = self.best_epoch?;
        self.records.iter().find(|r| r.epoch == best)
    }
}

/// Builds a model from `config`, trains it and returns the best-epoch
/// parameters.
pub fn train(
    config: &HoseqConfig,
    train_set: &MultimodalDataset,
    val_set: &MultimodalDataset,
    clock: &mut dyn Clock,
) -> Result<(HoseqModel, ParamStore, TrainHistory)> {
    let (model, mut store) = HoseqModel::build(config, train_set.dims())?;
    let history = fit(&model, &mut store, train_set, val_set, clock)?;
    Ok((model, store, history))
}

/// Trains `store` in place. On return it holds the parameters of the epoch
/// with the lowest validation MAE (unchanged when `max_epochs` is 0).
pub fn fit(
    model: &HoseqModel,
    store: &mut ParamStore,
    train_set: &MultimodalDataset,
    val_set: &MultimodalDataset,
    clock: &mut dyn Clock,
) -> Result<TrainHistory> {
    let config = model.config();
    for (what, set) in [("training", train_set), ("validation", val_set)] {
        if set.is_empty() {
            bail!(Data, "{what} split is empty");
        }
        if set.dims() != model.dims() {
            bail!(Data, "{what} dims ({}) do not match the model ({})", set.dims(), model.dims());
        }
    }

    let adam = Adam {
        learning_rate: config.learning_rate,
        beta1: config.adam_beta1,
        beta2: config.adam_beta2,
        epsilon: config.adam_epsilon,
    };
    let mut shuffle_rng = RngStream::named(config.seed, "train.shuffle");
    let mut dropout_rng = RngStream::named(config.seed, "train.dropout");
    let mut stopping = EarlyStopping::new(config.patience);
    let mut history = TrainHistory::default();
    let mut best = None;
    let targets = val_set.labels();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let active: Vec<bool> = store.iter().map(|(name, _)| model.trains(name)).collect();

    for epoch in 1..=config.max_epochs {
        let started = clock.now_seconds();
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut norm_sums: BTreeMap<String, f64> = BTreeMap::new();
        let batches = batch_bounds(order.len(), config.batch_size, config.batchnorm);
        for &(lo, hi) in &batches {
            let batch: Vec<&MultimodalInstance> =
                order[lo..hi].iter().map(|&i| &train_set.instances()[i]).collect();
            let (loss, pass) =
                model.loss_and_grad(store, &batch, Phase::Train, &mut dropout_rng).map_err(|e| at_epoch(e, epoch))?;
            if !loss.is_finite() {
                bail!(Numeric, "epoch {epoch}: non-finite training loss");
            }
            model.apply_batch_stats(store, &pass);
            loss_sum += loss * batch.len() as f64;

            let mut squares: BTreeMap<&str, f64> = BTreeMap::new();
            for (id, _) in store.ids().zip(&active).filter(|(_, &a)| a) {
                let g: f64 = store.grad(id).data().iter().map(|x| x * x).sum();
                *squares.entry(group_of(store.name(id))).or_insert(0.0) += g;
            }
            for (g, s) in squares {
                *norm_sums.entry(String::from(g)).or_insert(0.0) += libm::sqrt(s);
            }

            adam.step(store).map_err(|e| at_epoch(e, epoch))?;
        }

        let val_mae = mae(&model.predict(store, val_set).map_err(|e| at_epoch(e, epoch))?, &targets)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_mae,
            seconds: clock.now_seconds() - started,
        };
        history.records.push(record);
        let n_batches = batches.len() as f64;
        history.grad_norms.extend(
            norm_sums.into_iter().map(|(group, sum)| GradNorm { epoch, group, norm: sum / n_batches }),
        );

        let decision = stopping.observe(epoch, val_mae);
        if decision.improved {
            best = Some(store.snapshot());
        }
        if decision.stop {
            history.stopped_early = epoch < config.max_epochs;
            break;
        }
    }

    if let Some(snapshot) = &best {
        store.restore(snapshot);
    }
    history.best_epoch = stopping.best_epoch();
    Ok(history)
}

fn at_epoch(e: Error, epoch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(alloc::format!("epoch {epoch}: {msg}")),
        other => other,
    }
}

/// Half-open minibatch ranges over `n` items. With batch normalisation a
/// trailing single-item batch is merged into the one before it.
pub fn batch_bounds(n: usize, batch_size: usize, batchnorm: bool) -> Vec<(usize, usize)> {
    let size = batch_size.clamp(1, n.max(1));
    let mut bounds: Vec<(usize, usize)> = (0..n).step_by(size).map(|lo| (lo, (lo + size).min(n))).collect();
    if batchnorm && bounds.len() > 1 {
        if let Some(&(lo, hi)) = bounds.last() {
            if hi - lo == 1 {
                bounds.pop();
                if let Some(prev) = bounds.last_mut() {
                    prev.1 = hi;
                }
            }
        }
    }
    bounds
}
