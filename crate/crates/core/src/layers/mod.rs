//! Differentiable building blocks. Each forward returns what its backward
//! needs; backward passes return owned gradients that callers accumulate
//! into a [`ParamStore`](crate::params::ParamStore).

mod activation;
mod batchnorm;
mod dense;
mod dropout;
mod lstm;

pub use activation::Activation;
pub use batchnorm::{
    batchnorm, batchnorm_backward, BatchNormCache, BatchNormGrads, BatchStats, BN_EPSILON,
    BN_MOMENTUM,
};
pub use dense::{dense, dense_backward, DenseGrads};
pub use dropout::{check_rate as dropout_rate_check, dropout, dropout_backward, DropoutMask};
pub use lstm::{
    lstm_run, lstm_run_backward, lstm_step, lstm_step_backward, LstmGrads, LstmParams,
    LstmRunCache, LstmState, LstmStepCache,
};

/// Whether a forward pass is part of training (dropout active, batch
/// statistics) or evaluation (deterministic).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}
