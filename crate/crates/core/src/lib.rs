#![no_std]

//! Higher-order multimodal sequence fusion.
//!
//! Two sub-networks read the same aligned language / visual / acoustic
//! sequences. The *common* network summarises each modality with an LSTM,
//! crosses the three summaries with a trilinear outer product and reads the
//! resulting cube with a 3D convolution. The *unique* network builds one such
//! cube per time step from feed-forward projections and sum-pools the
//! per-step features over time. A parameter-free mean joins the two before a
//! single affine prediction head.
//!
//! Everything here is pure computation over `alloc` containers: forward and
//! backward passes are written out by hand, and file IO lives in the `hoseq`
//! companion crate.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod adam;
mod blocks;
pub mod common;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod params;
pub mod precise;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod unique;

pub use error::{Error, Result};
pub use blocks::PerModality;
pub use tensor::Tensor;
