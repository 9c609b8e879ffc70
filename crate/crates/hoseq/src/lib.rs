//! File formats, run configuration and the `hoseq` command line around
//! [`hoseq_core`].

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod mmseq;

pub use error::{Error, Result};
