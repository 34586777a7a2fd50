//! Online time-series forecasting with a continuously evolving pool of
//! forecasters.
//!
//! Each forecaster in the pool is indexed by a *gene*, the mean and standard
//! deviation of the windows it has been trained on. Incoming windows are routed
//! to the forecaster with the closest gene; a window whose mean is a
//! statistically significant outlier for that gene splits off a new
//! forecaster, and forecasters that stay idle too long are dropped.
//!
//! * [`gene`]: window signatures and their streaming updates
//! * [`forecaster`]: the forecaster contract and built-in models
//! * [`pool`]: retrieval, evolution, elimination and learning-rate warm-up
//! * [`engine`]: warm-up and delayed-feedback online stages
//! * [`data`]: CSV ingestion, normalisation and synthetic streams
//! * [`manifest`], [`results`]: run descriptions and result bundles
//! * [`cli`]: the `driftpool` command line

pub mod cli;
pub mod data;
pub mod engine;
pub mod error;
pub mod forecaster;
pub mod gene;
pub mod manifest;
pub mod pool;
pub mod results;

pub use error::{Error, ErrorClass, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/genes.md")]
    mod genes {}
    #[doc = include_str!("../../../book/src/forecasters.md")]
    mod forecasters {}
    #[doc = include_str!("../../../book/src/pool.md")]
    mod pool {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
