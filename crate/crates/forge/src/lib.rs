//! File formats, batch compilation and reporting around `rex-forge-core`.
//!
//! The `rex-forge` binary wraps these modules as the `compile`, `eval`,
//! `stats`, `sample` and `check-grads` subcommands.

pub mod batch;
pub mod config;
pub mod error;
pub mod eval;
pub mod formats;
pub mod gradcheck;
pub mod sample;
pub mod stats;

pub use error::ForgeError;
