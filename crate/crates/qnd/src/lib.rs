//! Std companion to `qnd-core`: decomposition cache files, figure-data
//! tables, verification suites, benchmarks and trajectory batches.

pub mod bench;
pub mod cache;
pub mod config;
pub mod error;
pub mod figures;
pub mod output;
pub mod trajectories;
pub mod verify;

pub use config::RunConfig;
pub use error::{Error, Result};
