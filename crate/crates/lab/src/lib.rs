//! File formats, experiment drivers and the command line for `algd-core`.
//!
//! Configs are TOML, logs and grids are CSV, checkpoints are a JSON
//! manifest plus a little-endian `f32` blob.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod log;
pub mod run;

pub use config::RunConfig;
