//! Command-line orchestration for the response classifier: configuration,
//! per-patient fan-out, caching and report emission.

pub mod commands;
pub mod config;
pub mod exit;

pub use config::{Overrides, RunConfig};
