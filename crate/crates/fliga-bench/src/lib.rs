//! Benchmark scenarios, error metrics, run artifacts and the CLI driver
//! for the floating-IGA engine.

pub mod config;
pub mod metrics;
pub mod output;
pub mod scenarios;
