//! Benchmark scenario builders and runners.

pub mod am;
pub mod extrusion;
pub mod taylor_couette;
