//! Library side of the `promptsteer` binary: config loading and the
//! simulated-user convergence experiment.

pub mod files;
pub mod simulate;

pub use simulate::{similarity, simulate, ConvergenceReport, SimConfig, SimulatedUser};
