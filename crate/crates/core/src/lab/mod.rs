//! Experiment harness: rate fitting, sweeps, reports and the command-line front end.

pub mod commands;
pub mod config;
mod fit;
pub mod report;
pub mod selftest;
pub mod sweep;

pub use config::{Config, SweepConfig, SweepVariable};
pub use fit::{rate_fit, rate_fit_log2, RateFit};
pub use report::{ExperimentReport, RateStatus, SweepPoint, Window};
pub use selftest::selftest;
pub use sweep::{discretization_sweep, stability_sweep};

#[cfg(test)]
mod tests;
