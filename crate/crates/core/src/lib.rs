//! Pathwise log-optimal portfolios driven by rough paths.
//!
//! The crate resolves every continuous-time object on a dyadic master grid: sampled
//! paths and their p-variation ([`grid`]), Itô-type rough path lifts ([`lift`]),
//! controlled paths and rough integration ([`controlled`]), rough differential
//! equations ([`rde`]), the local-volatility and Black–Scholes portfolio constructions
//! ([`market`]), seeded noise ([`noise`]) and the experiment harness ([`lab`]).

pub mod error;
pub mod controlled;
pub mod grid;
pub mod lab;
pub mod lift;
pub mod market;
pub mod noise;
pub mod rde;

pub use error::{Error, Result};
