//! Transmit-power analysis for Gaussian sources sent over Gaussian channels
//! in the vanishing-bandwidth regime.
//!
//! A target is a fidelity-quality profile `F(Q)`: the fidelity that must be
//! achieved at every channel quality `Q = 1/N` simultaneously. The crate
//! computes a lower bound on the minimum transmit power that any scheme needs
//! to meet a profile, evaluates the fidelity actually achieved by uncoded,
//! hybrid (analog plus one digital layer), and multi-layer schemes, searches
//! digital-layer parameters to minimize total power, and validates the
//! finite-blocklength distortion formulas by Monte Carlo simulation.

// `!(x > 0.0)` guards reject NaN; `x <= 0.0` would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod error;
pub mod optimizer;
pub mod profiles;
pub mod schemes;
pub mod simulator;

mod search;

pub use error::{Error, Result};
