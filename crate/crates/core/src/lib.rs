//! Shared-control wheelchair navigation simulator.

// `!(x > 0.0)` is used on purpose so NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod metrics;
pub mod modes;
pub mod mpc;
pub mod planner;
pub mod seed;
pub mod sim;
pub mod user;
pub mod vehicle;
pub mod world;

pub use error::{Error, Result};
