//! Switched-systems simulator for tracking under intermittent GPS, with memory-regressor
//! parameter estimation and dwell-time scheduling.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod cli;
pub mod config;
pub mod control;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod scheduler;
pub mod signals;

pub use error::{Result, SimError};
