//! Wearable fall detection.
//!
//! The pipeline runs raw 6-axis inertial recordings through median and
//! Butterworth filtering, cuts them into 50-sample windows, and classifies
//! each window with a stacked LSTM (64 then 32 units) trained with Adam.
//! The trained network can be magnitude-pruned, evaluated with a
//! recall-oriented report, serialized, and run over a live frame feed that
//! posts debounced alerts to a webhook.

pub mod cli;
pub mod data;
pub mod error;
pub mod metrics;
pub mod network;
pub mod optim;
pub mod pipeline;
pub mod pruning;
pub mod rng;
pub mod runtime;
pub mod signal;

pub use error::{Error, Result};
