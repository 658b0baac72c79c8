//! Continual classification of time series: prefix-task datasets, a
//! time-aware LSTM classifier, the RU continual-learning strategy, metrics
//! and importance-based interpretation.

// `!(x > 0.0)` comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod interpret;
pub mod metrics;
pub mod model;
pub mod presets;
pub mod rng;
pub mod strategy;
pub mod trainer;

pub use error::{CctsError, Result};
