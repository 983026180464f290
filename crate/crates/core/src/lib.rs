//! Forecasting of retaining-wall lateral deflection during staged excavation.
//!
//! Three ConvLSTM base models, each reading a different number of recent
//! excavation phases, are rolled out recursively and their predictions are
//! combined point by point by a fully connected stacking meta-learner. The
//! crate also contains the synthetic data generator used to train them, the
//! evaluation metrics, exact Shapley attribution of the meta-learner, and the
//! orchestration behind the `wallcast` command line tool.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod convlstm;
pub mod datagen;
pub mod ensemble;
pub mod error;
pub mod forecast;
pub mod metrics;
pub mod numcore;
pub mod persist;
pub mod pipeline;
pub mod rng;
pub mod run;
pub mod weights;

pub use error::{Error, Result};
