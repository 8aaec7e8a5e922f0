//! Intraday stock forecasting toolkit.
//!
//! 5-minute ticks are aggregated into three intraday slots, turned into
//! eleven slot-difference predictors, and fed to a suite of classical
//! classifiers and regressors plus LSTM and 1D-CNN forecasters. The
//! evaluation suite computes confusion metrics, ROC/AUC, lift, regression
//! ratios and residual diagnostics; the runner drives whole experiments.

pub mod deepnets;
pub mod error;
pub mod evalsuite;
pub mod features;
pub mod kernel_models;
mod linalg;
pub mod mars;
pub mod linmod;
pub mod market_data;
pub mod rng;
pub mod runner;
pub mod shallow_nn;
pub mod slotter;
pub mod trees;

pub use error::{Error, Result};
