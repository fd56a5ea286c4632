//! Online label-shift adaptation with shift-aware learning rates.
//!
//! A classifier pretrained on labeled data is deployed on a stream whose class
//! prior drifts. Without labels, each step estimates the current prior with
//! black-box shift estimation, builds a reweighted holdout risk, and takes a
//! gradient step whose size tracks how much the model's mean prediction moved
//! since the previous batch.
//!
//! Modules, bottom-up:
//!
//! - [`linalg`]: ridge inversion, simplex projection, cosine distance
//! - [`data`]: Gaussian-cluster and IDX pools, stratified splits
//! - [`shift`]: label-shift schedules and stream sampling
//! - [`model`]: softmax-linear classifier and pretraining
//! - [`estimator`]: confusion matrix, shift estimation, unsupervised risk
//! - [`asap`]: shift estimate and learning-rate mapping
//! - [`methods`]: ASAP and the baseline runners
//! - [`harness`]: experiment matrix, sweeps, traces, reports

pub mod asap;
pub mod data;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod linalg;
pub mod methods;
pub mod model;
pub mod rng;
pub mod shift;

pub use error::{Error, Result};
