//! Bayesian additive regression trees.
//!
//! The pipeline is `dataset` (CSV to numeric frame) → `priors` (calibration)
//! → `sampler` (Gibbs chains) → [`BartModel`], which `inference`,
//! `diagnostics` and `persistence` consume.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod inference;
pub mod model;
pub mod persistence;
pub mod priors;
pub mod sampler;
pub mod stats;
pub mod tree;

pub use dataset::{build_model_frame, load_csv, ModelFrame, RawTable, Task};
pub use error::{BartError, Result};
pub use model::{BartModel, ModelMeta};
pub use priors::{CalibratedPriors, Hyperparameters};
pub use sampler::{PosteriorEnsemble, SamplerOptions};
