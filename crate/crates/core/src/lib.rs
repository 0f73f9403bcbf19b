//! Homodyned-K (HK) parameter estimation from ultrasound envelope samples.
//!
//! The crate covers the whole pipeline:
//!
//! - [`hk`]: HK parameterization, the compound-Gaussian envelope sampler and
//!   ([`pdf`]) the HK density by oscillatory quadrature.
//! - [`features`]: the eight envelope statistics fed to the estimators, plus
//!   raster decorrelation and frame averaging.
//! - [`nn`]: a small dense/Bayesian network engine with Adam.
//! - [`estimators`]: ANN, BNN and a moment-matching lookup baseline.
//! - [`eval`]: test-grid protocol, RRMSE/MAE maps, two-layer phantom workflow.
//! - [`io`]: envelope files, run configuration and manifests.

pub mod error;
pub mod estimators;
pub mod eval;
pub mod features;
pub mod hk;
pub mod io;
pub mod nn;
pub mod pdf;
pub mod rng;

pub use error::{Error, Result};
pub use features::{compute_features, EnvelopeRaster, FeatureVector, Skips};
pub use hk::{params_from_targets, sample_hk, EnvelopeBlock, HkParams};
pub use estimators::{make_training_set, EstimatorKind, Model, MomentGrid, PredictOptions, Prediction};
pub use eval::{run_grid, EvalGrid, GridResult};
pub use nn::TrainConfig;
pub use pdf::hk_pdf;
