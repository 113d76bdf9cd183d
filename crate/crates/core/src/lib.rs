//! Active selection of preference data for log-linear DPO policies.
//!
//! The crate is `no_std` and needs only `alloc`. It provides the DPO
//! likelihood machinery ([`model`]), maximum-likelihood fitting
//! ([`solver`]), the regularized design matrix with a rank-one inverse
//! update ([`design`]), the greedy selectors and baselines ([`selection`]),
//! a synthetic dataset pipeline ([`datagen`]) and evaluation metrics
//! ([`metrics`]).
//!
//! File formats, the experiment runner and the command line live in the
//! companion `adpo` crate.

#![no_std]

extern crate alloc;

pub mod datagen;
pub mod design;
pub mod error;
pub mod metrics;
pub mod model;
pub mod selection;
pub mod solver;

pub use nalgebra;

pub use datagen::{FeatureSource, GeneratorMode, GeneratorSpec, GroundTruth};
pub use design::DesignState;
pub use error::{Error, Result};
pub use metrics::MetricsReport;
pub use model::{ModelConfig, Policy, PreferenceDataset, PreferencePoint};
pub use selection::{Algorithm, FeedbackOracle, RefitSchedule, SelectionConfig, SelectionTrace};
pub use solver::{FitOptions, FitReport};
