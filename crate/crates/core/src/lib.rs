//! Unbiased estimation of the explained variance `tau^2 = ||beta||^2` and the
//! noise level `sigma^2` in high-dimensional linear models whose covariate
//! distribution is known.
//!
//! The estimators are U-statistics in `W_ij = X_ij Y_i`; variance reduction
//! comes from subtracting zero-mean statistics that the known covariate
//! distribution makes available.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod io;
pub mod model;
pub mod runner;
pub mod selection;
pub mod simgen;
pub mod sum;
pub mod ustat;
pub mod variance;
pub mod zeroboost;

pub use error::{Error, Result};
pub use estimators::{EstimateReport, EstimatorId, SingleZeroStat};
pub use harness::{RepRecord, RunOptions, SummaryStats};
pub use model::{CoefficientVector, CovariateModel, LabeledDataset, WMatrix};
pub use runner::{Context, EstimateOptions, Truth};
pub use selection::{SelectionOptions, SelectionResult};
pub use simgen::{ScenarioConfig, XDist};
pub use variance::VarianceMethod;
pub use zeroboost::BootstrapConfig;
