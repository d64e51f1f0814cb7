//! Multicalibration by empirical risk minimisation over ensembles of
//! depth-two decision trees that split on a base score and group
//! membership indicators, together with reference calibrators, metrics,
//! brute-force oracles, synthetic data generators and audit utilities.

#![allow(clippy::needless_range_loop)]

pub mod audit;
pub mod boost;
pub mod calibrators;
pub mod data;
pub mod discretize;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod synthetic;
pub mod tree;

mod split;
mod util;

pub use boost::{fit_greedy, fit_squarelev, BoostConfig, FitTrace, SplitFamily, SquareLevConfig, StopReason};
pub use calibrators::{CalibratedModel, CalibratorKind};
pub use data::{load_csv, split_holdout, CalibrationDataset, SplitSpec};
pub use discretize::{Discretizer, DiscretizerKind};
pub use error::{Error, Result};
pub use metrics::{evaluate, multicalibration_error, EvaluationReport};
pub use tree::{DepthTwoTree, EnsemblePredictor, LevelSetPatch, SplitPredicate};
