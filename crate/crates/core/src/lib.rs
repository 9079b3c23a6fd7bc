//! Distribution-free prediction intervals for irradiation void swelling.
//!
//! The pipeline fits a bagged CART forest on `ln(y + offset)`, calibrates a
//! split-conformal threshold on a held-out set of absolute log residuals, and
//! maps the symmetric log-space interval back to the physical swelling scale.
//! The resulting intervals are narrow near zero swelling and widen with the
//! predicted swelling level, and carry the usual finite-sample coverage
//! guarantee under exchangeability.
//!
//! Modules:
//!
//! - [`data`]: CSV ingestion, validation, the negative-swelling filter,
//!   one-hot encoding and seeded train/calibration/test splits.
//! - [`forest`]: from-scratch CART regression trees and the bagged ensemble.
//! - [`transform`]: the log-offset target transform.
//! - [`conformal`]: nonconformity scores, the order-statistic threshold and
//!   interval construction.
//! - [`eval`]: accuracy, coverage and width metrics, EDA summaries and the
//!   three-variant comparison.
//! - [`synth`]: heteroscedastic synthetic generator and Monte-Carlo coverage
//!   trials.
//! - [`cli`]: the `swellcp` command-line frontend.

// Negated float comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod conformal;
pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod transform;

pub use conformal::{ConformalCalibrator, IntervalSpace, PredictionInterval};
pub use data::{Dataset, FeatureSchema, IrradiationType, Sample, SplitFractions, SplitIndices};
pub use error::{Error, Result};
pub use forest::{ForestModel, Hyperparams, TargetSpace};
pub use transform::TargetTransform;
