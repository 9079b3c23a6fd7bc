//! Run configuration and the fit/calibrate steps shared by the CLI, the
//! variant comparison and the Monte-Carlo harness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conformal::{self, ConformalCalibrator};
use crate::data::{self, Dataset, Matrix, SplitFractions, SplitIndices};
use crate::error::{Error, Result};
use crate::forest::{self, ForestModel, Hyperparams, TargetSpace};
use crate::transform::TargetTransform;

/// Flat run configuration, read from JSON. Missing keys take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub alpha: f64,
    pub offset: f64,
    pub log_target: bool,
    pub n_trees: usize,
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    pub train_fraction: f64,
    pub calibration_fraction: f64,
    pub test_fraction: f64,
    /// Upper edges of the swelling bins used for width summaries.
    pub width_bin_edges: Vec<f64>,
    pub histogram_bin_width: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let hp = Hyperparams::default();
        let f = SplitFractions::default();
        Self {
            seed: 0,
            alpha: 0.2,
            offset: 1.0,
            log_target: true,
            n_trees: hp.n_trees,
            max_features: hp.max_features,
            min_samples_leaf: hp.min_samples_leaf,
            max_depth: hp.max_depth,
            train_fraction: f.train,
            calibration_fraction: f.calibration,
            test_fraction: f.test,
            width_bin_edges: vec![1.0, 5.0, 15.0],
            histogram_bin_width: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            n_trees: self.n_trees,
            max_features: self.max_features,
            min_samples_leaf: self.min_samples_leaf,
            max_depth: self.max_depth,
        }
    }

    pub fn fractions(&self) -> SplitFractions {
        SplitFractions {
            train: self.train_fraction,
            calibration: self.calibration_fraction,
            test: self.test_fraction,
        }
    }

    pub fn transform(&self) -> Result<TargetTransform> {
        TargetTransform::new(self.offset)
    }

    pub fn target_space(&self) -> TargetSpace {
        if self.log_target {
            TargetSpace::Log
        } else {
            TargetSpace::Raw
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams().validate(data::N_FEATURES)?;
        self.fractions().validate()?;
        self.transform()?;
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        let edges = &self.width_bin_edges;
        if edges.iter().any(|e| !(e.is_finite() && *e > 0.0))
            || edges.windows(2).any(|w| !(w[0] < w[1]))
        {
            return Err(Error::config(format!(
                "width bin edges must be positive and strictly increasing, got {edges:?}"
            )));
        }
        if !(self.histogram_bin_width.is_finite() && self.histogram_bin_width > 0.0) {
            return Err(Error::config("histogram bin width must be > 0"));
        }
        Ok(())
    }
}

/// Filtered dataset with its encoded design matrix and physical targets.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl Prepared {
    /// Apply the nonnegative filter and encode.
    pub fn new(raw: Dataset) -> Self {
        let dataset = data::filter_nonnegative(raw);
        let (x, y) = data::encode(&dataset);
        Self { dataset, x, y }
    }

    pub fn subset(&self, indices: &[usize]) -> (Matrix, Vec<f64>) {
        (
            self.x.select_rows(indices),
            indices.iter().map(|&i| self.y[i]).collect(),
        )
    }
}

/// Fit a forest on physical targets, transforming them first in log space.
pub fn fit_model(
    x: &Matrix,
    y: &[f64],
    config: &PipelineConfig,
    space: TargetSpace,
) -> Result<ForestModel> {
    let t = config.transform()?;
    let targets = match space {
        TargetSpace::Log => t.forward_all(y)?,
        TargetSpace::Raw => y.to_vec(),
    };
    forest::fit_forest(x, &targets, &config.hyperparams(), config.seed, space)
}

/// Forest fitted on the training rows of `split`.
pub fn fit_on_split(
    prepared: &Prepared,
    split: &SplitIndices,
    config: &PipelineConfig,
    space: TargetSpace,
) -> Result<ForestModel> {
    let (x, y) = prepared.subset(&split.train);
    fit_model(&x, &y, config, space)
}

/// Conformal calibrator from the calibration rows of `split`.
pub fn calibrate_on_split(
    model: &ForestModel,
    prepared: &Prepared,
    split: &SplitIndices,
    config: &PipelineConfig,
    alpha: f64,
) -> Result<ConformalCalibrator> {
    if split.calibration.is_empty() {
        return Err(Error::state("calibration subset is empty"));
    }
    let (x, y) = prepared.subset(&split.calibration);
    conformal::calibrate_forest(model, &config.transform()?, &x, &y, alpha)
}
