//! Split conformal calibration in log space.
//!
//! Calibration residuals `s = |y_log - ŷ_log|` are sorted and the threshold
//! is the `k`-th smallest with `k = ⌈(n + 1)(1 - α)⌉`. When `k > n` the
//! threshold is unbounded and intervals cover the whole line. For a new
//! input the log-space interval is `ŷ_log ± q` and the physical interval is
//! its image under `exp(·) - offset`.
//!
//! Under exchangeability of calibration and test points the test residual is
//! equally likely to take any of the `n + 1` ranks, so it lands at or below
//! the `k`-th calibration score with probability at least `k / (n + 1) ≥ 1 - α`.

use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::forest::{ForestModel, TargetSpace};
use crate::transform::TargetTransform;

/// Nonconformity score: absolute residual in model space.
pub fn score(y_true: f64, y_pred: f64) -> f64 {
    (y_true - y_pred).abs()
}

/// Order-statistic rank `⌈(n + 1)(1 - α)⌉`. May exceed `n`.
pub fn conformal_rank(n_cal: usize, alpha: f64) -> usize {
    let target = (n_cal as f64 + 1.0) * (1.0 - alpha);
    // (n + 1)(1 - α) is often an integer in exact arithmetic but lands a few
    // ulps above it in floating point.
    let k = (target - 1e-9).ceil();
    k.max(1.0) as usize
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalCalibrator {
    /// Calibration scores, ascending, duplicates kept.
    scores: Vec<f64>,
    alpha: f64,
    rank: usize,
    /// `None` when `rank > n_cal`.
    q_alpha: Option<f64>,
    n_cal: usize,
    space: TargetSpace,
}

impl ConformalCalibrator {
    /// Calibrate on log-space scores.
    pub fn calibrate(scores: Vec<f64>, alpha: f64) -> Result<Self> {
        Self::calibrate_in(scores, alpha, TargetSpace::Log)
    }

    pub fn calibrate_in(mut scores: Vec<f64>, alpha: f64, space: TargetSpace) -> Result<Self> {
        check_alpha(alpha)?;
        if scores.is_empty() {
            return Err(Error::state("cannot calibrate on an empty score list"));
        }
        if let Some(bad) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::Domain(format!(
                "calibration scores must be finite and >= 0, got {bad}"
            )));
        }
        scores.sort_by(f64::total_cmp);
        let n_cal = scores.len();
        let rank = conformal_rank(n_cal, alpha);
        let q_alpha = (rank <= n_cal).then(|| scores[rank - 1]);
        Ok(Self {
            scores,
            alpha,
            rank,
            q_alpha,
            n_cal,
            space,
        })
    }

    /// Same scores, different miscoverage level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Self::calibrate_in(self.scores.clone(), alpha, self.space)
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_cal(&self) -> usize {
        self.n_cal
    }

    pub fn space(&self) -> TargetSpace {
        self.space
    }

    pub fn q_alpha(&self) -> Option<f64> {
        self.q_alpha
    }

    /// Threshold, `+∞` when unbounded.
    pub fn q(&self) -> f64 {
        self.q_alpha.unwrap_or(f64::INFINITY)
    }

    pub fn is_unbounded(&self) -> bool {
        self.q_alpha.is_none()
    }

    /// Log-space interval `pred ± q`.
    pub fn interval_log(&self, y_log_pred: f64) -> PredictionInterval {
        let q = self.q();
        PredictionInterval {
            point: y_log_pred,
            lower: y_log_pred - q,
            upper: y_log_pred + q,
            alpha: self.alpha,
            space: IntervalSpace::Log,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let fresh = Self::calibrate_in(self.scores.clone(), self.alpha, self.space)?;
        if fresh != *self {
            return Err(Error::config(
                "stored calibrator is internally inconsistent",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalSpace {
    Log,
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub space: IntervalSpace,
}

impl PredictionInterval {
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn is_unbounded(&self) -> bool {
        self.upper == f64::INFINITY
    }
}

/// Map a log-space interval to the physical scale, endpoint by endpoint.
/// Lower bounds are not clamped at zero.
pub fn interval_physical(iv: &PredictionInterval, t: &TargetTransform) -> PredictionInterval {
    debug_assert_eq!(iv.space, IntervalSpace::Log);
    PredictionInterval {
        point: t.inverse(iv.point),
        lower: t.inverse(iv.lower),
        upper: t.inverse(iv.upper),
        alpha: iv.alpha,
        space: IntervalSpace::Physical,
    }
}

fn check_spaces(model: &ForestModel, cal: &ConformalCalibrator) -> Result<()> {
    if model.target_space != cal.space() {
        return Err(Error::state(format!(
            "calibrator was built in {:?} space but the model predicts in {:?} space",
            cal.space(),
            model.target_space
        )));
    }
    Ok(())
}

/// Physical-scale conformal interval for one encoded row.
pub fn predict_interval(
    model: &ForestModel,
    cal: &ConformalCalibrator,
    t: &TargetTransform,
    x: &[f64],
) -> Result<PredictionInterval> {
    check_spaces(model, cal)?;
    let pred = model.predict_mean(x);
    Ok(match model.target_space {
        TargetSpace::Log => interval_physical(&cal.interval_log(pred), t),
        TargetSpace::Raw => PredictionInterval {
            space: IntervalSpace::Physical,
            ..cal.interval_log(pred)
        },
    })
}

/// Scores of calibration rows against `model`, on the model's scale.
pub fn calibration_scores(
    model: &ForestModel,
    t: &TargetTransform,
    x_cal: &Matrix,
    y_cal: &[f64],
) -> Result<Vec<f64>> {
    x_cal
        .rows()
        .zip(y_cal)
        .map(|(row, &y)| {
            let truth = match model.target_space {
                TargetSpace::Log => t.forward(y)?,
                TargetSpace::Raw => y,
            };
            Ok(score(truth, model.predict_mean(row)))
        })
        .collect()
}

/// Score the calibration rows and build the calibrator in the model's space.
pub fn calibrate_forest(
    model: &ForestModel,
    t: &TargetTransform,
    x_cal: &Matrix,
    y_cal: &[f64],
    alpha: f64,
) -> Result<ConformalCalibrator> {
    check_alpha(alpha)?;
    if x_cal.n_rows() == 0 {
        return Err(Error::state("calibration subset is empty"));
    }
    let scores = calibration_scores(model, t, x_cal, y_cal)?;
    ConformalCalibrator::calibrate_in(scores, alpha, model.target_space)
}
