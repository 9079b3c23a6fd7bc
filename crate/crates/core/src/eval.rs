//! Accuracy, coverage and width metrics, exploratory summaries, and the
//! three-way comparison of Standard RF, Log RF and Log CP intervals.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::conformal::{self, ConformalCalibrator, PredictionInterval};
use crate::data::{Dataset, IrradiationType, Matrix, SplitIndices, CONTINUOUS_NAMES, N_CONTINUOUS};
use crate::error::{Error, Result};
use crate::forest::{self, ForestModel, TargetSpace};
use crate::pipeline::{self, PipelineConfig, Prepared};
use crate::transform::TargetTransform;

/// One test-set prediction on the physical scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub index: usize,
    pub y_true: f64,
    pub y_point: f64,
    pub lower: f64,
    pub upper: f64,
    pub covered: bool,
    pub width: f64,
}

impl PredictionRecord {
    pub fn new(index: usize, y_true: f64, iv: &PredictionInterval) -> Self {
        Self {
            index,
            y_true,
            y_point: iv.point,
            lower: iv.lower,
            upper: iv.upper,
            covered: iv.contains(y_true),
            width: iv.width(),
        }
    }
}

fn check_pairs(y_true: &[f64], y_pred: &[f64], min: usize) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Domain(format!(
            "length mismatch: {} truths, {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.len() < min {
        return Err(Error::Domain(format!(
            "need at least {min} pairs, got {}",
            y_true.len()
        )));
    }
    Ok(())
}

/// `1 - SS_res / SS_tot`, with `SS_tot` about the mean of `y_true`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pairs(y_true, y_pred, 2)?;
    let m = forest::mean(y_true);
    let ss_tot: f64 = y_true.iter().map(|y| (y - m).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Domain(
            "R² undefined: y_true has zero variance".into(),
        ));
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    check_pairs(y_true, y_pred, 1)?;
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / y_true.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub n: usize,
    pub covered: usize,
    pub coverage: f64,
    /// Infinite (written as `null`) when any interval is unbounded.
    pub avg_width: f64,
    /// Mean width over records with `y_true < 1`; absent when there are none.
    pub width_below_1: Option<f64>,
    pub unbounded: bool,
}

pub fn coverage_and_width(records: &[PredictionRecord]) -> Result<CoverageSummary> {
    if records.is_empty() {
        return Err(Error::Domain("coverage needs at least one record".into()));
    }
    let n = records.len();
    let covered = records.iter().filter(|r| r.covered).count();
    let avg_width = records.iter().map(|r| r.width).sum::<f64>() / n as f64;
    let low: Vec<f64> = records
        .iter()
        .filter(|r| r.y_true < 1.0)
        .map(|r| r.width)
        .collect();
    Ok(CoverageSummary {
        n,
        covered,
        coverage: covered as f64 / n as f64,
        avg_width,
        width_below_1: (!low.is_empty()).then(|| forest::mean(&low)),
        unbounded: records.iter().any(|r| r.width.is_infinite()),
    })
}

/// Quantile by linear interpolation between closest ranks (R type 7).
/// `sorted` must be ascending and nonempty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if sorted[lo] == sorted[hi] {
        return sorted[lo];
    }
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl WidthStats {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            count: v.len(),
            min: v[0],
            q1: quantile_type7(&v, 0.25),
            median: quantile_type7(&v, 0.5),
            q3: quantile_type7(&v, 0.75),
            max: v[v.len() - 1],
            mean: forest::mean(&v),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthBin {
    pub label: String,
    pub lower: f64,
    /// `None` for the open top bin.
    pub upper: Option<f64>,
    /// `None` when no record falls in the bin.
    pub stats: Option<WidthStats>,
}

/// Group widths by true swelling into `[0, e0), [e0, e1), ..., [e_last, ∞)`.
pub fn width_boxplot_bins(records: &[PredictionRecord], edges: &[f64]) -> Result<Vec<WidthBin>> {
    if edges.iter().any(|e| !(e.is_finite() && *e > 0.0))
        || edges.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::config(format!(
            "bin edges must be positive and strictly increasing, got {edges:?}"
        )));
    }
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); edges.len() + 1];
    for r in records {
        let bin = edges
            .iter()
            .position(|&e| r.y_true < e)
            .unwrap_or(edges.len());
        groups[bin].push(r.width);
    }
    let fmt = |v: f64| format!("{v}");
    Ok(groups
        .iter()
        .enumerate()
        .map(|(i, widths)| {
            let lower = if i == 0 { 0.0 } else { edges[i - 1] };
            let upper = edges.get(i).copied();
            WidthBin {
                label: match upper {
                    Some(u) => format!("[{},{})", fmt(lower), fmt(u)),
                    None => format!("[{},inf)", fmt(lower)),
                },
                lower,
                upper,
                stats: WidthStats::from_values(widths),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSummary {
    pub name: String,
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCount {
    pub class: IrradiationType,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub names: Vec<String>,
    /// Pearson r; `None` where a column is constant.
    pub values: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdaSummary {
    pub n_samples: usize,
    /// The 17 continuous inputs followed by the target.
    pub columns: Vec<ColumnSummary>,
    pub class_counts: Vec<ClassCount>,
    pub correlation: Correlation,
    pub histogram_bin_width: f64,
    pub target_histogram: Vec<HistogramBin>,
}

/// Pearson correlation with population moments. `None` if either side is
/// constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (forest::mean(a), forest::mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(((cov / n) / ((va / n).sqrt() * (vb / n).sqrt())).clamp(-1.0, 1.0))
}

/// Counts of `values` in bins of `bin_width` aligned to multiples of the width.
pub fn histogram(values: &[f64], bin_width: f64) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = (min / bin_width).floor();
    let n_bins = ((max / bin_width).floor() - start) as usize + 1;
    let mut counts = vec![0usize; n_bins];
    for v in values {
        let i = ((v / bin_width).floor() - start) as usize;
        counts[i.min(n_bins - 1)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lower: (start + i as f64) * bin_width,
            upper: (start + i as f64 + 1.0) * bin_width,
            count,
        })
        .collect()
}

pub fn eda_summary(ds: &Dataset, bin_width: f64) -> Result<EdaSummary> {
    if ds.len() < 2 {
        return Err(Error::Domain(format!(
            "exploratory summary needs at least 2 samples, got {}",
            ds.len()
        )));
    }
    if !(bin_width.is_finite() && bin_width > 0.0) {
        return Err(Error::config("histogram bin width must be > 0"));
    }
    let mut columns: Vec<Vec<f64>> = (0..N_CONTINUOUS)
        .map(|j| {
            ds.samples
                .iter()
                .map(|s| s.features.continuous[j])
                .collect()
        })
        .collect();
    columns.push(ds.targets());
    let names: Vec<String> = CONTINUOUS_NAMES
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once(crate::data::TARGET_NAME.to_string()))
        .collect();

    let summaries = names
        .iter()
        .zip(&columns)
        .map(|(name, col)| ColumnSummary {
            name: name.clone(),
            min: col.iter().copied().fold(f64::INFINITY, f64::min),
            mean: forest::mean(col),
            max: col.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
        .collect();

    let class_counts = IrradiationType::ALL
        .iter()
        .map(|&class| ClassCount {
            class,
            count: ds
                .samples
                .iter()
                .filter(|s| s.features.irradiation == class)
                .count(),
        })
        .collect();

    let k = columns.len();
    let mut values = vec![vec![None; k]; k];
    for i in 0..k {
        for j in i..k {
            let r = if i == j {
                pearson(&columns[i], &columns[i]).map(|_| 1.0)
            } else {
                pearson(&columns[i], &columns[j])
            };
            values[i][j] = r;
            values[j][i] = r;
        }
    }

    Ok(EdaSummary {
        n_samples: ds.len(),
        columns: summaries,
        class_counts,
        correlation: Correlation { names, values },
        histogram_bin_width: bin_width,
        target_histogram: histogram(&ds.targets(), bin_width),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    StandardRf,
    LogRf,
    LogCp,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::StandardRf, Variant::LogRf, Variant::LogCp];

    pub fn name(self) -> &'static str {
        match self {
            Variant::StandardRf => "standard_rf",
            Variant::LogRf => "log_rf",
            Variant::LogCp => "log_cp",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_variant: Variant,
    pub n_test: usize,
    /// `None` when the test targets are constant.
    pub r2: Option<f64>,
    pub mae: f64,
    pub coverage: f64,
    pub avg_width: f64,
    pub width_below_1: Option<f64>,
    pub unbounded: bool,
    pub width_by_bin: Vec<WidthBin>,
    /// `k` in `ŷ ± kσ̂` for the heuristic variants.
    pub interval_multiplier: Option<f64>,
    /// Conformal threshold for the Log CP variant (`None` if unbounded).
    pub q_alpha: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub report: EvalReport,
    pub records: Vec<PredictionRecord>,
}

/// Two-sided standard-normal multiplier: `Φ⁻¹(1 - α/2)`.
pub fn normal_multiplier(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha / 2.0))
}

fn report(
    variant: Variant,
    records: Vec<PredictionRecord>,
    edges: &[f64],
    interval_multiplier: Option<f64>,
    q_alpha: Option<f64>,
) -> Result<VariantResult> {
    let y: Vec<f64> = records.iter().map(|r| r.y_true).collect();
    let p: Vec<f64> = records.iter().map(|r| r.y_point).collect();
    let cov = coverage_and_width(&records)?;
    Ok(VariantResult {
        report: EvalReport {
            model_variant: variant,
            n_test: records.len(),
            r2: r_squared(&y, &p).ok(),
            mae: mae(&y, &p)?,
            coverage: cov.coverage,
            avg_width: cov.avg_width,
            width_below_1: cov.width_below_1,
            unbounded: cov.unbounded,
            width_by_bin: width_boxplot_bins(&records, edges)?,
            interval_multiplier,
            q_alpha,
        },
        records,
    })
}

/// Fitted pieces needed to score the three variants on one test set.
pub struct VariantModels<'a> {
    pub raw: &'a ForestModel,
    pub log: &'a ForestModel,
    pub calibrator: &'a ConformalCalibrator,
    pub transform: TargetTransform,
}

/// Evaluate all three variants on `test` rows of `prepared`.
///
/// Standard RF: `ŷ ± kσ̂` on the raw scale. Log RF: the same band in log
/// space with inverted endpoints. Log CP: the conformal interval. `k` is the
/// normal quantile matching the calibrator's nominal level.
pub fn evaluate_variants(
    models: &VariantModels<'_>,
    prepared: &Prepared,
    test: &[usize],
    edges: &[f64],
) -> Result<[VariantResult; 3]> {
    if models.raw.target_space != TargetSpace::Raw || models.log.target_space != TargetSpace::Log {
        return Err(Error::state(
            "variant comparison needs one raw-space and one log-space forest",
        ));
    }
    if test.is_empty() {
        return Err(Error::state("test subset is empty"));
    }
    let t = models.transform;
    let alpha = models.calibrator.alpha();
    let k = normal_multiplier(alpha)?;

    let mut standard = Vec::with_capacity(test.len());
    let mut log_rf = Vec::with_capacity(test.len());
    let mut log_cp = Vec::with_capacity(test.len());
    for &i in test {
        let x = prepared.x.row(i);
        let y = prepared.y[i];

        let (m, s) = models.raw.predict_mean_std(x);
        let (lo, hi) = forest::heuristic_band(m, s, k)?;
        let iv = PredictionInterval {
            point: m,
            lower: lo,
            upper: hi,
            alpha,
            space: conformal::IntervalSpace::Physical,
        };
        standard.push(PredictionRecord::new(i, y, &iv));

        let (m_log, s_log) = models.log.predict_mean_std(x);
        let (lo, hi) = forest::heuristic_band(m_log, s_log, k)?;
        let iv = PredictionInterval {
            point: t.inverse(m_log),
            lower: t.inverse(lo),
            upper: t.inverse(hi),
            alpha,
            space: conformal::IntervalSpace::Physical,
        };
        log_rf.push(PredictionRecord::new(i, y, &iv));

        let iv = conformal::interval_physical(&models.calibrator.interval_log(m_log), &t);
        log_cp.push(PredictionRecord::new(i, y, &iv));
    }
    Ok([
        report(Variant::StandardRf, standard, edges, Some(k), None)?,
        report(Variant::LogRf, log_rf, edges, Some(k), None)?,
        report(
            Variant::LogCp,
            log_cp,
            edges,
            None,
            models.calibrator.q_alpha(),
        )?,
    ])
}

/// Fit both forests with the same seed and hyperparameters, calibrate the
/// log forest, and evaluate the three variants on the test rows.
pub fn compare_variants(
    prepared: &Prepared,
    split: &SplitIndices,
    config: &PipelineConfig,
) -> Result<[VariantResult; 3]> {
    config.validate()?;
    if split.calibration.is_empty() {
        return Err(Error::state("calibration subset is empty"));
    }
    let raw = pipeline::fit_on_split(prepared, split, config, TargetSpace::Raw)?;
    let log = pipeline::fit_on_split(prepared, split, config, TargetSpace::Log)?;
    let cal = pipeline::calibrate_on_split(&log, prepared, split, config, config.alpha)?;
    let models = VariantModels {
        raw: &raw,
        log: &log,
        calibrator: &cal,
        transform: config.transform()?,
    };
    evaluate_variants(&models, prepared, &split.test, &config.width_bin_edges)
}

/// Coverage of `calibrator` intervals over the rows of `x`, checked on the
/// physical scale.
pub fn conformal_coverage(
    model: &ForestModel,
    calibrator: &ConformalCalibrator,
    t: &TargetTransform,
    x: &Matrix,
    y: &[f64],
) -> Result<f64> {
    let mut covered = 0usize;
    for (row, &truth) in x.rows().zip(y) {
        if conformal::predict_interval(model, calibrator, t, row)?.contains(truth) {
            covered += 1;
        }
    }
    Ok(covered as f64 / y.len() as f64)
}
