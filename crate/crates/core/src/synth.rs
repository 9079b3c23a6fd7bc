//! Synthetic swelling-like data with a known noise model, and Monte-Carlo
//! coverage trials built on it.
//!
//! Each sample gets an incubation dose `d ~ N(d0, sd)` truncated at zero and
//! a clean response `y0 = max(0, rate · (dose - d))`. The observation is
//! `y = (y0 + 1)·exp(ε) - 1` with `ε ~ N(0, noise_sd_log)`, clipped at zero.
//! The noise is multiplicative in `y + 1`, so `ln(y + 1)` has homoscedastic
//! residuals while the physical-scale spread grows with `y0`. Composition,
//! temperature, gas and irradiation class are drawn independently and carry
//! no signal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    self, Dataset, FeatureSchema, Features, IrradiationType, Provenance, Sample, N_CONTINUOUS,
};
use crate::error::{Error, Result};
use crate::eval::{self, Variant};
use crate::pipeline::{PipelineConfig, Prepared};
use crate::rng::{self, Purpose};

/// Element weight-percent ranges, in schema order (B through Mo).
pub const COMPOSITION_RANGES: [(f64, f64); 14] = [
    (0.0, 0.010),
    (0.0, 0.110),
    (0.0, 0.150),
    (0.0, 1.120),
    (0.0, 1.270),
    (0.0, 0.220),
    (0.0, 0.030),
    (0.0, 1.110),
    (14.88, 24.70),
    (0.0, 1.94),
    (34.28, 72.40),
    (8.40, 43.00),
    (0.0, 0.540),
    (0.0, 3.08),
];

pub const GAS_RANGE: (f64, f64) = (0.0, 10.0);

/// Test doses drawn from a range disjoint from the training/calibration doses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateShift {
    pub base_dose_range: (f64, f64),
    pub test_dose_range: (f64, f64),
}

impl Default for CovariateShift {
    fn default() -> Self {
        Self {
            base_dose_range: (0.5, 120.0),
            test_dose_range: (160.0, 228.76),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// dpa
    pub incubation_dose_mean: f64,
    pub incubation_dose_sd: f64,
    /// %/dpa
    pub steady_rate: f64,
    pub noise_sd_log: f64,
    pub dose_range: (f64, f64),
    pub temperature_range: (f64, f64),
    pub shift: Option<CovariateShift>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            n_samples: 310,
            seed: 0,
            incubation_dose_mean: 20.0,
            incubation_dose_sd: 8.0,
            steady_rate: 0.15,
            noise_sd_log: 0.4,
            dose_range: (0.5, 228.76),
            temperature_range: (150.0, 1023.4),
            shift: None,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{name} must satisfy lo <= hi, got ({lo}, {hi})"
        )))
    }
}

impl GeneratorConfig {
    pub fn from_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("incubation_dose_mean", self.incubation_dose_mean),
            ("incubation_dose_sd", self.incubation_dose_sd),
            ("steady_rate", self.steady_rate),
            ("noise_sd_log", self.noise_sd_log),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        check_range("dose_range", self.dose_range)?;
        check_range("temperature_range", self.temperature_range)?;
        if self.dose_range.0 < 0.0 {
            return Err(Error::config("doses must be nonnegative"));
        }
        if let Some(s) = &self.shift {
            check_range("shift.base_dose_range", s.base_dose_range)?;
            check_range("shift.test_dose_range", s.test_dose_range)?;
            let (a, b) = (s.base_dose_range, s.test_dose_range);
            if !(a.1 < b.0 || b.1 < a.0) {
                return Err(Error::config(
                    "shifted test dose range must be disjoint from the base range",
                ));
            }
        }
        Ok(())
    }
}

/// A generated sample with its latent quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratedSample {
    pub sample: Sample,
    pub incubation_dose: f64,
    pub clean_swelling: f64,
    pub log_noise: f64,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn draw_sample(
    cfg: &GeneratorConfig,
    dose_range: (f64, f64),
    incubation: &Normal<f64>,
    noise: &Normal<f64>,
    rng: &mut ChaCha8Rng,
) -> GeneratedSample {
    let mut continuous = [0.0; N_CONTINUOUS];
    continuous[0] = uniform(rng, dose_range);
    continuous[1] = uniform(rng, cfg.temperature_range);
    continuous[2] = uniform(rng, GAS_RANGE);
    for (slot, &range) in continuous[3..].iter_mut().zip(&COMPOSITION_RANGES) {
        *slot = uniform(rng, range);
    }
    let irradiation = IrradiationType::ALL[rng::index_below(rng, IrradiationType::ALL.len())];

    // Truncation at zero by rejection; give up after a bounded number of draws.
    let mut d = incubation.sample(rng);
    for _ in 0..1000 {
        if d >= 0.0 {
            break;
        }
        d = incubation.sample(rng);
    }
    let d = d.max(0.0);

    let dose = continuous[0];
    let clean = (cfg.steady_rate * (dose - d)).max(0.0);
    let eps = noise.sample(rng);
    let observed = ((clean + 1.0) * eps.exp() - 1.0).max(0.0);
    GeneratedSample {
        sample: Sample {
            features: Features {
                continuous,
                irradiation,
            },
            target: observed,
        },
        incubation_dose: d,
        clean_swelling: clean,
        log_noise: eps,
    }
}

fn generate_samples(
    cfg: &GeneratorConfig,
    n: usize,
    dose_range: (f64, f64),
    mut rng: ChaCha8Rng,
) -> Result<Vec<GeneratedSample>> {
    cfg.validate()?;
    let incubation = Normal::new(cfg.incubation_dose_mean, cfg.incubation_dose_sd)
        .map_err(|e| Error::config(format!("incubation distribution: {e}")))?;
    let noise = Normal::new(0.0, cfg.noise_sd_log)
        .map_err(|e| Error::config(format!("noise distribution: {e}")))?;
    Ok((0..n)
        .map(|_| draw_sample(cfg, dose_range, &incubation, &noise, &mut rng))
        .collect())
}

fn base_dose_range(cfg: &GeneratorConfig) -> (f64, f64) {
    cfg.shift.map_or(cfg.dose_range, |s| s.base_dose_range)
}

/// Samples with latent values, from the base dose range.
pub fn generate_with_truth(cfg: &GeneratorConfig) -> Result<Vec<GeneratedSample>> {
    generate_samples(
        cfg,
        cfg.n_samples,
        base_dose_range(cfg),
        rng::substream(cfg.seed, Purpose::Generator, 0),
    )
}

fn to_dataset(samples: Vec<GeneratedSample>, source: String) -> Dataset {
    let samples: Vec<Sample> = samples.into_iter().map(|g| g.sample).collect();
    Dataset {
        schema: FeatureSchema::default(),
        provenance: Provenance {
            source,
            rows_read: samples.len(),
            filters: Vec::new(),
        },
        samples,
    }
}

/// Schema-conformant synthetic dataset.
pub fn generate(cfg: &GeneratorConfig) -> Result<Dataset> {
    Ok(to_dataset(
        generate_with_truth(cfg)?,
        format!("synthetic(seed={})", cfg.seed),
    ))
}

/// `n` samples from the shifted test dose range.
pub fn generate_shifted(cfg: &GeneratorConfig, n: usize) -> Result<Dataset> {
    let shift = cfg
        .shift
        .ok_or_else(|| Error::config("generator has no covariate shift configured"))?;
    let samples = generate_samples(
        cfg,
        n,
        shift.test_dose_range,
        rng::substream(cfg.seed, Purpose::Shift, 0),
    )?;
    Ok(to_dataset(
        samples,
        format!("synthetic-shifted(seed={})", cfg.seed),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantCoverage {
    pub variant: Variant,
    pub coverages: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    /// Mean of per-repetition average widths; infinite if any is unbounded.
    pub mean_width: f64,
}

impl VariantCoverage {
    fn new(variant: Variant, coverages: Vec<f64>, widths: &[f64]) -> Self {
        let (mean, std_error) = mean_and_se(&coverages);
        Self {
            variant,
            coverages,
            mean,
            std_error,
            mean_width: widths.iter().sum::<f64>() / widths.len() as f64,
        }
    }
}

/// Mean and standard error (sample SD over `sqrt(R)`); SE is 0 for `R = 1`.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Acceptance band for mean coverage: `[1-α - 3·SE, 1-α + 1/(n_cal+1) + 3·SE]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuaranteeBand {
    pub nominal: f64,
    pub lower: f64,
    pub upper: f64,
    pub mean: f64,
    pub within: bool,
}

impl GuaranteeBand {
    pub fn new(alpha: f64, n_cal: usize, mean: f64, se: f64) -> Self {
        let nominal = 1.0 - alpha;
        let lower = nominal - 3.0 * se;
        let upper = nominal + 1.0 / (n_cal as f64 + 1.0) + 3.0 * se;
        Self {
            nominal,
            lower,
            upper,
            mean,
            within: lower <= mean && mean <= upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTrialReport {
    pub alpha: f64,
    pub repetitions: usize,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub shift: Option<CovariateShift>,
    pub generator: GeneratorConfig,
    pub config: PipelineConfig,
    pub variants: Vec<VariantCoverage>,
    /// Band for the Log CP mean coverage.
    pub guarantee: GuaranteeBand,
    /// Share of repetitions where Standard RF coverage is strictly below Log CP.
    pub standard_below_log_cp: f64,
    /// `1 - α` minus the Log CP mean coverage.
    pub coverage_shortfall: f64,
}

impl CoverageTrialReport {
    pub fn variant(&self, v: Variant) -> &VariantCoverage {
        self.variants
            .iter()
            .find(|c| c.variant == v)
            .expect("all variants are reported")
    }
}

struct Repetition {
    coverage: [f64; 3],
    width: [f64; 3],
}

fn run_repetition(
    gen: &GeneratorConfig,
    config: &PipelineConfig,
    shifted: bool,
    r: usize,
) -> Result<Repetition> {
    let seed = rng::child_seed(gen.seed, Purpose::Repetition, r as u64);
    let gen_r = GeneratorConfig {
        seed,
        ..gen.clone()
    };
    let config_r = PipelineConfig {
        seed,
        ..config.clone()
    };
    let mut ds = generate(&gen_r)?;
    let mut split = data::split(ds.len(), &config_r.fractions(), seed)?;
    if shifted {
        // Replace the test rows with draws from the disjoint dose range.
        let extra = generate_shifted(&gen_r, split.test.len())?;
        let start = ds.len();
        ds.samples.extend(extra.samples);
        split.test = (start..ds.len()).collect();
    }
    let prepared = Prepared::new(ds);
    let results = eval::compare_variants(&prepared, &split, &config_r)?;
    Ok(Repetition {
        coverage: results.each_ref().map(|v| v.report.coverage),
        width: results.each_ref().map(|v| v.report.avg_width),
    })
}

/// Repeat generate → split → fit → calibrate → evaluate `repetitions` times.
///
/// Repetition `r` uses seeds derived from `(gen.seed, r)` for data, split and
/// forests. With `shifted`, test rows are drawn from the generator's shifted
/// dose range (the default shift when none is configured).
pub fn coverage_trial(
    gen: &GeneratorConfig,
    config: &PipelineConfig,
    alpha: f64,
    repetitions: usize,
    shifted: bool,
) -> Result<CoverageTrialReport> {
    if repetitions == 0 {
        return Err(Error::config("need at least one repetition"));
    }
    let mut gen = gen.clone();
    if shifted && gen.shift.is_none() {
        gen.shift = Some(CovariateShift::default());
    }
    if !shifted {
        gen.shift = None;
    }
    gen.validate()?;
    let config = PipelineConfig {
        alpha,
        ..config.clone()
    };
    config.validate()?;
    let (n_train, n_cal, n_test) = config.fractions().sizes(gen.n_samples);
    if n_train == 0 || n_cal == 0 || n_test == 0 {
        return Err(Error::config(format!(
            "{} samples per repetition leave an empty subset ({n_train}, {n_cal}, {n_test})",
            gen.n_samples
        )));
    }

    let reps: Vec<Repetition> = (0..repetitions)
        .into_par_iter()
        .map(|r| run_repetition(&gen, &config, shifted, r))
        .collect::<Result<_>>()?;

    let variants: Vec<VariantCoverage> = Variant::ALL
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let cov: Vec<f64> = reps.iter().map(|r| r.coverage[i]).collect();
            let widths: Vec<f64> = reps.iter().map(|r| r.width[i]).collect();
            VariantCoverage::new(v, cov, &widths)
        })
        .collect();
    let cp = &variants[2];
    let guarantee = GuaranteeBand::new(alpha, n_cal, cp.mean, cp.std_error);
    let below = reps
        .iter()
        .filter(|r| r.coverage[0] < r.coverage[2])
        .count() as f64
        / repetitions as f64;

    Ok(CoverageTrialReport {
        alpha,
        repetitions,
        n_train,
        n_cal,
        n_test,
        shift: gen.shift,
        coverage_shortfall: (1.0 - alpha) - cp.mean,
        generator: gen,
        config,
        guarantee,
        standard_below_log_cp: below,
        variants,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

    #[test]
    fn below_incubation_is_exactly_zero() {
        let cfg = GeneratorConfig {
            n_samples: 50,
            noise_sd_log: 0.0,
            incubation_dose_mean: 20.0,
            incubation_dose_sd: 1e-6,
            dose_range: (0.5, 10.0),
            ..Default::default()
        };
        let ds = generate(&cfg).unwrap();
        assert!(ds.samples.iter().all(|s| s.target == 0.0));
    }

    #[test]
    fn deterministic_ramp() {
        let cfg = GeneratorConfig {
            n_samples: 5,
            noise_sd_log: 0.0,
            incubation_dose_sd: 0.0,
            incubation_dose_mean: 20.0,
            steady_rate: 0.5,
            dose_range: (30.0, 30.0),
            ..Default::default()
        };
        let ds = generate(&cfg).unwrap();
        assert!(ds.samples.iter().all(|s| s.target == 5.0));
    }

    #[test]
    fn generator_is_deterministic_and_schema_conformant() {
        let cfg = GeneratorConfig {
            n_samples: 40,
            seed: 12,
            ..Default::default()
        };
        let a = generate(&cfg).unwrap();
        assert_eq!(a, generate(&cfg).unwrap());
        assert_ne!(
            a.samples,
            generate(&GeneratorConfig {
                seed: 13,
                ..cfg.clone()
            })
            .unwrap()
            .samples
        );
        for s in &a.samples {
            assert!(s.target >= 0.0);
            assert!(s.features.continuous.iter().all(|v| v.is_finite()));
            for (v, (lo, hi)) in s.features.continuous[3..].iter().zip(COMPOSITION_RANGES) {
                assert!(lo <= *v && *v <= hi);
            }
        }
        let mut buf = Vec::new();
        data::write_csv(&a, &mut buf).unwrap();
        let back = data::read_csv(buf.as_slice(), &FeatureSchema::default(), "synth").unwrap();
        assert_eq!(back.samples, a.samples);
    }

    #[test]
    fn noise_free_targets_are_a_function_of_dose_and_incubation() {
        let cfg = GeneratorConfig {
            n_samples: 100,
            noise_sd_log: 0.0,
            ..Default::default()
        };
        for g in generate_with_truth(&cfg).unwrap() {
            let expected =
                (cfg.steady_rate * (g.sample.features.dose() - g.incubation_dose)).max(0.0);
            assert!((g.sample.target - expected).abs() <= 1e-12 * (1.0 + expected));
        }
    }

    /// Kolmogorov-Smirnov distance against N(0, sd), critical value at 1%.
    fn ks_normal(values: &mut [f64], sd: f64) -> (f64, f64) {
        values.sort_by(f64::total_cmp);
        let n = values.len() as f64;
        let dist = StatNormal::new(0.0, sd).unwrap();
        let d = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let f = dist.cdf(v);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        (d, 1.628 / n.sqrt())
    }

    #[test]
    fn log_residuals_are_gaussian_where_unclipped() {
        let cfg = GeneratorConfig {
            n_samples: 2000,
            seed: 4,
            ..Default::default()
        };
        let mut residuals: Vec<f64> = generate_with_truth(&cfg)
            .unwrap()
            .into_iter()
            .filter(|g| g.clean_swelling > 0.0 && g.sample.target > 0.0)
            .map(|g| (g.sample.target + 1.0).ln() - (g.clean_swelling + 1.0).ln())
            .collect();
        assert!(residuals.len() > 1000);
        let (d, crit) = ks_normal(&mut residuals, cfg.noise_sd_log);
        assert!(d < crit, "KS distance {d} >= {crit}");
    }

    #[test]
    fn physical_spread_grows_with_clean_swelling() {
        let cfg = GeneratorConfig {
            n_samples: 4000,
            seed: 8,
            ..Default::default()
        };
        let gen = generate_with_truth(&cfg).unwrap();
        let spread = |lo: f64, hi: f64| {
            let d: Vec<f64> = gen
                .iter()
                .filter(|g| g.clean_swelling >= lo && g.clean_swelling < hi)
                .map(|g| g.sample.target - g.clean_swelling)
                .collect();
            crate::forest::population_std(&d)
        };
        assert!(spread(1.0, 5.0) < spread(5.0, 15.0));
        assert!(spread(5.0, 15.0) < spread(15.0, 40.0));
    }

    #[test]
    fn shifted_doses_come_from_the_test_range() {
        let cfg = GeneratorConfig {
            shift: Some(CovariateShift::default()),
            ..Default::default()
        };
        let base = generate(&cfg).unwrap();
        let shifted = generate_shifted(&cfg, 31).unwrap();
        assert!(base.samples.iter().all(|s| s.features.dose() <= 120.0));
        assert!(shifted.samples.iter().all(|s| s.features.dose() >= 160.0));
        assert_eq!(shifted.len(), 31);
    }

    #[test]
    fn invalid_generator_configs() {
        let bad = [
            GeneratorConfig {
                noise_sd_log: -0.1,
                ..Default::default()
            },
            GeneratorConfig {
                dose_range: (5.0, 1.0),
                ..Default::default()
            },
            GeneratorConfig {
                shift: Some(CovariateShift {
                    base_dose_range: (0.0, 100.0),
                    test_dose_range: (50.0, 150.0),
                }),
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(generate(&c).is_err());
        }
    }

    #[test]
    fn small_trial_runs_and_reports_every_variant() {
        let gen = GeneratorConfig {
            n_samples: 60,
            ..Default::default()
        };
        let config = PipelineConfig {
            n_trees: 10,
            ..Default::default()
        };
        let report = coverage_trial(&gen, &config, 0.2, 3, false).unwrap();
        assert_eq!(report.variants.len(), 3);
        assert_eq!((report.n_train, report.n_cal, report.n_test), (48, 6, 6));
        for v in &report.variants {
            assert_eq!(v.coverages.len(), 3);
            assert!(v.coverages.iter().all(|c| (0.0..=1.0).contains(c)));
        }
        let again = coverage_trial(&gen, &config, 0.2, 3, false).unwrap();
        assert_eq!(report, again);
    }

    #[test]
    fn single_repetition_has_zero_standard_error() {
        let gen = GeneratorConfig {
            n_samples: 40,
            ..Default::default()
        };
        let config = PipelineConfig {
            n_trees: 5,
            ..Default::default()
        };
        let report = coverage_trial(&gen, &config, 0.2, 1, false).unwrap();
        assert_eq!(report.variant(Variant::LogCp).std_error, 0.0);
        assert!(coverage_trial(&gen, &config, 0.2, 0, false).is_err());
    }

    #[test]
    fn extreme_alpha_uses_the_smallest_score() {
        let gen = GeneratorConfig {
            n_samples: 310,
            ..Default::default()
        };
        let config = PipelineConfig {
            n_trees: 10,
            ..Default::default()
        };
        let report = coverage_trial(&gen, &config, 0.99, 4, false).unwrap();
        assert_eq!(report.n_cal, 31);
        assert_eq!(crate::conformal::conformal_rank(31, 0.99), 1);
        assert!(report.variant(Variant::LogCp).mean < 0.2);
    }
}
