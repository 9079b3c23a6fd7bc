//! The `swellcp` command-line frontend.
//!
//! Every command that writes a model or report also writes a run manifest
//! next to it (`<output>.manifest.json`) echoing the resolved configuration,
//! dataset provenance and the invocation of each step. Only the `timing`
//! fields of a manifest vary between identical runs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::conformal;
use crate::data::{self, FeatureSchema, Provenance};
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, Variant, VariantModels};
use crate::forest::TargetSpace;
use crate::model::{self, ModelFile};
use crate::pipeline::{self, PipelineConfig, Prepared};
use crate::synth::{self, GeneratorConfig};

#[derive(Debug, Parser)]
#[command(
    name = "swellcp",
    version,
    about = "Conformal prediction intervals for void swelling"
)]
pub struct Cli {
    /// Worker threads for tree fitting and simulation repetitions [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

/// Overrides applied on top of the JSON config.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct ConfigArgs {
    /// JSON config with flat keys; missing keys take defaults
    #[arg(long, env = "SWELLCP_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_trees: Option<usize>,
    #[arg(long)]
    pub max_features: Option<usize>,
    #[arg(long)]
    pub min_samples_leaf: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    /// Offset c in ln(y + c)
    #[arg(long)]
    pub offset: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.n_trees {
            c.n_trees = v;
        }
        if let Some(v) = self.max_features {
            c.max_features = v;
        }
        if let Some(v) = self.min_samples_leaf {
            c.min_samples_leaf = v;
        }
        if let Some(v) = self.max_depth {
            c.max_depth = Some(v);
        }
        if let Some(v) = self.offset {
            c.offset = v;
        }
        Ok(c)
    }
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Load, filter, encode and split a dataset, then fit the forest on the training rows
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
        /// JSON object mapping canonical column names to header names
        #[arg(long)]
        column_map: Option<PathBuf>,
        /// Fit on raw swelling instead of ln(y + offset)
        #[arg(long)]
        no_log: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score the calibration rows and embed the conformal threshold in the model
    Calibrate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Miscoverage level [default: the model's configured alpha]
        #[arg(long)]
        alpha: Option<f64>,
        /// Write the calibrated model here instead of updating it in place
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prediction intervals for rows of a CSV without a target column
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output CSV [default: stdout]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Show negative lower bounds as 0 (display only)
        #[arg(long)]
        clamp_lower_zero: bool,
    },
    /// Compare Standard RF, Log RF and Log CP on the held-out test rows
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "eval")]
        out_dir: PathBuf,
        /// Recalibrate at this alpha [default: the calibrated alpha]
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Summary statistics, target histogram and correlation matrix
    Eda {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "eda")]
        out_dir: PathBuf,
        #[arg(long)]
        column_map: Option<PathBuf>,
        /// Histogram bin width for the target [default: from config]
        #[arg(long)]
        bin_width: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Monte-Carlo coverage trial on synthetic data
    Simulate {
        /// Generator parameters as JSON [default: built-in]
        #[arg(long)]
        gen_config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Samples per repetition [default: from generator config]
        #[arg(long)]
        n_samples: Option<usize>,
        /// Draw test doses from a range disjoint from the training/calibration doses
        #[arg(long)]
        shift: bool,
        #[arg(long, default_value = "coverage_trial.json")]
        out: PathBuf,
        /// Also write one synthetic dataset drawn with the generator seed
        #[arg(long)]
        emit_csv: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub command: String,
    pub invocation: serde_json::Value,
    pub outputs: Vec<String>,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub config: PipelineConfig,
    pub schema: Option<FeatureSchema>,
    pub dataset: Option<Provenance>,
    pub generator: Option<GeneratorConfig>,
    pub model_path: Option<String>,
    /// `[train, calibration, test]`
    pub split_sizes: Option<[usize; 3]>,
    /// `k` of the heuristic `ŷ ± kσ̂` bands used by the last comparison.
    pub interval_multiplier: Option<f64>,
    pub steps: Vec<Step>,
}

impl RunManifest {
    fn new(config: PipelineConfig) -> Self {
        Self {
            artifact_version: format!("swellcp {}", env!("CARGO_PKG_VERSION")),
            config,
            schema: None,
            dataset: None,
            generator: None,
            model_path: None,
            split_sizes: None,
            interval_multiplier: None,
            steps: Vec::new(),
        }
    }

    fn for_model(m: &ModelFile, path: &Path) -> Self {
        let s = &m.split;
        Self {
            schema: Some(m.schema.clone()),
            dataset: Some(m.dataset.clone()),
            model_path: Some(path.display().to_string()),
            split_sizes: Some([s.train.len(), s.calibration.len(), s.test.len()]),
            ..Self::new(m.config.clone())
        }
    }

    /// Existing manifest for `path`, refreshed from the model, or a new one.
    fn load_or_new(m: &ModelFile, path: &Path) -> Self {
        let fresh = Self::for_model(m, path);
        let steps = std::fs::read_to_string(manifest_path(path))
            .ok()
            .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
            .map(|old| old.steps)
            .unwrap_or_default();
        Self { steps, ..fresh }
    }

    fn save_for(&self, output: &Path) -> Result<()> {
        model::write_json_atomic(&manifest_path(output), self)
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

struct Clock {
    started: SystemTime,
    instant: Instant,
}

impl Clock {
    fn start() -> Self {
        Self {
            started: SystemTime::now(),
            instant: Instant::now(),
        }
    }

    fn step(&self, cmd: &Command, outputs: &[&Path]) -> Step {
        let invocation = serde_json::to_value(cmd).unwrap_or(serde_json::Value::Null);
        let command = match &invocation {
            serde_json::Value::Object(m) => m.keys().next().cloned().unwrap_or_default(),
            _ => String::new(),
        };
        Step {
            command,
            invocation,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            timing: Timing {
                started_unix_ms: self
                    .started
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_millis() as u64)
                    .unwrap_or(0),
                elapsed_ms: self.instant.elapsed().as_secs_f64() * 1e3,
            },
        }
    }
}

fn schema_from(column_map: Option<&Path>) -> Result<FeatureSchema> {
    match column_map {
        Some(p) => FeatureSchema::from_column_map_file(p),
        None => Ok(FeatureSchema::default()),
    }
}

/// Load `path` with the model's schema and check it is the training dataset.
fn load_for_model(m: &ModelFile, path: &Path) -> Result<Prepared> {
    let prepared = Prepared::new(data::load_csv(path, &m.schema)?);
    if prepared.dataset.len() != m.n_samples {
        return Err(Error::state(format!(
            "{} has {} usable rows but the model was split over {}",
            path.display(),
            prepared.dataset.len(),
            m.n_samples
        )));
    }
    Ok(prepared)
}

fn csv_bytes<F>(fill: F) -> Result<Vec<u8>>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        fill(&mut w)?;
        w.flush().map_err(csv::Error::from)?;
    }
    Ok(buf)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parse arguments and run. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::config("--threads must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    pool.install(|| execute(&cli.command))
}

fn execute(cmd: &Command) -> Result<()> {
    let clock = Clock::start();
    match cmd {
        Command::Train {
            data,
            out,
            column_map,
            no_log,
            cfg,
        } => {
            let mut config = cfg.resolve()?;
            if *no_log {
                config.log_target = false;
            }
            config.validate()?;
            let schema = schema_from(column_map.as_deref())?;
            let prepared = Prepared::new(data::load_csv(data, &schema)?);
            let split = data::split(prepared.dataset.len(), &config.fractions(), config.seed)?;
            let forest = pipeline::fit_on_split(&prepared, &split, &config, config.target_space())?;
            let m = ModelFile::new(
                config.clone(),
                config.transform()?,
                schema,
                prepared.dataset.provenance.clone(),
                prepared.dataset.len(),
                split,
                forest,
            );
            m.save(out)?;
            eprintln!(
                "trained {} trees on {} rows (calibration {}, test {}) -> {}",
                config.n_trees,
                m.split.train.len(),
                m.split.calibration.len(),
                m.split.test.len(),
                out.display()
            );
            let mut manifest = RunManifest::for_model(&m, out);
            manifest.steps.push(clock.step(cmd, &[out]));
            manifest.save_for(out)
        }
        Command::Calibrate {
            model,
            data,
            alpha,
            out,
        } => {
            let mut m = ModelFile::load(model)?;
            let alpha = alpha.unwrap_or(m.config.alpha);
            let prepared = load_for_model(&m, data)?;
            let cal =
                pipeline::calibrate_on_split(&m.forest, &prepared, &m.split, &m.config, alpha)?;
            if cal.is_unbounded() {
                eprintln!(
                    "warning: rank {} exceeds the {} calibration scores; intervals are unbounded",
                    cal.rank(),
                    cal.n_cal()
                );
            }
            eprintln!(
                "alpha {alpha}: rank {} of {} scores, q = {}",
                cal.rank(),
                cal.n_cal(),
                cal.q()
            );
            m.config.alpha = alpha;
            m.calibrator = Some(cal);
            let target = out.as_deref().unwrap_or(model);
            m.save(target)?;
            let mut manifest = RunManifest::load_or_new(&m, target);
            manifest.steps.push(clock.step(cmd, &[target]));
            manifest.save_for(target)
        }
        Command::Predict {
            model,
            input,
            out,
            clamp_lower_zero,
        } => {
            let m = ModelFile::load(model)?;
            let cal = m.calibrator()?;
            let rows = data::load_features_csv(input, &m.schema)?;
            let log_space = m.forest.target_space == TargetSpace::Log;
            let bytes = csv_bytes(|w| {
                w.write_record([
                    "row",
                    "point",
                    "lower",
                    "upper",
                    "log_point",
                    "log_lower",
                    "log_upper",
                    "unbounded",
                ])?;
                for (i, f) in rows.iter().enumerate() {
                    let x = f.encode();
                    let pred = m.forest.predict_mean(&x);
                    let model_iv = cal.interval_log(pred);
                    let mut iv = if log_space {
                        conformal::interval_physical(&model_iv, &m.transform)
                    } else {
                        model_iv
                    };
                    if *clamp_lower_zero {
                        iv.lower = iv.lower.max(0.0);
                    }
                    let log_cols: [String; 3] = if log_space {
                        [model_iv.point, model_iv.lower, model_iv.upper].map(|v| v.to_string())
                    } else {
                        Default::default()
                    };
                    w.write_record([
                        i.to_string(),
                        iv.point.to_string(),
                        iv.lower.to_string(),
                        iv.upper.to_string(),
                        log_cols[0].clone(),
                        log_cols[1].clone(),
                        log_cols[2].clone(),
                        iv.is_unbounded().to_string(),
                    ])?;
                }
                Ok(())
            })?;
            match out {
                Some(p) => {
                    model::write_atomic(p, &bytes)?;
                    let mut manifest = RunManifest::load_or_new(&m, model);
                    manifest.steps.push(clock.step(cmd, &[p]));
                    manifest.save_for(model)
                }
                None => std::io::stdout()
                    .write_all(&bytes)
                    .map_err(|e| Error::io("<stdout>", e)),
            }
        }
        Command::Evaluate {
            model,
            data,
            out_dir,
            alpha,
        } => {
            let m = ModelFile::load(model)?;
            let stored = m.calibrator()?;
            let prepared = load_for_model(&m, data)?;
            let alpha = alpha.unwrap_or(stored.alpha());
            let config = PipelineConfig {
                alpha,
                ..m.config.clone()
            };
            config.validate()?;
            // Reuse the stored forest for its own space and refit the other one
            // with the same seed and hyperparameters.
            let (raw, log) = match m.forest.target_space {
                TargetSpace::Log => (
                    pipeline::fit_on_split(&prepared, &m.split, &config, TargetSpace::Raw)?,
                    m.forest.clone(),
                ),
                TargetSpace::Raw => (
                    m.forest.clone(),
                    pipeline::fit_on_split(&prepared, &m.split, &config, TargetSpace::Log)?,
                ),
            };
            let calibrator = if m.forest.target_space == TargetSpace::Log {
                stored.with_alpha(alpha)?
            } else {
                pipeline::calibrate_on_split(&log, &prepared, &m.split, &config, alpha)?
            };
            let models = VariantModels {
                raw: &raw,
                log: &log,
                calibrator: &calibrator,
                transform: m.transform,
            };
            let results = eval::evaluate_variants(
                &models,
                &prepared,
                &m.split.test,
                &config.width_bin_edges,
            )?;
            let report = EvaluationReport {
                alpha,
                seed: config.seed,
                n_train: m.split.train.len(),
                n_cal: m.split.calibration.len(),
                n_test: m.split.test.len(),
                variants: results.iter().map(|r| r.report.clone()).collect(),
            };
            create_dir(out_dir)?;
            let report_path = out_dir.join("report.json");
            let pred_path = out_dir.join("predictions.csv");
            let bins_path = out_dir.join("width_bins.csv");
            model::write_json_atomic(&report_path, &report)?;
            let preds = csv_bytes(|w| {
                w.write_record([
                    "variant", "row", "y_true", "point", "lower", "upper", "covered", "width",
                ])?;
                for r in &results {
                    for p in &r.records {
                        w.write_record([
                            r.report.model_variant.name().to_string(),
                            p.index.to_string(),
                            p.y_true.to_string(),
                            p.y_point.to_string(),
                            p.lower.to_string(),
                            p.upper.to_string(),
                            p.covered.to_string(),
                            p.width.to_string(),
                        ])?;
                    }
                }
                Ok(())
            })?;
            model::write_atomic(&pred_path, &preds)?;
            let bins = csv_bytes(|w| {
                w.write_record([
                    "variant", "bin", "count", "min", "q1", "median", "q3", "max", "mean",
                ])?;
                for r in &results {
                    for b in &r.report.width_by_bin {
                        let s = b.stats.as_ref();
                        w.write_record([
                            r.report.model_variant.name().to_string(),
                            b.label.clone(),
                            s.map_or(0, |s| s.count).to_string(),
                            fmt_opt(s.map(|s| s.min)),
                            fmt_opt(s.map(|s| s.q1)),
                            fmt_opt(s.map(|s| s.median)),
                            fmt_opt(s.map(|s| s.q3)),
                            fmt_opt(s.map(|s| s.max)),
                            fmt_opt(s.map(|s| s.mean)),
                        ])?;
                    }
                }
                Ok(())
            })?;
            model::write_atomic(&bins_path, &bins)?;
            for r in &report.variants {
                eprintln!(
                    "{:<12} R2 {:>7}  MAE {:.4}  coverage {:.2}%  avg width {:.4}",
                    r.model_variant.name(),
                    r.r2.map_or("n/a".to_string(), |v| format!("{v:.4}")),
                    r.mae,
                    100.0 * r.coverage,
                    r.avg_width
                );
            }
            let mut manifest = RunManifest::load_or_new(&m, model);
            manifest.interval_multiplier = Some(eval::normal_multiplier(alpha)?);
            manifest
                .steps
                .push(clock.step(cmd, &[&report_path, &pred_path, &bins_path]));
            manifest.save_for(model)
        }
        Command::Eda {
            data,
            out_dir,
            column_map,
            bin_width,
            cfg,
        } => {
            let mut config = cfg.resolve()?;
            if let Some(w) = bin_width {
                config.histogram_bin_width = *w;
            }
            config.validate()?;
            let schema = schema_from(column_map.as_deref())?;
            let ds = data::filter_nonnegative(data::load_csv(data, &schema)?);
            let summary = eval::eda_summary(&ds, config.histogram_bin_width)?;
            create_dir(out_dir)?;
            let json_path = out_dir.join("eda.json");
            let hist_path = out_dir.join("histogram.csv");
            let corr_path = out_dir.join("correlation.csv");
            model::write_json_atomic(&json_path, &summary)?;
            let hist = csv_bytes(|w| {
                w.write_record(["lower", "upper", "count"])?;
                for b in &summary.target_histogram {
                    w.write_record([
                        b.lower.to_string(),
                        b.upper.to_string(),
                        b.count.to_string(),
                    ])?;
                }
                Ok(())
            })?;
            model::write_atomic(&hist_path, &hist)?;
            let corr = csv_bytes(|w| {
                let names = &summary.correlation.names;
                w.write_record(std::iter::once("column").chain(names.iter().map(String::as_str)))?;
                for (name, row) in names.iter().zip(&summary.correlation.values) {
                    w.write_record(
                        std::iter::once(name.clone()).chain(row.iter().map(|v| fmt_opt(*v))),
                    )?;
                }
                Ok(())
            })?;
            model::write_atomic(&corr_path, &corr)?;
            eprintln!(
                "{} samples summarised -> {}",
                summary.n_samples,
                out_dir.display()
            );
            let mut manifest = RunManifest::new(config);
            manifest.schema = Some(schema);
            manifest.dataset = Some(ds.provenance.clone());
            manifest
                .steps
                .push(clock.step(cmd, &[&json_path, &hist_path, &corr_path]));
            manifest.save_for(&json_path)
        }
        Command::Simulate {
            gen_config,
            alpha,
            reps,
            n_samples,
            shift,
            out,
            emit_csv,
            cfg,
        } => {
            let config = cfg.resolve()?;
            let mut gen = match gen_config {
                Some(p) => GeneratorConfig::from_file(p)?,
                None => GeneratorConfig::default(),
            };
            if let Some(n) = n_samples {
                gen.n_samples = *n;
            }
            if let Some(s) = cfg.seed {
                gen.seed = s;
            }
            let alpha = alpha.unwrap_or(config.alpha);
            let report = synth::coverage_trial(&gen, &config, alpha, *reps, *shift)?;
            model::write_json_atomic(out, &report)?;
            let mut outputs = vec![out.as_path()];
            if let Some(p) = emit_csv {
                let ds = synth::generate(&report.generator)?;
                let bytes = {
                    let mut buf = Vec::new();
                    data::write_csv(&ds, &mut buf)?;
                    buf
                };
                model::write_atomic(p, &bytes)?;
                outputs.push(p.as_path());
            }
            for v in &report.variants {
                eprintln!(
                    "{:<12} mean coverage {:.4} (SE {:.4})",
                    v.variant.name(),
                    v.mean,
                    v.std_error
                );
            }
            let g = &report.guarantee;
            eprintln!(
                "log_cp band [{:.4}, {:.4}]: {}",
                g.lower,
                g.upper,
                if g.within { "inside" } else { "outside" }
            );
            let mut manifest = RunManifest::new(report.config.clone());
            manifest.generator = Some(report.generator.clone());
            manifest.split_sizes = Some([report.n_train, report.n_cal, report.n_test]);
            manifest.interval_multiplier = Some(eval::normal_multiplier(alpha)?);
            manifest.steps.push(clock.step(cmd, &outputs));
            manifest.save_for(out)
        }
    }
}

/// Contents of `report.json` written by `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub alpha: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_cal: usize,
    pub n_test: usize,
    pub variants: Vec<EvalReport>,
}

impl EvaluationReport {
    pub fn variant(&self, v: Variant) -> Option<&EvalReport> {
        self.variants.iter().find(|r| r.model_variant == v)
    }
}
