use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use swellcp::data;
use swellcp::model::ModelFile;
use swellcp::synth::{self, GeneratorConfig};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swellcp"))
        .args(args)
        .env_remove("SWELLCP_CONFIG")
        .output()
        .expect("spawn swellcp")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "swellcp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synthetic_csv(path: &Path, cfg: &GeneratorConfig) {
    let ds = synth::generate(cfg).unwrap();
    data::write_csv(&ds, std::fs::File::create(path).unwrap()).unwrap();
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_on_twenty_rows_splits_16_2_2_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    synthetic_csv(
        &csv,
        &GeneratorConfig {
            n_samples: 20,
            ..Default::default()
        },
    );
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    ok(&[
        "train",
        "--data",
        p(&csv),
        "--out",
        p(&a),
        "--seed",
        "4",
        "--n-trees",
        "8",
    ]);
    ok(&[
        "train",
        "--data",
        p(&csv),
        "--out",
        p(&b),
        "--seed",
        "4",
        "--n-trees",
        "8",
    ]);
    let m = ModelFile::load(&a).unwrap();
    assert_eq!(
        (
            m.split.train.len(),
            m.split.calibration.len(),
            m.split.test.len()
        ),
        (16, 2, 2)
    );
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let manifest = json(&dir.path().join("a.json.manifest.json"));
    assert_eq!(manifest["config"]["seed"], 4);
    assert_eq!(manifest["config"]["n_trees"], 8);
    assert_eq!(manifest["split_sizes"], serde_json::json!([16, 2, 2]));
    assert_eq!(manifest["dataset"]["rows_read"], 20);
    assert!(manifest["steps"][0]["timing"]["elapsed_ms"].is_number());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    synthetic_csv(
        &csv,
        &GeneratorConfig {
            n_samples: 30,
            ..Default::default()
        },
    );
    let text = std::fs::read_to_string(&csv).unwrap();

    // Missing target column.
    let header_end = text.find('\n').unwrap();
    let header = &text[..header_end];
    let no_target: String = text
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0)
        .collect::<Vec<_>>()
        .join("\n");
    assert!(header.ends_with("void_swelling"));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, no_target).unwrap();
    let model = dir.path().join("m.json");
    assert_eq!(
        run(&["train", "--data", p(&bad), "--out", p(&model)])
            .status
            .code(),
        Some(2)
    );

    // Bad config.
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"alpha": 1.5}"#).unwrap();
    assert_eq!(
        run(&["train", "--data", p(&csv), "--config", p(&cfg)])
            .status
            .code(),
        Some(3)
    );
    std::fs::write(&cfg, r#"{"n_tress": 5}"#).unwrap();
    assert_eq!(
        run(&["train", "--data", p(&csv), "--config", p(&cfg)])
            .status
            .code(),
        Some(3)
    );

    // Predict before calibrate.
    ok(&[
        "train",
        "--data",
        p(&csv),
        "--out",
        p(&model),
        "--n-trees",
        "5",
    ]);
    assert_eq!(
        run(&["predict", "--model", p(&model), "--input", p(&csv)])
            .status
            .code(),
        Some(4)
    );
    assert_eq!(
        run(&[
            "evaluate",
            "--model",
            p(&model),
            "--data",
            p(&csv),
            "--out-dir",
            p(dir.path())
        ])
        .status
        .code(),
        Some(4)
    );

    // Calibrating against a different dataset.
    let other = dir.path().join("other.csv");
    synthetic_csv(
        &other,
        &GeneratorConfig {
            n_samples: 31,
            ..Default::default()
        },
    );
    assert_eq!(
        run(&["calibrate", "--model", p(&model), "--data", p(&other)])
            .status
            .code(),
        Some(4)
    );

    // Missing file.
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        run(&["train", "--data", p(&missing)]).status.code(),
        Some(1)
    );
}

#[test]
fn config_path_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    synthetic_csv(
        &csv,
        &GeneratorConfig {
            n_samples: 30,
            ..Default::default()
        },
    );
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"n_trees": 7, "seed": 2}"#).unwrap();
    let model = dir.path().join("m.json");
    let out = Command::new(env!("CARGO_BIN_EXE_swellcp"))
        .args([
            "train",
            "--data",
            p(&csv),
            "--out",
            p(&model),
            "--seed",
            "9",
        ])
        .env("SWELLCP_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    let m = ModelFile::load(&model).unwrap();
    assert_eq!((m.forest.n_trees(), m.config.seed), (7, 9));
}

#[test]
fn calibrate_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    synthetic_csv(
        &csv,
        &GeneratorConfig {
            n_samples: 310,
            noise_sd_log: 0.0,
            incubation_dose_sd: 0.0,
            ..Default::default()
        },
    );
    let model = dir.path().join("m.json");
    ok(&[
        "train",
        "--data",
        p(&csv),
        "--out",
        p(&model),
        "--n-trees",
        "30",
        "--max-features",
        "22",
    ]);
    let out = ok(&[
        "calibrate",
        "--model",
        p(&model),
        "--data",
        p(&csv),
        "--alpha",
        "0.2",
    ]);
    assert!(!String::from_utf8_lossy(&out.stderr).contains("warning"));
    let m = ModelFile::load(&model).unwrap();
    let cal = m.calibrator().unwrap();
    assert_eq!((cal.n_cal(), cal.rank()), (31, 26));
    let mut sorted = cal.scores().to_vec();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(cal.q_alpha(), Some(sorted[25]));

    // Features-only input built from the first training rows.
    let ds = data::load_csv(&csv, &Default::default()).unwrap();
    let train_rows: Vec<usize> = m.split.train.iter().copied().take(5).collect();
    let input = dir.path().join("in.csv");
    let mut w = csv::Writer::from_path(&input).unwrap();
    let mut header: Vec<&str> = data::CONTINUOUS_NAMES.to_vec();
    header.push(data::CATEGORICAL_NAME);
    w.write_record(&header).unwrap();
    for &r in &train_rows {
        let f = &ds.samples[r].features;
        let mut rec: Vec<String> = f.continuous.iter().map(|v| v.to_string()).collect();
        rec.push(f.irradiation.label().to_string());
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
    drop(w);

    let out = ok(&["predict", "--model", p(&model), "--input", p(&input)]);
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        [
            "row",
            "point",
            "lower",
            "upper",
            "log_point",
            "log_lower",
            "log_upper",
            "unbounded"
        ]
    );
    for (rec, &r) in rdr.records().zip(&train_rows) {
        let rec = rec.unwrap();
        let point: f64 = rec[1].parse().unwrap();
        let lower: f64 = rec[2].parse().unwrap();
        let upper: f64 = rec[3].parse().unwrap();
        let truth = ds.samples[r].target;
        // Noise-free data and full-depth trees: training rows are nearly reproduced.
        assert!(
            (point - truth).abs() <= 0.05 * (1.0 + truth),
            "{point} vs {truth}"
        );
        assert!(lower <= point && point <= upper);
        assert_eq!(&rec[7], "false");
    }

    // Empty input: header only.
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, header.join(",") + "\n").unwrap();
    let out_csv = dir.path().join("pred.csv");
    ok(&[
        "predict",
        "--model",
        p(&model),
        "--input",
        p(&empty),
        "--out",
        p(&out_csv),
    ]);
    assert_eq!(
        std::fs::read_to_string(&out_csv).unwrap(),
        "row,point,lower,upper,log_point,log_lower,log_upper,unbounded\n"
    );

    // alpha = 0.001 with 31 calibration rows: rank 32, unbounded.
    let out = ok(&[
        "calibrate",
        "--model",
        p(&model),
        "--data",
        p(&csv),
        "--alpha",
        "0.001",
    ]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let out = ok(&[
        "predict",
        "--model",
        p(&model),
        "--input",
        p(&input),
        "--clamp-lower-zero",
    ]);
    let mut rdr = csv::Reader::from_reader(out.stdout.as_slice());
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[3], "inf");
        assert_eq!(&rec[2], "0");
        assert_eq!(&rec[7], "true");
    }
    let manifest = json(&dir.path().join("m.json.manifest.json"));
    let steps: Vec<&str> = manifest["steps"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["command"].as_str().unwrap())
        .collect();
    assert_eq!(steps, ["train", "calibrate", "predict", "calibrate"]);
}

#[test]
fn evaluate_reports_three_variants_with_nonnegative_widths() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    synthetic_csv(
        &csv,
        &GeneratorConfig {
            n_samples: 200,
            seed: 3,
            ..Default::default()
        },
    );
    let model = dir.path().join("m.json");
    let eval = dir.path().join("eval");
    ok(&[
        "train",
        "--data",
        p(&csv),
        "--out",
        p(&model),
        "--n-trees",
        "25",
        "--no-log",
    ]);
    ok(&["calibrate", "--model", p(&model), "--data", p(&csv)]);
    ok(&[
        "evaluate",
        "--model",
        p(&model),
        "--data",
        p(&csv),
        "--out-dir",
        p(&eval),
    ]);
    let report = json(&eval.join("report.json"));
    let variants: Vec<&str> = report["variants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["model_variant"].as_str().unwrap())
        .collect();
    assert_eq!(variants, ["standard_rf", "log_rf", "log_cp"]);
    assert_eq!(report["n_test"], 20);

    let mut rdr = csv::Reader::from_path(eval.join("predictions.csv")).unwrap();
    let mut n = 0;
    for rec in rdr.records() {
        let w: f64 = rec.unwrap()[7].parse().unwrap();
        assert!(w >= 0.0);
        n += 1;
    }
    assert_eq!(n, 60);
    assert!(eval.join("width_bins.csv").exists());
    let manifest = json(&dir.path().join("m.json.manifest.json"));
    let k = manifest["interval_multiplier"].as_f64().unwrap();
    assert!((k - 1.2815515655446004).abs() < 1e-9);
}

#[test]
fn eda_outputs_have_the_expected_shape() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    synthetic_csv(
        &csv,
        &GeneratorConfig {
            n_samples: 120,
            ..Default::default()
        },
    );
    let out = dir.path().join("eda");
    ok(&[
        "eda",
        "--data",
        p(&csv),
        "--out-dir",
        p(&out),
        "--bin-width",
        "2.5",
    ]);
    let eda = json(&out.join("eda.json"));
    assert_eq!(eda["columns"].as_array().unwrap().len(), 18);
    let total: u64 = eda["class_counts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["count"].as_u64().unwrap())
        .sum();
    assert_eq!(total, 120);
    assert_eq!(eda["histogram_bin_width"], 2.5);

    let mut rdr = csv::Reader::from_path(out.join("correlation.csv")).unwrap();
    let names: Vec<String> = rdr
        .headers()
        .unwrap()
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let rows: Vec<Vec<f64>> = rdr
        .records()
        .map(|r| {
            r.unwrap()
                .iter()
                .skip(1)
                .map(|v| v.parse().unwrap())
                .collect()
        })
        .collect();
    assert_eq!(rows.len(), names.len());
    for (i, row) in rows.iter().enumerate() {
        assert!((row[i] - 1.0).abs() < 1e-12);
        for (j, v) in row.iter().enumerate() {
            assert_eq!(*v, rows[j][i]);
        }
    }
    let hist: u64 = csv::Reader::from_path(out.join("histogram.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap()[2].parse::<u64>().unwrap())
        .sum();
    assert_eq!(hist, 120);
}

#[test]
fn simulate_single_repetition_and_emitted_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("trial.json");
    let synth_csv = dir.path().join("synth.csv");
    ok(&[
        "simulate",
        "--reps",
        "1",
        "--n-samples",
        "60",
        "--n-trees",
        "10",
        "--out",
        p(&out),
        "--emit-csv",
        p(&synth_csv),
    ]);
    let report = json(&out);
    for v in report["variants"].as_array().unwrap() {
        assert_eq!(v["coverages"].as_array().unwrap().len(), 1);
        assert_eq!(v["std_error"], 0.0);
    }
    let ds = data::load_csv(&synth_csv, &Default::default()).unwrap();
    assert_eq!(ds.len(), 60);
    assert!(dir.path().join("trial.json.manifest.json").exists());
}
