//! Dataset ingestion, validation, filtering, encoding and splitting.
//!
//! A record has 17 continuous inputs (dose, temperature, gas concentration
//! and 14 element weight-percents), one categorical irradiation type with
//! five classes, and the measured swelling in percent. Encoded rows carry the
//! 17 continuous values unscaled followed by a 5-wide one-hot block.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SchemaError};
use crate::rng::{self, Purpose};

pub const N_CONTINUOUS: usize = 17;
pub const N_CLASSES: usize = 5;
pub const N_FEATURES: usize = N_CONTINUOUS + N_CLASSES;

/// Canonical column names for the continuous inputs, in encoding order.
pub const CONTINUOUS_NAMES: [&str; N_CONTINUOUS] = [
    "dose",
    "temperature",
    "gas",
    "B",
    "C",
    "N",
    "Al",
    "Si",
    "P",
    "S",
    "Ti",
    "Cr",
    "Mn",
    "Fe",
    "Ni",
    "Cu",
    "Mo",
];

pub const CATEGORICAL_NAME: &str = "irradiation_type";
pub const TARGET_NAME: &str = "void_swelling";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IrradiationType {
    #[serde(rename = "Ni6+ ion")]
    NiIon,
    #[serde(rename = "Fe2+ ion")]
    FeIon,
    Neutron,
    Proton,
    Electron,
}

impl IrradiationType {
    /// Fixed one-hot order.
    pub const ALL: [IrradiationType; N_CLASSES] = [
        IrradiationType::NiIon,
        IrradiationType::FeIon,
        IrradiationType::Neutron,
        IrradiationType::Proton,
        IrradiationType::Electron,
    ];

    pub fn label(self) -> &'static str {
        match self {
            IrradiationType::NiIon => "Ni6+ ion",
            IrradiationType::FeIon => "Fe2+ ion",
            IrradiationType::Neutron => "Neutron",
            IrradiationType::Proton => "Proton",
            IrradiationType::Electron => "Electron",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Exact match after trimming surrounding whitespace.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        Self::ALL.into_iter().find(|c| c.label() == s)
    }
}

impl fmt::Display for IrradiationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Column names expected in the CSV header.
///
/// The default uses the canonical names. Sources with different headers can be
/// bridged with [`FeatureSchema::with_column_map`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub continuous_names: Vec<String>,
    pub categorical_name: String,
    pub target_name: String,
}

impl Default for FeatureSchema {
    fn default() -> Self {
        Self {
            continuous_names: CONTINUOUS_NAMES.iter().map(|s| s.to_string()).collect(),
            categorical_name: CATEGORICAL_NAME.to_string(),
            target_name: TARGET_NAME.to_string(),
        }
    }
}

impl FeatureSchema {
    /// Rename columns. Keys are canonical names, values the header text in
    /// the source file.
    pub fn with_column_map(mut self, map: &BTreeMap<String, String>) -> Result<Self> {
        for (canonical, header) in map {
            if canonical == CATEGORICAL_NAME {
                self.categorical_name = header.clone();
            } else if canonical == TARGET_NAME {
                self.target_name = header.clone();
            } else if let Some(i) = CONTINUOUS_NAMES.iter().position(|n| n == canonical) {
                self.continuous_names[i] = header.clone();
            } else {
                return Err(Error::config(format!(
                    "column map: unknown canonical column {canonical:?}"
                )));
            }
        }
        self.validate()?;
        Ok(self)
    }

    /// Load a JSON object `{canonical: header}` and apply it.
    pub fn from_column_map_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map: BTreeMap<String, String> =
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                source,
            })?;
        Self::default().with_column_map(&map)
    }

    pub fn validate(&self) -> Result<()> {
        if self.continuous_names.len() != N_CONTINUOUS {
            return Err(Error::config(format!(
                "schema needs {N_CONTINUOUS} continuous columns, got {}",
                self.continuous_names.len()
            )));
        }
        let mut seen: Vec<String> = self.all_names().map(normalize_header).collect();
        seen.sort();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("schema column names are not distinct"));
        }
        Ok(())
    }

    fn all_names(&self) -> impl Iterator<Item = &str> {
        self.continuous_names
            .iter()
            .map(String::as_str)
            .chain([self.categorical_name.as_str(), self.target_name.as_str()])
    }
}

fn normalize_header(s: &str) -> String {
    s.trim().to_lowercase()
}

/// Model inputs of one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub continuous: [f64; N_CONTINUOUS],
    pub irradiation: IrradiationType,
}

impl Features {
    pub fn dose(&self) -> f64 {
        self.continuous[0]
    }

    /// Continuous block followed by the one-hot class indicators.
    pub fn encode(&self) -> [f64; N_FEATURES] {
        let mut row = [0.0; N_FEATURES];
        row[..N_CONTINUOUS].copy_from_slice(&self.continuous);
        row[N_CONTINUOUS + self.irradiation.index()] = 1.0;
        row
    }

    /// Inverse of [`Features::encode`]. `None` unless exactly one indicator is set.
    pub fn decode(row: &[f64]) -> Option<Self> {
        if row.len() != N_FEATURES {
            return None;
        }
        let hot: Vec<usize> = (0..N_CLASSES)
            .filter(|&i| row[N_CONTINUOUS + i] == 1.0)
            .collect();
        let zeros = (0..N_CLASSES)
            .filter(|&i| row[N_CONTINUOUS + i] == 0.0)
            .count();
        if hot.len() != 1 || zeros != N_CLASSES - 1 {
            return None;
        }
        let mut continuous = [0.0; N_CONTINUOUS];
        continuous.copy_from_slice(&row[..N_CONTINUOUS]);
        Some(Self {
            continuous,
            irradiation: IrradiationType::from_index(hot[0])?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Features,
    /// Swelling, percent.
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterEvent {
    pub filter: String,
    pub removed: usize,
    pub remaining: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub rows_read: usize,
    pub filters: Vec<FilterEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: FeatureSchema,
    pub samples: Vec<Sample>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Sub-dataset with the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            samples: indices.iter().map(|&i| self.samples[i]).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Column positions of the schema within a header row.
struct ColumnIndex {
    continuous: [usize; N_CONTINUOUS],
    categorical: usize,
    target: Option<usize>,
}

impl ColumnIndex {
    fn resolve(
        headers: &csv::StringRecord,
        schema: &FeatureSchema,
        need_target: bool,
    ) -> Result<Self> {
        let normalized: Vec<String> = headers.iter().map(normalize_header).collect();
        let find = |name: &str| {
            let key = normalize_header(name);
            normalized.iter().position(|h| *h == key)
        };
        let require = |name: &str| {
            find(name).ok_or_else(|| Error::from(SchemaError::MissingColumn(name.to_string())))
        };
        let mut continuous = [0; N_CONTINUOUS];
        for (slot, name) in continuous.iter_mut().zip(&schema.continuous_names) {
            *slot = require(name)?;
        }
        let categorical = require(&schema.categorical_name)?;
        let target = if need_target {
            Some(require(&schema.target_name)?)
        } else {
            find(&schema.target_name)
        };
        Ok(Self {
            continuous,
            categorical,
            target,
        })
    }
}

fn parse_number(record: &csv::StringRecord, col: usize, name: &str, row: usize) -> Result<f64> {
    let raw = record.get(col).unwrap_or("");
    let value: f64 = raw.trim().parse().map_err(|_| SchemaError::BadNumber {
        row,
        column: name.to_string(),
        value: raw.to_string(),
    })?;
    if !value.is_finite() {
        return Err(SchemaError::NonFinite {
            row,
            column: name.to_string(),
            value,
        }
        .into());
    }
    Ok(value)
}

fn parse_features(
    record: &csv::StringRecord,
    cols: &ColumnIndex,
    schema: &FeatureSchema,
    row: usize,
) -> Result<Features> {
    let mut continuous = [0.0; N_CONTINUOUS];
    for (j, value) in continuous.iter_mut().enumerate() {
        *value = parse_number(record, cols.continuous[j], &schema.continuous_names[j], row)?;
    }
    let raw = record.get(cols.categorical).unwrap_or("");
    let irradiation = IrradiationType::parse(raw).ok_or_else(|| SchemaError::UnknownClass {
        row,
        value: raw.to_string(),
    })?;
    Ok(Features {
        continuous,
        irradiation,
    })
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(reader)
}

/// Line number of a record in the source file (the header is line 1).
fn line_of(record: &csv::StringRecord, fallback: usize) -> usize {
    record
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback)
}

/// Parse a labelled dataset. Columns outside the schema are ignored; row
/// order is preserved. Row numbers in errors are file line numbers.
pub fn read_csv<R: Read>(reader: R, schema: &FeatureSchema, source: &str) -> Result<Dataset> {
    schema.validate()?;
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = ColumnIndex::resolve(&headers, schema, true)?;
    let target_col = cols.target.expect("target required");
    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| SchemaError::Csv { row: i + 2, source })?;
        let row = line_of(&record, i + 2);
        let features = parse_features(&record, &cols, schema, row)?;
        let target = parse_number(&record, target_col, &schema.target_name, row)?;
        samples.push(Sample { features, target });
    }
    Ok(Dataset {
        schema: schema.clone(),
        provenance: Provenance {
            source: source.to_string(),
            rows_read: samples.len(),
            filters: Vec::new(),
        },
        samples,
    })
}

pub fn load_csv(path: &Path, schema: &FeatureSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, &path.display().to_string())
}

/// Parse inputs for prediction. A target column, if present, is ignored.
pub fn read_features_csv<R: Read>(reader: R, schema: &FeatureSchema) -> Result<Vec<Features>> {
    schema.validate()?;
    let mut rdr = csv_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = ColumnIndex::resolve(&headers, schema, false)?;
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(|source| SchemaError::Csv { row: i + 2, source })?;
        let row = line_of(&record, i + 2);
        rows.push(parse_features(&record, &cols, schema, row)?);
    }
    Ok(rows)
}

pub fn load_features_csv(path: &Path, schema: &FeatureSchema) -> Result<Vec<Features>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_features_csv(file, schema)
}

/// Write a dataset using the schema's column names.
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = ds
        .schema
        .continuous_names
        .iter()
        .map(String::as_str)
        .collect();
    header.push(&ds.schema.categorical_name);
    header.push(&ds.schema.target_name);
    w.write_record(&header)?;
    for s in &ds.samples {
        let mut rec: Vec<String> = s.features.continuous.iter().map(f64::to_string).collect();
        rec.push(s.features.irradiation.label().to_string());
        rec.push(s.target.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Drop samples with negative swelling. Zero is kept.
pub fn filter_nonnegative(ds: Dataset) -> Dataset {
    let before = ds.samples.len();
    let samples: Vec<Sample> = ds.samples.into_iter().filter(|s| s.target >= 0.0).collect();
    let mut provenance = ds.provenance;
    provenance.filters.push(FilterEvent {
        filter: "nonnegative_target".to_string(),
        removed: before - samples.len(),
        remaining: samples.len(),
    });
    Dataset {
        schema: ds.schema,
        samples,
        provenance,
    }
}

/// Dense row-major matrix of encoded feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n_cols: usize,
    values: Vec<f64>,
}

impl Matrix {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            values: Vec::new(),
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n_cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut m = Self::new(n_cols);
        for r in rows {
            m.push_row(r.as_ref());
        }
        m
    }

    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n_cols, "row width mismatch");
        self.values.extend_from_slice(row);
    }

    pub fn n_rows(&self) -> usize {
        self.values.len().checked_div(self.n_cols).unwrap_or(0)
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols.max(1))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut m = Matrix::new(self.n_cols);
        for &i in indices {
            m.push_row(self.row(i));
        }
        m
    }
}

/// Design matrix (n x 22) and target vector. No scaling is applied.
pub fn encode(ds: &Dataset) -> (Matrix, Vec<f64>) {
    let mut x = Matrix::new(N_FEATURES);
    for s in &ds.samples {
        x.push_row(&s.features.encode());
    }
    (x, ds.targets())
}

pub fn encode_features(rows: &[Features]) -> Matrix {
    let mut x = Matrix::new(N_FEATURES);
    for f in rows {
        x.push_row(&f.encode());
    }
    x
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub calibration: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            calibration: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.calibration, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f <= 0.0) {
            return Err(Error::config(format!(
                "split fractions must be positive, got {parts:?}"
            )));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split fractions must sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Floor for train and calibration, remainder to test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The small slack keeps products like 0.29 * 100 = 28.999999999999996
        // from flooring one short.
        let count = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let train = count(self.train).min(n);
        let cal = count(self.calibration).min(n - train);
        (train, cal, n - train - cal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitIndices {
    pub fn total(&self) -> usize {
        self.train.len() + self.calibration.len() + self.test.len()
    }
}

/// Seeded random partition of `0..n`: shuffle, then contiguous blocks.
pub fn split(n: usize, fractions: &SplitFractions, seed: u64) -> Result<SplitIndices> {
    fractions.validate()?;
    let (n_train, n_cal, n_test) = fractions.sizes(n);
    if n_train == 0 || n_cal == 0 || n_test == 0 {
        return Err(Error::config(format!(
            "split of {n} samples leaves an empty subset (train {n_train}, calibration {n_cal}, test {n_test})"
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::substream(seed, Purpose::Split, 0), &mut perm);
    let test = perm.split_off(n_train + n_cal);
    let calibration = perm.split_off(n_train);
    Ok(SplitIndices {
        train: perm,
        calibration,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> String {
        let mut cols: Vec<&str> = vec!["steel"];
        cols.extend(CONTINUOUS_NAMES);
        cols.push(CATEGORICAL_NAME);
        cols.push(TARGET_NAME);
        cols.join(",")
    }

    fn row(name: &str, class: &str, target: &str) -> String {
        let nums: Vec<String> = (0..N_CONTINUOUS)
            .map(|j| format!("{}", j as f64 + 0.5))
            .collect();
        format!("{name},{},{class},{target}", nums.join(","))
    }

    fn parse(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), &FeatureSchema::default(), "inline")
    }

    fn sample(target: f64) -> Sample {
        Sample {
            features: Features {
                continuous: [1.0; N_CONTINUOUS],
                irradiation: IrradiationType::Neutron,
            },
            target,
        }
    }

    fn dataset(targets: &[f64]) -> Dataset {
        Dataset {
            schema: FeatureSchema::default(),
            samples: targets.iter().map(|&t| sample(t)).collect(),
            provenance: Provenance::default(),
        }
    }

    #[test]
    fn loads_valid_rows_and_ignores_extra_columns() {
        let text = format!(
            "{}\n{}\n{}\n{}\n",
            header(),
            row("316SS", "Neutron", "1.5"),
            row("HT9", " Proton ", "0"),
            row("304", "Ni6+ ion", "12.25")
        );
        let ds = parse(&text).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.samples[1].features.irradiation, IrradiationType::Proton);
        assert_eq!(ds.samples[2].target, 12.25);
        assert_eq!(ds.samples[0].features.continuous[16], 16.5);
    }

    #[test]
    fn header_match_is_case_insensitive_and_trimmed() {
        let text = format!(
            "{}\n{}\n",
            header().replace("dose", " DOSE ").replace("Cr", "cr"),
            row("x", "Electron", "2")
        );
        assert_eq!(parse(&text).unwrap().len(), 1);
    }

    #[test]
    fn missing_column_is_named() {
        let text = format!("{}\n", header().replace(",Cr,", ",Chromium,"));
        match parse(&text) {
            Err(Error::Schema(SchemaError::MissingColumn(c))) => assert_eq!(c, "Cr"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_class_reports_row_and_value() {
        let text = format!(
            "{}\n{}\n{}\n",
            header(),
            row("a", "Neutron", "1"),
            row("b", "Muon", "1")
        );
        match parse(&text) {
            Err(Error::Schema(SchemaError::UnknownClass { row, value })) => {
                assert_eq!(row, 3);
                assert_eq!(value, "Muon");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_or_garbage_cells_are_parse_errors() {
        for bad in ["", "abc", "NaN", "inf"] {
            let text = format!("{}\n{}\n", header(), row("a", "Neutron", bad));
            assert!(
                matches!(
                    parse(&text),
                    Err(Error::Schema(SchemaError::BadNumber { row: 2, .. }))
                        | Err(Error::Schema(SchemaError::NonFinite { row: 2, .. }))
                ),
                "{bad:?} accepted"
            );
        }
    }

    #[test]
    fn class_match_is_exact() {
        assert_eq!(IrradiationType::parse("neutron"), None);
        assert_eq!(
            IrradiationType::parse("  Fe2+ ion\t"),
            Some(IrradiationType::FeIon)
        );
        assert_eq!(IrradiationType::ALL.len(), 5);
    }

    #[test]
    fn filter_drops_negative_targets_only() {
        let ds = filter_nonnegative(dataset(&[-0.55, 0.0, 3.2]));
        assert_eq!(ds.targets(), vec![0.0, 3.2]);
        let event = ds.provenance.filters.last().unwrap();
        assert_eq!((event.removed, event.remaining), (1, 2));

        let all_ok = dataset(&[0.0, 1.0]);
        assert_eq!(filter_nonnegative(all_ok.clone()).samples, all_ok.samples);

        let none = filter_nonnegative(dataset(&[-1.0, -0.2, -3.0]));
        assert!(none.is_empty());
        assert_eq!(none.provenance.filters[0].removed, 3);
    }

    #[test]
    fn filter_is_idempotent() {
        let once = filter_nonnegative(dataset(&[-1.0, 2.0, 0.0, -0.1]));
        let twice = filter_nonnegative(once.clone());
        assert_eq!(once.samples, twice.samples);
    }

    #[test]
    fn one_hot_layout() {
        let mut ds = dataset(&[1.0, 1.0]);
        ds.samples[1].features.irradiation = IrradiationType::Electron;
        let (x, y) = encode(&ds);
        assert_eq!(x.n_cols(), 22);
        assert_eq!(x.n_rows(), 2);
        assert_eq!(&x.row(0)[17..], &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(&x.row(1)[17..], &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(&x.row(0)[..17], &x.row(1)[..17]);
        assert_eq!(y, vec![1.0, 1.0]);
        for (i, s) in ds.samples.iter().enumerate() {
            assert_eq!(Features::decode(x.row(i)), Some(s.features));
        }
    }

    #[test]
    fn split_sizes_floor_then_remainder() {
        let f = SplitFractions::default();
        assert_eq!(f.sizes(311), (248, 31, 32));
        assert_eq!(248 + 31 + 32, 311);
        assert_eq!(f.sizes(10), (8, 1, 1));
        assert_eq!(f.sizes(20), (16, 2, 2));
        assert_eq!(f.sizes(310), (248, 31, 31));
    }

    #[test]
    fn split_is_a_deterministic_partition() {
        let f = SplitFractions::default();
        let a = split(311, &f, 42).unwrap();
        let b = split(311, &f, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, split(311, &f, 43).unwrap());
        let mut all: Vec<usize> = a
            .train
            .iter()
            .chain(&a.calibration)
            .chain(&a.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..311).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_empty_subsets_and_bad_fractions() {
        let f = SplitFractions::default();
        assert!(matches!(split(5, &f, 0), Err(Error::Config(_))));
        let bad = SplitFractions {
            train: 0.8,
            calibration: 0.1,
            test: 0.2,
        };
        assert!(matches!(split(100, &bad, 0), Err(Error::Config(_))));
        let neg = SplitFractions {
            train: 1.1,
            calibration: -0.2,
            test: 0.1,
        };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn column_map_renames_headers() {
        let mut map = BTreeMap::new();
        map.insert("dose".to_string(), "Dose (dpa)".to_string());
        map.insert("void_swelling".to_string(), "Swelling (%)".to_string());
        let schema = FeatureSchema::default().with_column_map(&map).unwrap();
        let text = format!(
            "{}\n{}\n",
            header()
                .replace("dose", "Dose (dpa)")
                .replace("void_swelling", "Swelling (%)"),
            row("a", "Neutron", "1")
        );
        assert_eq!(read_csv(text.as_bytes(), &schema, "x").unwrap().len(), 1);

        map.insert("Xe".to_string(), "xenon".to_string());
        assert!(FeatureSchema::default().with_column_map(&map).is_err());
    }

    #[test]
    fn csv_write_then_read_preserves_samples() {
        let mut ds = dataset(&[0.0, 1.0 / 3.0, 17.92]);
        ds.samples[0].features.continuous[0] = 220.56;
        ds.samples[2].features.irradiation = IrradiationType::FeIon;
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &FeatureSchema::default(), "buf").unwrap();
        assert_eq!(back.samples, ds.samples);
    }

    #[test]
    fn features_only_reader_tolerates_missing_target() {
        let text = format!(
            "{}\n{}\n",
            header().replace(",void_swelling", ""),
            row("a", "Neutron", "").trim_end_matches(',')
        );
        let rows = read_features_csv(text.as_bytes(), &FeatureSchema::default()).unwrap();
        assert_eq!(rows.len(), 1);
        let empty = read_features_csv(header().as_bytes(), &FeatureSchema::default()).unwrap();
        assert!(empty.is_empty());
    }
}
