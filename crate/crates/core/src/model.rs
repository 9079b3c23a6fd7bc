//! Versioned JSON model file and atomic output writes.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::conformal::ConformalCalibrator;
use crate::data::{FeatureSchema, Provenance, SplitIndices};
use crate::error::{Error, Result};
use crate::forest::ForestModel;
use crate::pipeline::PipelineConfig;
use crate::transform::TargetTransform;

pub const FORMAT: &str = "swellcp-model";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to predict, calibrate and evaluate: the forest (trees
/// in preorder), the transform, the split, and the calibrator once present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub config: PipelineConfig,
    pub transform: TargetTransform,
    /// Column names used to read the training data.
    pub schema: FeatureSchema,
    pub dataset: Provenance,
    pub n_samples: usize,
    pub split: SplitIndices,
    pub forest: ForestModel,
    pub calibrator: Option<ConformalCalibrator>,
}

impl ModelFile {
    pub fn new(
        config: PipelineConfig,
        transform: TargetTransform,
        schema: FeatureSchema,
        dataset: Provenance,
        n_samples: usize,
        split: SplitIndices,
        forest: ForestModel,
    ) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: FORMAT_VERSION,
            config,
            transform,
            schema,
            dataset,
            n_samples,
            split,
            forest,
            calibrator: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::config(format!("serialize model: {e}")))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ModelFile =
            serde_json::from_str(text).map_err(|e| Error::config(format!("model file: {e}")))?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }

    /// The calibrator, or a state error if the model was never calibrated.
    pub fn calibrator(&self) -> Result<&ConformalCalibrator> {
        self.calibrator
            .as_ref()
            .ok_or_else(|| Error::state("model is not calibrated; run `calibrate` first"))
    }

    fn validate(&self) -> Result<()> {
        if self.format != FORMAT {
            return Err(Error::config(format!(
                "not a model file (format {:?})",
                self.format
            )));
        }
        if self.version != FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported model version {} (expected {FORMAT_VERSION})",
                self.version
            )));
        }
        self.forest.validate()?;
        if self.split.total() != self.n_samples {
            return Err(Error::config(
                "split indices do not cover the recorded sample count",
            ));
        }
        TargetTransform::new(self.transform.offset)?;
        self.schema.validate()?;
        if let Some(cal) = &self.calibrator {
            cal.validate()?;
        }
        Ok(())
    }
}

/// Write through a temporary file in the target directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::config(format!("serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}
