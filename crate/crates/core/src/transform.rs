use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `y_log = ln(y + offset)` and its inverse `exp(y_log) - offset`.
///
/// Strictly increasing, so interval endpoints keep their order when mapped
/// through [`TargetTransform::inverse`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub offset: f64,
}

impl Default for TargetTransform {
    fn default() -> Self {
        Self { offset: 1.0 }
    }
}

impl TargetTransform {
    pub fn new(offset: f64) -> Result<Self> {
        if !(offset.is_finite() && offset > 0.0) {
            return Err(Error::config(format!(
                "transform offset must be > 0, got {offset}"
            )));
        }
        Ok(Self { offset })
    }

    pub fn forward(&self, y: f64) -> Result<f64> {
        let shifted = y + self.offset;
        if !(shifted > 0.0) || !shifted.is_finite() {
            return Err(Error::Domain(format!(
                "ln(y + offset) undefined for y = {y}, offset = {}",
                self.offset
            )));
        }
        // ln(offset) + ln1p(y / offset) keeps full relative precision for y
        // near zero, where ln(y + offset) would round y away.
        Ok(self.offset.ln() + (y / self.offset).ln_1p())
    }

    pub fn inverse(&self, y_log: f64) -> f64 {
        self.offset * (y_log - self.offset.ln()).exp_m1()
    }

    pub fn forward_all(&self, ys: &[f64]) -> Result<Vec<f64>> {
        ys.iter().map(|&y| self.forward(y)).collect()
    }
}
