//! Domain types, on-disk formats, and the accuracy primitives every audit uses.

mod accuracy;
mod compression;
mod dataset;
pub(crate) mod io_util;
mod log;

pub(crate) use accuracy::model_accuracy_on as accuracy_on;
pub use accuracy::{class_recall_matrix, model_accuracy};
pub use compression::{CompressionMethod, CompressionSpec};
pub use dataset::{
    read_dataset, write_dataset, DatasetMeta, ExampleRecord, FeatureRange, LabeledDataset, Layout,
};
pub use log::{read_prediction_log, write_prediction_log, PredictionLog};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Settings shared by the class and PIE audits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditConfig {
    /// Significance level for the per-class test.
    pub alpha: f64,
    /// Rank depth for top-k accuracy. `None` means `min(5, C)`.
    pub topk_eval: Option<usize>,
    /// Divide alpha by the number of classes tested.
    pub bonferroni: bool,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            alpha: 0.05,
            topk_eval: None,
            bonferroni: false,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.topk_eval == Some(0) {
            return Err(Error::Config("topk_eval must be at least 1".into()));
        }
        Ok(())
    }

    pub fn topk_for(&self, num_classes: usize) -> usize {
        self.topk_eval.unwrap_or(5).min(num_classes).max(1)
    }

    /// Per-test threshold after the optional Bonferroni correction.
    pub fn effective_alpha(&self, tests: usize) -> f64 {
        if self.bonferroni && tests > 0 {
            self.alpha / tests as f64
        } else {
            self.alpha
        }
    }
}
