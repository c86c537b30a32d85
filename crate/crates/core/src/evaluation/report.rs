use std::path::Path;

use serde::{Deserialize, Serialize};

use super::classifier::ClassifierSpec;
use super::f1::F1Report;
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "relemb-eval";
pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum EvalResult {
    Analogy {
        questions: usize,
        accuracy: f64,
        predictions: Vec<usize>,
    },
    RelationClassification {
        spec: ClassifierSpec,
        validation_macro_f1: Option<f64>,
        grid: Vec<(ClassifierSpec, f64)>,
        test: F1Report,
    },
}

/// Versioned evaluation output: the result plus an echo of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub config: serde_json::Value,
    pub result: EvalResult,
}

impl EvalReport {
    pub fn new(seed: u64, config: serde_json::Value, result: EvalResult) -> Self {
        EvalReport {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            seed,
            config,
            result,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported report {} v{}",
                r.format, r.version
            )));
        }
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}
