use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentConfig;
use crate::corpus::Sentiment;
use crate::eval::{ConfusionMatrix, MetricSet, PairTest};
use crate::models::History;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Outcome of one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema_version: u32,
    pub experiment: u8,
    pub dataset: String,
    pub model: String,
    pub metrics: MetricSet,
    /// Gold labels against predictions on the test split.
    pub wilcoxon: Vec<PairTest>,
    pub confusion: ConfusionMatrix,
    pub config: ExperimentConfig,
    pub sample_ids: Vec<String>,
    pub predictions: Vec<Sentiment>,
    pub golds: Vec<Sentiment>,
    pub history: History,
    pub train_size: usize,
    pub wall_clock_secs: f64,
    /// Artifact name to SHA-256 (hex).
    pub artifacts: BTreeMap<String, String>,
}

/// Writes the record as pretty JSON, creating parent directories.
pub fn persist(record: &ResultRecord, path: &Path) -> Result<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let json = serde_json::to_string_pretty(record)?;
    std::fs::write(path, json).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

pub fn load(path: &Path) -> Result<ResultRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            expected: SCHEMA_VERSION,
            found,
        });
    }
    Ok(serde_json::from_value(value)?)
}
