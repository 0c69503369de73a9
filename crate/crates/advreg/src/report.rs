//! Machine-readable result files. Every field except `wall_clock_secs` is a
//! function of the inputs, configuration and seed.

use std::collections::BTreeMap;
use std::path::Path;

use advreg_core::harness::{CvReport, EpochRecord, FoldRecord, MeanMetrics, Metrics, TrainConfig};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{config_hash, to_pairs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub command: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub config: BTreeMap<String, String>,
    /// SHA-256 of each input file, keyed by role.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<EpochRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub folds: Vec<FoldRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_repeat: Vec<Metrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<MeanMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Metrics>,
    /// Command-specific output.
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub details: serde_json::Value,
    pub wall_clock_secs: f64,
}

impl ResultFile {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: None,
            config_hash: None,
            config: BTreeMap::new(),
            inputs: BTreeMap::new(),
            history: Vec::new(),
            folds: Vec::new(),
            per_repeat: Vec::new(),
            aggregate: None,
            metrics: None,
            details: serde_json::Value::Null,
            wall_clock_secs: 0.0,
        }
    }

    pub fn with_config(mut self, cfg: &TrainConfig) -> Self {
        self.seed = Some(cfg.seed);
        self.config_hash = Some(config_hash(cfg));
        self.config = to_pairs(cfg).into_iter().map(|(k, v)| (k.to_owned(), v)).collect();
        self
    }

    pub fn with_input(mut self, role: &str, path: &Path) -> Result<Self> {
        self.inputs.insert(role.to_owned(), file_digest(path)?);
        Ok(self)
    }

    pub fn with_cv(mut self, report: CvReport) -> Self {
        self.folds = report.folds;
        self.per_repeat = report.per_repeat;
        self.aggregate = Some(report.mean);
        self.details = serde_json::json!({ "k": report.k, "repeats": report.repeats });
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result files serialize");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).with_context(|| format!("writing result {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading result {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing result {}", path.display()))
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
