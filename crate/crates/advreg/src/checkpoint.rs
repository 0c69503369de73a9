//! Self-describing JSON model checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use advreg_core::harness::TrainConfig;
use advreg_core::pcnn::ModelParams;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::config_hash;

pub const FORMAT: &str = "advreg-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: TrainConfig,
    /// `[rows, cols]` of every parameter block.
    pub shapes: BTreeMap<String, [usize; 2]>,
    pub model: ModelParams,
}

fn shapes(model: &ModelParams) -> BTreeMap<String, [usize; 2]> {
    let net = &model.net;
    let t = &model.tables;
    let blocks = [
        ("conv_filters", net.conv_filters.rows(), net.conv_filters.cols()),
        ("conv_bias", 1, net.conv_bias.len()),
        ("fc_w", net.fc_w.rows(), net.fc_w.cols()),
        ("fc_b", 1, net.fc_b.len()),
        ("words", t.words.rows(), t.words.cols()),
        ("pos", t.pos.rows(), t.pos.cols()),
        ("dep", t.dep.rows(), t.dep.cols()),
        ("dist", t.dist.rows(), t.dist.cols()),
    ];
    blocks.into_iter().map(|(k, r, c)| (k.to_owned(), [r, c])).collect()
}

impl Checkpoint {
    pub fn new(model: ModelParams, config: TrainConfig) -> Self {
        Self {
            format: FORMAT.to_owned(),
            version: VERSION,
            config_hash: config_hash(&config),
            shapes: shapes(&model),
            config,
            model,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).with_context(|| format!("writing checkpoint {}", path.display()))
    }

    /// Reads and validates a checkpoint, rebuilding vocabulary lookups.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
        let mut ck: Checkpoint =
            serde_json::from_str(&text).with_context(|| format!("parsing checkpoint {}", path.display()))?;
        if ck.format != FORMAT || ck.version != VERSION {
            bail!("{}: unsupported checkpoint {} v{}", path.display(), ck.format, ck.version);
        }
        if ck.config_hash != config_hash(&ck.config) {
            bail!("{}: config hash mismatch", path.display());
        }
        let actual = shapes(&ck.model);
        if actual != ck.shapes {
            bail!("{}: parameter shapes {actual:?} differ from header {:?}", path.display(), ck.shapes);
        }
        let t = &ck.model.tables;
        let width = t.layout.width();
        let consistent = ck.model.net.conv_filters.cols() == ck.config.window * width
            && t.words.rows() == t.word_vocab.rows()
            && t.pos.rows() == t.pos_vocab.rows()
            && t.dep.rows() == t.dep_vocab.rows();
        if !consistent {
            bail!("{}: parameter blocks are inconsistent with the feature layout", path.display());
        }
        ck.model.tables.reindex();
        Ok(ck)
    }
}
