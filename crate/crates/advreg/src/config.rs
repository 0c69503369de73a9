//! Training configuration files: flat `key = value` lines or JSON, with
//! nested objects flattened into dotted keys.

use std::collections::BTreeMap;
use std::path::Path;

use advreg_core::encoder::PerturbScope;
use advreg_core::harness::{Mode, TrainConfig};
use anyhow::{anyhow, bail, Context, Result};
use serde_json::Value;
use sha2::{Digest, Sha256};

/// Canonical key names, in output order.
pub const KEYS: [&str; 23] = [
    "mode",
    "epochs",
    "batch_labeled",
    "lr0",
    "decay_rate",
    "decay_steps",
    "seed",
    "max_sentence_len",
    "filters",
    "window",
    "adv.epsilon",
    "adv.scope",
    "adv.M",
    "adv.jitter_ratio",
    "adv.alpha",
    "vat.eps_embedding",
    "vat.eps_other",
    "vat.xi",
    "vat.power_iters",
    "vat.lambda",
    "vat.unlabeled_ratio",
    "vat.unlabeled_batch",
    "vat.star",
];

/// Lower-cased with underscores removed, so `batchLabeled` and
/// `batch_labeled` name the same key.
fn normalize(key: &str) -> String {
    key.trim().chars().filter(|&c| c != '_').flat_map(char::to_lowercase).collect()
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) -> Result<()> {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out)?;
            }
        }
        Value::String(s) => out.push((prefix.to_owned(), s.clone())),
        Value::Number(n) => out.push((prefix.to_owned(), n.to_string())),
        Value::Bool(b) => out.push((prefix.to_owned(), b.to_string())),
        other => bail!("config key {prefix:?}: unsupported value {other}"),
    }
    Ok(())
}

/// `(key, value)` pairs in file order.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    if text.trim_start().starts_with('{') {
        let v: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        flatten("", &v, &mut out)?;
        return Ok(out);
    }
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("config line {}: expected key = value", i + 1))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| anyhow!("config key {key}: invalid value {value:?}: {e}"))
}

/// Sets one key on `cfg`.
pub fn apply(cfg: &mut TrainConfig, key: &str, value: &str) -> Result<()> {
    match normalize(key).as_str() {
        "mode" => cfg.mode = Mode::parse(value).ok_or_else(|| anyhow!("unknown mode {value:?}"))?,
        "epochs" => cfg.epochs = num(key, value)?,
        "batchlabeled" => cfg.batch_labeled = num(key, value)?,
        "lr0" => cfg.lr0 = num(key, value)?,
        "decayrate" => cfg.decay_rate = num(key, value)?,
        "decaysteps" => cfg.decay_steps = num(key, value)?,
        "seed" => cfg.seed = num(key, value)?,
        "maxsentencelen" => cfg.max_sentence_len = num(key, value)?,
        "filters" => cfg.filters = num(key, value)?,
        "window" => cfg.window = num(key, value)?,
        "adv.epsilon" => cfg.adv.epsilon = num(key, value)?,
        "adv.scope" => {
            cfg.adv.scope = match value {
                "embedding" => PerturbScope::Embedding,
                "all" => PerturbScope::All,
                _ => bail!("adv.scope must be embedding or all, got {value:?}"),
            }
        }
        "adv.m" => cfg.adv.m = num(key, value)?,
        "adv.jitterratio" => cfg.adv.jitter_ratio = num(key, value)?,
        "adv.alpha" => cfg.adv.alpha = num(key, value)?,
        "vat.epsembedding" => cfg.vat.eps_embedding = num(key, value)?,
        "vat.epsother" => cfg.vat.eps_other = num(key, value)?,
        "vat.xi" => cfg.vat.xi = num(key, value)?,
        "vat.poweriters" => cfg.vat.power_iters = num(key, value)?,
        "vat.lambda" => cfg.vat.lambda = num(key, value)?,
        "vat.unlabeledratio" => cfg.vat.unlabeled_ratio = num(key, value)?,
        "vat.unlabeledbatch" => cfg.vat.unlabeled_batch = num(key, value)?,
        "vat.star" => cfg.vat.star = num(key, value)?,
        _ => bail!("unknown config key {key:?}"),
    }
    Ok(())
}

/// Applies `pairs` in order over `base` and validates the result.
pub fn build(base: TrainConfig, pairs: &[(String, String)]) -> Result<TrainConfig> {
    let mut cfg = base;
    for (k, v) in pairs {
        apply(&mut cfg, k, v)?;
    }
    if cfg.vat.star && cfg.mode == Mode::Vat {
        cfg.mode = Mode::VatStar;
    }
    cfg.vat.star = cfg.mode == Mode::VatStar;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_pairs(&text).with_context(|| format!("in config {}", path.display()))
}

fn scope_name(s: PerturbScope) -> &'static str {
    match s {
        PerturbScope::Embedding => "embedding",
        PerturbScope::All => "all",
    }
}

/// Every key with its value, in [`KEYS`] order.
pub fn to_pairs(cfg: &TrainConfig) -> BTreeMap<&'static str, String> {
    let values = [
        cfg.mode.name().to_owned(),
        cfg.epochs.to_string(),
        cfg.batch_labeled.to_string(),
        format!("{:?}", cfg.lr0),
        format!("{:?}", cfg.decay_rate),
        cfg.decay_steps.to_string(),
        cfg.seed.to_string(),
        cfg.max_sentence_len.to_string(),
        cfg.filters.to_string(),
        cfg.window.to_string(),
        format!("{:?}", cfg.adv.epsilon),
        scope_name(cfg.adv.scope).to_owned(),
        cfg.adv.m.to_string(),
        format!("{:?}", cfg.adv.jitter_ratio),
        format!("{:?}", cfg.adv.alpha),
        format!("{:?}", cfg.vat.eps_embedding),
        format!("{:?}", cfg.vat.eps_other),
        format!("{:?}", cfg.vat.xi),
        cfg.vat.power_iters.to_string(),
        format!("{:?}", cfg.vat.lambda),
        cfg.vat.unlabeled_ratio.to_string(),
        cfg.vat.unlabeled_batch.to_string(),
        cfg.vat.star.to_string(),
    ];
    KEYS.into_iter().zip(values).collect()
}

/// `key = value` text that [`parse_pairs`] reads back to `cfg`.
pub fn to_text(cfg: &TrainConfig) -> String {
    let pairs = to_pairs(cfg);
    KEYS.iter().map(|k| format!("{k} = {}\n", pairs[k])).collect()
}

/// Hex SHA-256 of the canonical `key = value` text.
pub fn config_hash(cfg: &TrainConfig) -> String {
    hex::encode(Sha256::digest(to_text(cfg).as_bytes()))
}
