use alloc::format;

use serde::{Deserialize, Serialize};

use crate::adversarial::AdvConfig;
use crate::encoder::DEFAULT_MAX_LEN;
use crate::error::{Error, Result};
use crate::pcnn::{DEFAULT_FILTERS, DEFAULT_WINDOW};
use crate::vat::VatConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    At,
    AtMulti,
    Vat,
    VatStar,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Baseline, Mode::At, Mode::AtMulti, Mode::Vat, Mode::VatStar];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::At => "at",
            Mode::AtMulti => "at_multi",
            Mode::Vat => "vat",
            Mode::VatStar => "vat_star",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_vat(self) -> bool {
        matches!(self, Mode::Vat | Mode::VatStar)
    }
}

impl core::fmt::Display for Mode {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub epochs: usize,
    pub batch_labeled: usize,
    pub lr0: f64,
    pub decay_rate: f64,
    pub decay_steps: usize,
    pub seed: u64,
    pub max_sentence_len: usize,
    pub filters: usize,
    pub window: usize,
    pub adv: AdvConfig,
    pub vat: VatConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            epochs: 200,
            batch_labeled: 128,
            lr0: 0.001,
            decay_rate: 0.95,
            decay_steps: 1000,
            seed: 1,
            max_sentence_len: DEFAULT_MAX_LEN,
            filters: DEFAULT_FILTERS,
            window: DEFAULT_WINDOW,
            adv: AdvConfig::default(),
            vat: VatConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("epochs", self.epochs),
            ("batch_labeled", self.batch_labeled),
            ("decay_steps", self.decay_steps),
            ("max_sentence_len", self.max_sentence_len),
            ("filters", self.filters),
            ("window", self.window),
        ];
        if let Some((key, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{key} must be positive")));
        }
        if self.window.is_multiple_of(2) {
            return Err(Error::Config(format!("window must be odd, got {}", self.window)));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) || !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return Err(Error::Config(format!("invalid learning-rate schedule lr0={} decay_rate={}", self.lr0, self.decay_rate)));
        }
        self.adv.validate()?;
        self.vat.validate()
    }

    /// Adversarial settings in effect: plain AT always uses one example.
    pub fn effective_adv(&self) -> AdvConfig {
        match self.mode {
            Mode::At => AdvConfig { m: 1, ..self.adv },
            _ => self.adv,
        }
    }
}

/// `lr0 · decay_rate^(step / decay_steps)` with a real-valued exponent.
pub fn lr_schedule(step: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * libm::pow(cfg.decay_rate, step as f64 / cfg.decay_steps as f64)
}
