//! Training configuration and its `key = value` file form.
//!
//! ```text
//! # comments and blank lines are ignored
//! lr = 5e-4
//! batch_size = 64
//! fusion_set = vision_linear,text_linear
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::fusion::{HeadKind, DEFAULT_KEY_DIM, DEFAULT_THRESHOLD};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
    /// Apply log-ratio class weights to the loss.
    pub weighting: bool,
    /// Heads whose logits are averaged for fused predictions.
    pub fusion_set: Vec<HeadKind>,
    pub key_dim: usize,
    pub threshold: f64,
    pub pseudo_rounds: usize,
    /// Minimum validation macro-F1 gain for a pseudo-label round to count.
    pub pseudo_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            batch_size: 64,
            max_epochs: 40,
            patience: 5,
            seed: 0,
            weighting: true,
            fusion_set: vec![HeadKind::VisionLinear, HeadKind::TextLinear],
            key_dim: DEFAULT_KEY_DIM,
            threshold: DEFAULT_THRESHOLD,
            pseudo_rounds: 5,
            pseudo_eps: 1e-4,
        }
    }
}

pub const CONFIG_KEYS: [&str; 11] = [
    "lr",
    "batch_size",
    "max_epochs",
    "patience",
    "seed",
    "weighting",
    "fusion_set",
    "key_dim",
    "threshold",
    "pseudo_rounds",
    "pseudo_eps",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Parse(format!("bad value `{value}` for `{key}`")))
}

pub fn parse_fusion_set(value: &str) -> Result<Vec<HeadKind>> {
    let kinds = value
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<HeadKind>>>()?;
    if kinds.is_empty() {
        return Err(Error::Parse("empty fusion set".into()));
    }
    Ok(kinds)
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "lr" => self.lr = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "weighting" => {
                self.weighting = match value {
                    "true" | "on" | "1" => true,
                    "false" | "off" | "0" => false,
                    _ => return Err(Error::Parse(format!("bad value `{value}` for `weighting`"))),
                }
            }
            "fusion_set" => self.fusion_set = parse_fusion_set(value)?,
            "key_dim" => self.key_dim = parse(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "pseudo_rounds" => self.pseudo_rounds = parse(key, value)?,
            "pseudo_eps" => self.pseudo_eps = parse(key, value)?,
            _ => return Err(Error::Parse(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", no + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be finite and >= 0, got {}", self.lr));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.key_dim == 0 {
            return bad("key_dim must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.threshold) {
            return bad(format!("threshold must lie in [0, 1), got {}", self.threshold));
        }
        if self.fusion_set.is_empty() {
            return bad("fusion_set must name at least one head".into());
        }
        if self.pseudo_eps.is_nan() || self.pseudo_eps < 0.0 {
            return bad("pseudo_eps must be >= 0".into());
        }
        Ok(())
    }
}
