use crate::error::{Error, Result};
use crate::scoring::{ScoringKind, ScoringModel};
use crate::text::{EncoderKind, EncoderSpec};

use super::LossKind;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub lr: f64,
    pub l2: f64,
    /// Corruptions per positive.
    pub negatives: usize,
    pub batch_size: usize,
    pub epochs: usize,
    /// Description length in tokens, including CLS and SEP.
    pub max_len: usize,
    pub warmup: f64,
    pub seed: u64,
    pub scoring: ScoringModel,
    pub encoder: EncoderSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Margin,
            lr: 1e-3,
            l2: 0.0,
            negatives: 64,
            batch_size: 64,
            epochs: 40,
            max_len: 32,
            warmup: 0.2,
            seed: 0,
            scoring: ScoringModel::default(),
            encoder: EncoderSpec::default(),
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in manifest order.
pub const CONFIG_KEYS: &[&str] = &[
    "loss",
    "lr",
    "l2",
    "negatives",
    "batch_size",
    "epochs",
    "max_len",
    "warmup",
    "seed",
    "model",
    "p_norm",
    "encoder",
    "dim",
    "word_dim",
    "hidden",
    "layers",
    "heads",
    "ffn",
    "max_positions",
    "conv_channels",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return fail("l2 must be non-negative");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch_size and epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup) {
            return fail("warmup must lie in [0, 1)");
        }
        if self.max_len < 3 {
            return fail("max_len must be at least 3");
        }
        self.encoder.validate()?;
        if self.encoder.kind == EncoderKind::Transformer
            && self.max_len > self.encoder.max_positions
        {
            return Err(Error::Config(format!(
                "max_len {} exceeds max_positions {}",
                self.max_len, self.encoder.max_positions
            )));
        }
        self.scoring.validate(self.encoder.dim)
    }

    /// Sets one field from its textual form. Unknown keys are rejected.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.encoder;
        match key {
            "loss" => self.loss = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "l2" => self.l2 = parse(key, value)?,
            "negatives" => self.negatives = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "warmup" => self.warmup = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "model" => self.scoring.kind = value.trim().parse::<ScoringKind>()?,
            "p_norm" => self.scoring.p_norm = parse(key, value)?,
            "encoder" => e.kind = value.trim().parse()?,
            "dim" => e.dim = parse(key, value)?,
            "word_dim" => e.word_dim = parse(key, value)?,
            "hidden" => e.hidden = parse(key, value)?,
            "layers" => e.layers = parse(key, value)?,
            "heads" => e.heads = parse(key, value)?,
            "ffn" => e.ffn = parse(key, value)?,
            "max_positions" => e.max_positions = parse(key, value)?,
            "conv_channels" => e.conv_channels = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let e = &self.encoder;
        Some(match key {
            "loss" => self.loss.to_string(),
            "lr" => self.lr.to_string(),
            "l2" => self.l2.to_string(),
            "negatives" => self.negatives.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "max_len" => self.max_len.to_string(),
            "warmup" => self.warmup.to_string(),
            "seed" => self.seed.to_string(),
            "model" => self.scoring.kind.to_string(),
            "p_norm" => self.scoring.p_norm.to_string(),
            "encoder" => e.kind.to_string(),
            "dim" => e.dim.to_string(),
            "word_dim" => e.word_dim.to_string(),
            "hidden" => e.hidden.to_string(),
            "layers" => e.layers.to_string(),
            "heads" => e.heads.to_string(),
            "ffn" => e.ffn.to_string(),
            "max_positions" => e.max_positions.to_string(),
            "conv_channels" => e.conv_channels.to_string(),
            _ => return None,
        })
    }

    pub fn to_pairs(&self) -> Vec<(String, String)> {
        CONFIG_KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("listed key")))
            .collect()
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (k, v) in pairs {
            c.set(k, v)?;
        }
        Ok(c)
    }
}
