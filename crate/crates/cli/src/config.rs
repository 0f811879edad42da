//! The shared TOML configuration file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use cloze_core::baselines::{CacheConfig, LstmLmConfig};
use cloze_core::numeric::{CellKind, OptimizerConfig};
use cloze_core::readers::{ReaderConfig, ReaderKind};
use cloze_core::resources::{self, TokenSet};
use cloze_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Floating-point width for training and inference.
    pub precision: Precision,
    /// Seed used when a command gets no `--seed`.
    pub seed: u64,
    pub reader: ReaderSection,
    pub train: TrainSection,
    pub lm: LmSection,
    pub resources: ResourceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReaderSection {
    pub cell: CellKind,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Gated-attention hops.
    pub hops: usize,
    pub unit_gates: bool,
    /// Words rarer than this in the training set map to the unknown token.
    pub min_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmSection {
    pub order: usize,
    pub cache_size: usize,
    /// Cache interpolation weight.
    pub lambda: f64,
    pub lstm_embed_dim: usize,
    pub lstm_hidden_dim: usize,
    /// Fraction of LSTM training instances held out for early stopping.
    pub lstm_dev_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ResourceSection {
    /// Punctuation list, one token per line; the bundled list when unset.
    pub punctuation: Option<PathBuf>,
    /// Stopword list, one token per line; the bundled list when unset.
    pub stopwords: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            precision: Precision::F32,
            seed: 0,
            reader: ReaderSection::default(),
            train: TrainSection::default(),
            lm: LmSection::default(),
            resources: ResourceSection::default(),
        }
    }
}

impl Default for ReaderSection {
    fn default() -> Self {
        let r = ReaderConfig::new(ReaderKind::GatedAttention);
        ReaderSection {
            cell: r.cell,
            embed_dim: r.embed_dim,
            hidden_dim: r.hidden_dim,
            hops: r.hops,
            unit_gates: r.unit_gates,
            min_count: 1,
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            patience: t.patience,
            optimizer: t.optimizer,
        }
    }
}

impl Default for LmSection {
    fn default() -> Self {
        let c = CacheConfig::default();
        let l = LstmLmConfig::default();
        LmSection {
            order: cloze_core::baselines::kneser_ney::DEFAULT_ORDER,
            cache_size: c.size,
            lambda: c.lambda,
            lstm_embed_dim: l.embed_dim,
            lstm_hidden_dim: l.hidden_dim,
            lstm_dev_fraction: 0.05,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Config::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {e}", path.display())).into())
    }

    pub fn reader(&self, kind: ReaderKind, features: bool) -> ReaderConfig {
        ReaderConfig {
            kind,
            features,
            cell: self.reader.cell,
            embed_dim: self.reader.embed_dim,
            hidden_dim: self.reader.hidden_dim,
            hops: self.reader.hops,
            unit_gates: self.reader.unit_gates,
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: self.train.max_epochs,
            batch_size: self.train.batch_size,
            seed,
            patience: self.train.patience,
            optimizer: self.train.optimizer,
        }
    }

    pub fn cache(&self, lambda: Option<f64>) -> CacheConfig {
        CacheConfig {
            size: self.lm.cache_size,
            lambda: lambda.unwrap_or(self.lm.lambda),
        }
    }

    pub fn lstm(&self) -> LstmLmConfig {
        LstmLmConfig {
            embed_dim: self.lm.lstm_embed_dim,
            hidden_dim: self.lm.lstm_hidden_dim,
        }
    }

    pub fn punctuation(&self) -> Result<Arc<TokenSet>> {
        match &self.resources.punctuation {
            Some(p) => Ok(Arc::new(TokenSet::load(p, false)?)),
            None => Ok(resources::punctuation()),
        }
    }

    pub fn stopwords(&self) -> Result<Arc<TokenSet>> {
        match &self.resources.stopwords {
            Some(p) => Ok(Arc::new(TokenSet::load(p, true)?)),
            None => Ok(resources::stopwords()),
        }
    }

    /// The defaults as a TOML document, shown in `--help`.
    pub fn defaults_toml() -> String {
        toml::to_string(&Config::default()).expect("defaults serialize")
    }
}
