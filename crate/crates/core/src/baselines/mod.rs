//! Non-neural-reader systems restricted to non-stopword context words:
//! simple pickers, an n-gram model with optional cache and an LSTM language
//! model.

pub mod kneser_ney;
pub mod lstm_lm;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{extract_candidates, CandidateSet, Instance, Prediction};
use crate::resources::TokenSet;

pub use kneser_ney::{lm_score_blank, Cache, CacheConfig, NGramModel};
pub use lstm_lm::{LstmLm, LstmLmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    Random,
    First,
    Last,
    #[serde(rename = "mostfreq")]
    MostFrequent,
    Ngram,
    NgramCache,
    Lstm,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 7] = [
        BaselineKind::Random,
        BaselineKind::First,
        BaselineKind::Last,
        BaselineKind::MostFrequent,
        BaselineKind::Ngram,
        BaselineKind::NgramCache,
        BaselineKind::Lstm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BaselineKind::Random => "random",
            BaselineKind::First => "first",
            BaselineKind::Last => "last",
            BaselineKind::MostFrequent => "mostfreq",
            BaselineKind::Ngram => "ngram",
            BaselineKind::NgramCache => "ngram-cache",
            BaselineKind::Lstm => "lstm",
        }
    }

    pub fn picker(self) -> Option<Picker> {
        match self {
            BaselineKind::Random => Some(Picker::Random),
            BaselineKind::First => Some(Picker::First),
            BaselineKind::Last => Some(Picker::Last),
            BaselineKind::MostFrequent => Some(Picker::MostFrequent),
            _ => None,
        }
    }
}

impl std::fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for BaselineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown baseline {s:?}")))
    }
}

/// Candidate words with stopwords removed, or `None` if nothing remains.
pub fn lm_candidates(instance: &Instance, stopwords: &TokenSet, punctuation: &TokenSet) -> Option<CandidateSet> {
    let all = extract_candidates(instance, punctuation).ok()?;
    let kept = all.filter(|w| !stopwords.contains(w));
    (!kept.is_empty()).then_some(kept)
}

/// Context-position heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Picker {
    Random,
    First,
    Last,
    MostFrequent,
}

/// 64-bit FNV-1a, used to derive a per-instance random stream.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Picker {
    /// Rank the non-stopword context words; `None` means abstain.
    pub fn predict(
        self,
        instance: &Instance,
        stopwords: &TokenSet,
        punctuation: &TokenSet,
        seed: u64,
    ) -> Result<Option<Prediction>> {
        let Some(c) = lm_candidates(instance, stopwords, punctuation) else {
            return Ok(None);
        };
        let scores: Vec<f64> = match self {
            Picker::First => c.iter().map(|(_, p)| -(p[0] as f64)).collect(),
            Picker::Last => c.iter().map(|(_, p)| p[p.len() - 1] as f64).collect(),
            Picker::MostFrequent => c.iter().map(|(_, p)| p.len() as f64).collect(),
            Picker::Random => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(&instance.id));
                let mut order: Vec<usize> = (0..c.len()).collect();
                order.shuffle(&mut rng);
                let mut scores = vec![0.0; c.len()];
                for (rank, &i) in order.iter().enumerate() {
                    scores[i] = (c.len() - rank) as f64;
                }
                scores
            }
        };
        Prediction::rank(&c, &scores).map(Some)
    }
}
