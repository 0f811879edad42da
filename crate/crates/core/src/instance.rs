//! The cloze instance and its candidate answers.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::resources::TokenSet;
use crate::text::Sentence;

/// Phenomenon tags used for per-label accuracy slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhenomenonLabel {
    #[serde(rename = "single name cue")]
    SingleNameCue,
    #[serde(rename = "simple speaker tracking")]
    SimpleSpeakerTracking,
    #[serde(rename = "basic reference")]
    BasicReference,
    #[serde(rename = "discourse inference rule")]
    DiscourseInferenceRule,
    #[serde(rename = "semantic trigger")]
    SemanticTrigger,
    #[serde(rename = "coreference")]
    Coreference,
    #[serde(rename = "external knowledge")]
    ExternalKnowledge,
}

impl PhenomenonLabel {
    pub const ALL: [PhenomenonLabel; 7] = [
        PhenomenonLabel::SingleNameCue,
        PhenomenonLabel::SimpleSpeakerTracking,
        PhenomenonLabel::BasicReference,
        PhenomenonLabel::DiscourseInferenceRule,
        PhenomenonLabel::SemanticTrigger,
        PhenomenonLabel::Coreference,
        PhenomenonLabel::ExternalKnowledge,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PhenomenonLabel::SingleNameCue => "single name cue",
            PhenomenonLabel::SimpleSpeakerTracking => "simple speaker tracking",
            PhenomenonLabel::BasicReference => "basic reference",
            PhenomenonLabel::DiscourseInferenceRule => "discourse inference rule",
            PhenomenonLabel::SemanticTrigger => "semantic trigger",
            PhenomenonLabel::Coreference => "coreference",
            PhenomenonLabel::ExternalKnowledge => "external knowledge",
        }
    }
}

impl fmt::Display for PhenomenonLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One cloze example: context sentences followed by a target sentence
/// whose final token is the word to predict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub context: Vec<Sentence>,
    pub target_sentence: Sentence,
    pub target_word: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<PhenomenonLabel>>,
}

impl Instance {
    /// Build an instance whose target word is the last token of `target_sentence`.
    pub fn new(id: impl Into<String>, context: Vec<Sentence>, target_sentence: Sentence) -> Result<Self> {
        let target_word = target_sentence
            .last()
            .cloned()
            .ok_or_else(|| Error::MalformedPassage("empty target sentence".into()))?;
        Ok(Instance {
            id: id.into(),
            context,
            target_sentence,
            target_word,
            labels: None,
        })
    }

    /// Structural checks shared by every loader.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.context.is_empty() {
            return Err("context has no sentences".into());
        }
        for (i, s) in self.context.iter().enumerate() {
            if s.is_empty() {
                return Err(format!("context sentence {i} is empty"));
            }
        }
        let all = self.context.iter().flatten().chain(self.target_sentence.iter());
        for tok in all {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(format!("invalid token {tok:?}"));
            }
        }
        match self.target_sentence.last() {
            None => Err("target sentence is empty".into()),
            Some(last) if *last != self.target_word => Err(format!(
                "target_word {:?} is not the final token of target_sentence ({last:?})",
                self.target_word
            )),
            Some(_) => Ok(()),
        }
    }

    /// The context as one token sequence.
    pub fn flat_context(&self) -> Vec<&str> {
        self.context.iter().flatten().map(String::as_str).collect()
    }

    pub fn context_len(&self) -> usize {
        self.context.iter().map(Vec::len).sum()
    }

    /// Target sentence with the target word removed.
    pub fn query_prefix(&self) -> &[String] {
        &self.target_sentence[..self.target_sentence.len().saturating_sub(1)]
    }

    pub fn answer_in_context(&self) -> bool {
        self.context.iter().flatten().any(|t| *t == self.target_word)
    }

    /// Passage rendering: all sentences joined by single spaces.
    pub fn render(&self) -> String {
        self.context
            .iter()
            .flatten()
            .chain(self.target_sentence.iter())
            .map(String::as_str)
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// Candidate answers: distinct non-punctuation context tokens mapped to
/// their positions in the flattened context, in first-occurrence order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CandidateSet {
    entries: IndexMap<String, Vec<usize>>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn positions(&self, token: &str) -> Option<&[usize]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.entries.contains_key(token)
    }

    /// Index of `token` in first-occurrence order.
    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.entries.get_index_of(token)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get_index(&self, i: usize) -> Option<(&str, &[usize])> {
        self.entries.get_index(i).map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// The candidates for which `keep` holds, order preserved.
    pub fn filter(&self, keep: impl Fn(&str) -> bool) -> CandidateSet {
        CandidateSet {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| keep(k))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Position of the first occurrence of `token`, used for tie-breaking.
    pub fn first_position(&self, token: &str) -> Option<usize> {
        self.entries.get(token).and_then(|p| p.first().copied())
    }
}

/// List every distinct non-punctuation context token with its positions.
pub fn extract_candidates(instance: &Instance, punctuation: &TokenSet) -> Result<CandidateSet> {
    let mut entries: IndexMap<String, Vec<usize>> = IndexMap::new();
    for (pos, tok) in instance.context.iter().flatten().enumerate() {
        if punctuation.contains(tok) {
            continue;
        }
        entries.entry(tok.clone()).or_default().push(pos);
    }
    if entries.is_empty() {
        return Err(Error::DegenerateInstance {
            id: instance.id.clone(),
        });
    }
    Ok(CandidateSet { entries })
}

/// Candidates ranked by descending score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ranked: Vec<(String, f64)>,
}

impl Prediction {
    /// Rank `candidates` by `scores` (one per candidate, in candidate order).
    /// Equal scores keep first-occurrence order, so the earlier mention wins.
    pub fn rank(candidates: &CandidateSet, scores: &[f64]) -> Result<Self> {
        if scores.len() != candidates.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} candidates",
                scores.len(),
                candidates.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
            return Err(Error::NonFinite(format!("candidate score {bad}")));
        }
        let mut ranked: Vec<(String, f64)> = candidates
            .words()
            .map(String::from)
            .zip(scores.iter().copied())
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(Prediction { ranked })
    }

    pub fn best(&self) -> Option<&str> {
        self.ranked.first().map(|(w, _)| w.as_str())
    }

    /// 1-based rank of `word`, if it was a candidate.
    pub fn rank_of(&self, word: &str) -> Option<usize> {
        self.ranked.iter().position(|(w, _)| w == word).map(|i| i + 1)
    }

    pub fn top(&self, k: usize) -> impl Iterator<Item = &str> {
        self.ranked.iter().take(k).map(|(w, _)| w.as_str())
    }
}
