//! Interpolated modified Kneser-Ney n-gram model and a token cache.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, Prediction};
use crate::resources::TokenSet;

use super::lm_candidates;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const DEFAULT_ORDER: usize = 4;
pub const FALLBACK_DISCOUNT: f64 = 0.75;

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct HistoryStats {
    /// Sum of adjusted counts of all continuations.
    total: f64,
    /// Continuations with adjusted count 1, 2 and ≥3.
    n: [f64; 3],
}

#[derive(Debug, Clone, Default)]
struct Level {
    counts: HashMap<Vec<u32>, u64>,
    histories: HashMap<Vec<u32>, HistoryStats>,
    discounts: [f64; 3],
}

impl Level {
    fn discount(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.discounts[0],
            2 => self.discounts[1],
            _ => self.discounts[2],
        }
    }
}

/// Discounts `[D1, D2, D3+]` from the count-of-counts `n[k-1] = #{count = k}`
/// for k = 1..=4, or `None` when they cannot be estimated.
pub fn estimate_discounts(n: [u64; 4]) -> Option<[f64; 3]> {
    if n.contains(&0) {
        return None;
    }
    let [n1, n2, n3, n4] = n.map(|x| x as f64);
    let y = n1 / (n1 + 2.0 * n2);
    let d = [
        1.0 - 2.0 * y * n2 / n1,
        2.0 - 3.0 * y * n3 / n2,
        3.0 - 4.0 * y * n4 / n3,
    ];
    let in_range = d.iter().enumerate().all(|(k, &dk)| dk > 0.0 && dk <= (k + 1) as f64);
    in_range.then_some(d)
}

/// An n-gram language model over sentence-delimited text.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    ids: HashMap<String, u32>,
    words: Vec<String>,
    /// `levels[n-1]` holds n-grams of order n.
    levels: Vec<Level>,
    fallback_orders: Vec<usize>,
}

impl NGramModel {
    /// Estimate from sentences; each is wrapped in `<s> … </s>`.
    pub fn train<I, S, W>(sentences: I, order: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = W>,
        W: AsRef<str>,
    {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        let mut model = NGramModel {
            order,
            ids: HashMap::new(),
            words: Vec::new(),
            levels: vec![Level::default(); order],
            fallback_orders: Vec::new(),
        };
        for w in [BOS, EOS, UNK] {
            model.intern(w);
        }
        let mut raw: Vec<HashMap<Vec<u32>, u64>> = vec![HashMap::new(); order];
        let mut tokens_seen = 0usize;
        for sentence in sentences {
            let mut seq = vec![BOS_ID];
            seq.extend(sentence.into_iter().map(|w| model.intern(w.as_ref())));
            seq.push(EOS_ID);
            tokens_seen += seq.len() - 2;
            for i in 1..seq.len() {
                for n in 1..=order.min(i + 1) {
                    *raw[n - 1].entry(seq[i + 1 - n..=i].to_vec()).or_insert(0) += 1;
                }
            }
        }
        if tokens_seen == 0 {
            return Err(Error::EmptyInput("n-gram training text"));
        }

        for n in (1..=order).rev() {
            let counts: HashMap<Vec<u32>, u64> = if n == order {
                raw[n - 1].clone()
            } else {
                // Continuation counts: distinct left extensions, except for
                // n-grams anchored at the sentence start.
                let mut c: HashMap<Vec<u32>, u64> = HashMap::new();
                for key in raw[n].keys() {
                    if key[1] != BOS_ID {
                        *c.entry(key[1..].to_vec()).or_insert(0) += 1;
                    }
                }
                for (key, &v) in &raw[n - 1] {
                    if key[0] == BOS_ID {
                        c.insert(key.clone(), v);
                    }
                }
                c
            };
            let mut coc = [0u64; 4];
            for &v in counts.values() {
                if (1..=4).contains(&v) {
                    coc[v as usize - 1] += 1;
                }
            }
            let discounts = estimate_discounts(coc).unwrap_or_else(|| {
                log::warn!(
                    "order-{n} count-of-counts {coc:?} do not support discount estimation; using {FALLBACK_DISCOUNT}"
                );
                model.fallback_orders.push(n);
                [FALLBACK_DISCOUNT; 3]
            });
            let mut histories: HashMap<Vec<u32>, HistoryStats> = HashMap::new();
            for (key, &v) in &counts {
                let h = histories.entry(key[..n - 1].to_vec()).or_default();
                h.total += v as f64;
                h.n[(v.min(3) - 1) as usize] += 1.0;
            }
            model.levels[n - 1] = Level {
                counts,
                histories,
                discounts,
            };
        }
        model.fallback_orders.sort_unstable();
        Ok(model)
    }

    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.ids.insert(w.to_string(), id);
        self.words.push(w.to_string());
        id
    }

    fn id(&self, w: &str) -> u32 {
        self.ids.get(w).copied().unwrap_or(UNK_ID)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Orders whose discounts fell back to the fixed value.
    pub fn fallback_orders(&self) -> &[usize] {
        &self.fallback_orders
    }

    pub fn discounts(&self, n: usize) -> [f64; 3] {
        self.levels[n - 1].discounts
    }

    /// Words that can be predicted: training types plus `</s>` and `<unk>`.
    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.words.iter().skip(1).map(String::as_str)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.words.len() - 1
    }

    /// `p(word | history)`; only the last `order − 1` history tokens matter
    /// and unknown words map to `<unk>`.
    pub fn prob<S: AsRef<str>>(&self, word: &str, history: &[S]) -> f64 {
        let w = self.id(word);
        let start = history.len().saturating_sub(self.order - 1);
        let h: Vec<u32> = history[start..].iter().map(|t| self.id(t.as_ref())).collect();
        self.prob_ids(w, &h)
    }

    fn prob_ids(&self, w: u32, h: &[u32]) -> f64 {
        let lower = if h.is_empty() {
            1.0 / self.vocabulary_size() as f64
        } else {
            self.prob_ids(w, &h[1..])
        };
        let level = &self.levels[h.len()];
        let Some(stats) = level.histories.get(h) else {
            return lower;
        };
        let mut key = h.to_vec();
        key.push(w);
        let c = level.counts.get(&key).copied().unwrap_or(0);
        let discounted = (c as f64 - level.discount(c)).max(0.0);
        let d = level.discounts;
        let gamma = d[0] * stats.n[0] + d[1] * stats.n[1] + d[2] * stats.n[2];
        (discounted + gamma * lower) / stats.total
    }
}

/// The most recent tokens, bounded in length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cache {
    capacity: usize,
    window: VecDeque<String>,
}

pub const DEFAULT_CACHE_SIZE: usize = 100;
pub const DEFAULT_CACHE_LAMBDA: f64 = 0.1;

impl Cache {
    pub fn new(capacity: usize) -> Self {
        Cache {
            capacity,
            window: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, token: &str) {
        if self.capacity == 0 {
            return;
        }
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(token.to_string());
    }

    pub fn extend<I: IntoIterator<Item = S>, S: AsRef<str>>(&mut self, tokens: I) {
        for t in tokens {
            self.push(t.as_ref());
        }
    }

    pub fn window(&self) -> impl Iterator<Item = &str> {
        self.window.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    /// Relative frequency of `word` in the window.
    pub fn prob(&self, word: &str) -> f64 {
        if self.window.is_empty() {
            return 0.0;
        }
        self.window.iter().filter(|t| *t == word).count() as f64 / self.window.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CacheConfig {
    pub size: usize,
    pub lambda: f64,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            size: DEFAULT_CACHE_SIZE,
            lambda: DEFAULT_CACHE_LAMBDA,
        }
    }
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("cache weight {} outside [0, 1]", self.lambda)));
        }
        Ok(())
    }
}

/// Score each non-stopword context word by its probability at the blank given
/// the target sentence so far. Returns `None` when nothing is left to score.
pub fn lm_score_blank(
    model: &NGramModel,
    instance: &Instance,
    stopwords: &TokenSet,
    punctuation: &TokenSet,
    cache: Option<&CacheConfig>,
) -> Result<Option<Prediction>> {
    let Some(candidates) = lm_candidates(instance, stopwords, punctuation) else {
        return Ok(None);
    };
    let mut history: Vec<&str> = vec![BOS];
    history.extend(instance.query_prefix().iter().map(String::as_str));
    let window = cache.map(|cfg| {
        let mut c = Cache::new(cfg.size);
        c.extend(instance.context.iter().flatten());
        c.extend(instance.query_prefix());
        (c, cfg.lambda)
    });
    let scores: Vec<f64> = candidates
        .words()
        .map(|w| {
            let p = model.prob(w, &history);
            match &window {
                Some((c, lambda)) => (1.0 - lambda) * p + lambda * c.prob(w),
                None => p,
            }
        })
        .collect();
    Prediction::rank(&candidates, &scores).map(Some)
}
