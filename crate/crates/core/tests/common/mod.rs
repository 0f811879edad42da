#![allow(dead_code)]

use std::collections::BTreeSet;

use cloze_core::numeric::Tensor;
use cloze_core::readers::{Reader, ReaderConfig, ReaderKind};
use cloze_core::text::Document;
use cloze_core::{Instance, Vocab};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

/// Modified Kneser-Ney computed straight from the definitions by scanning
/// n-gram occurrence lists.
pub struct KnOracle {
    order: usize,
    /// `grams[n-1]`: every n-gram occurrence, duplicates included.
    grams: Vec<Vec<Vec<String>>>,
    pub vocab: Vec<String>,
}

impl KnOracle {
    pub fn new(sentences: &[Vec<String>], order: usize) -> Self {
        let mut grams = vec![Vec::new(); order];
        let mut types = BTreeSet::new();
        for s in sentences {
            let mut seq = vec!["<s>".to_string()];
            seq.extend(s.iter().cloned());
            seq.push("</s>".to_string());
            for w in s {
                types.insert(w.clone());
            }
            for end in 1..seq.len() {
                for n in 1..=order {
                    if n <= end + 1 {
                        grams[n - 1].push(seq[end + 1 - n..=end].to_vec());
                    }
                }
            }
        }
        types.insert("</s>".to_string());
        types.insert("<unk>".to_string());
        KnOracle {
            order,
            grams,
            vocab: types.into_iter().collect(),
        }
    }

    fn raw(&self, g: &[String]) -> usize {
        self.grams[g.len() - 1].iter().filter(|x| x.as_slice() == g).count()
    }

    fn adjusted(&self, g: &[String]) -> usize {
        if g.len() == self.order || g[0] == "<s>" {
            return self.raw(g);
        }
        let lefts: BTreeSet<&String> = self.grams[g.len()]
            .iter()
            .filter(|x| &x[1..] == g)
            .map(|x| &x[0])
            .collect();
        lefts.len()
    }

    fn distinct(&self, n: usize) -> BTreeSet<Vec<String>> {
        self.grams[n - 1].iter().cloned().collect()
    }

    pub fn discounts(&self, n: usize) -> [f64; 3] {
        let mut coc = [0usize; 4];
        for g in self.distinct(n) {
            let c = self.adjusted(&g);
            if (1..=4).contains(&c) {
                coc[c - 1] += 1;
            }
        }
        if coc.contains(&0) {
            return [0.75; 3];
        }
        let [n1, n2, n3, n4] = coc.map(|x| x as f64);
        let y = n1 / (n1 + 2.0 * n2);
        let d = [
            1.0 - 2.0 * y * n2 / n1,
            2.0 - 3.0 * y * n3 / n2,
            3.0 - 4.0 * y * n4 / n3,
        ];
        if d.iter().enumerate().any(|(k, &x)| x <= 0.0 || x > (k + 1) as f64) {
            return [0.75; 3];
        }
        d
    }

    pub fn prob(&self, w: &str, history: &[String]) -> f64 {
        let known = |t: &String| {
            if t == "<s>" || self.vocab.contains(t) {
                t.clone()
            } else {
                "<unk>".to_string()
            }
        };
        let start = history.len().saturating_sub(self.order - 1);
        let h: Vec<String> = history[start..].iter().map(known).collect();
        self.p(&known(&w.to_string()), &h)
    }

    fn p(&self, w: &String, h: &[String]) -> f64 {
        let lower = if h.is_empty() {
            1.0 / self.vocab.len() as f64
        } else {
            self.p(w, &h[1..])
        };
        let n = h.len() + 1;
        let continuations: Vec<Vec<String>> = self.distinct(n).into_iter().filter(|g| &g[..n - 1] == h).collect();
        if continuations.is_empty() {
            return lower;
        }
        let d = self.discounts(n);
        let disc = |c: usize| match c {
            0 => 0.0,
            1 => d[0],
            2 => d[1],
            _ => d[2],
        };
        let mut total = 0.0;
        let mut gamma = 0.0;
        let mut mine = 0.0;
        for g in &continuations {
            let c = self.adjusted(g);
            total += c as f64;
            gamma += disc(c);
            if &g[n - 1] == w {
                mine = (c as f64 - disc(c)).max(0.0);
            }
        }
        (mine + gamma * lower) / total
    }

    /// Every history observed in training, at every length below the order.
    pub fn histories(&self) -> BTreeSet<Vec<String>> {
        let mut out = BTreeSet::new();
        out.insert(Vec::new());
        for n in 2..=self.order {
            for g in &self.grams[n - 1] {
                out.insert(g[..n - 1].to_vec());
            }
        }
        out
    }
}

/// Sentences over a small skewed vocabulary.
pub fn random_corpus(seed: u64, tokens: usize, types: usize) -> Vec<Vec<String>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut used = 0;
    while used < tokens {
        let len = rng.gen_range(2..=8).min(tokens - used).max(1);
        let s = (0..len)
            .map(|_| {
                // Squaring skews toward low indices so counts vary.
                let u: f64 = rng.gen();
                format!("w{}", ((u * u) * types as f64) as usize)
            })
            .collect();
        used += len;
        out.push(s);
    }
    out
}

pub fn small_config(kind: ReaderKind, features: bool) -> ReaderConfig {
    ReaderConfig {
        kind,
        features,
        embed_dim: 6,
        hidden_dim: 3,
        hops: 2,
        ..ReaderConfig::new(kind)
    }
}

pub fn reader_for(instances: &[Instance], config: ReaderConfig, seed: u64) -> Reader<f64> {
    Reader::new(config, Vocab::from_instances(instances, 1), seed).unwrap()
}

/// A gated-attention reader whose single hop reuses an attention-sum
/// reader's parameters.
pub fn ga_from_as(reader: &Reader<f64>) -> Reader<f64> {
    let mut params = cloze_core::numeric::ParamStore::new();
    for (_, name, t) in reader.params.iter() {
        let renamed = if name.starts_with("doc.") || name.starts_with("query.") {
            format!("hop0.{name}")
        } else {
            name.to_string()
        };
        params.add(renamed, t.clone()).unwrap();
    }
    let config = ReaderConfig {
        kind: ReaderKind::GatedAttention,
        hops: 1,
        unit_gates: true,
        ..reader.config
    };
    Reader::from_parts(config, reader.vocab.clone(), params).unwrap()
}

/// Stanford reader with `output := embed` and the modified reader sharing
/// all other parameters with `W_out = I`.
pub fn stanford_pair(reader: &Reader<f64>) -> (Reader<f64>, Reader<f64>) {
    assert_eq!(reader.config.embed_dim, 2 * reader.config.hidden_dim);
    let embed = reader.params.by_name("embed").unwrap().clone();
    let mut stanford = reader.params.clone();
    stanford.set("output", embed).unwrap();
    let mut modified = cloze_core::numeric::ParamStore::new();
    for (_, name, t) in reader.params.iter() {
        if name != "output" {
            modified.add(name, t.clone()).unwrap();
        }
    }
    modified
        .add("W_out", Tensor::identity(reader.config.embed_dim))
        .unwrap();
    let s = Reader::from_parts(reader.config, reader.vocab.clone(), stanford).unwrap();
    let m_config = ReaderConfig {
        kind: ReaderKind::StanfordModified,
        ..reader.config
    };
    let m = Reader::from_parts(m_config, reader.vocab.clone(), modified).unwrap();
    (s, m)
}

/// The hand-built builder corpus: three documents of ten sentences. Each
/// sentence has `n` unique filler words, a chosen last word and a period.
pub fn builder_corpus() -> Vec<Document> {
    let plan: [(&str, [(usize, &str); 10]); 3] = [
        (
            "alpha",
            [
                (11, "river"),
                (13, "stone"),
                (9, "bread"),
                (14, "lamp"),
                (12, "river"),
                (12, "door"),
                (8, "stone"),
                (12, "moon"),
                (13, "stone"),
                (15, "moon"),
            ],
        ),
        (
            "beta",
            [
                (5, "owl"),
                (7, "fox"),
                (8, "owl"),
                (9, "wolf"),
                (10, "bear"),
                (9, "fox"),
                (11, "hare"),
                (10, "owl"),
                (12, "deer"),
                (9, "wolf"),
            ],
        ),
        (
            "gamma",
            [
                (12, "coat"),
                (12, "hat"),
                (12, "boot"),
                (12, "scarf"),
                (10, "glove"),
                (11, "coat"),
                (12, "hat"),
                (12, "hat"),
                (9, "belt"),
                (13, "boot"),
            ],
        ),
    ];
    plan.iter()
        .map(|(id, sentences)| {
            let text: Vec<String> = sentences
                .iter()
                .enumerate()
                .map(|(i, (n, last))| {
                    let filler: Vec<String> = (0..*n).map(|j| format!("{}{i}x{j}", &id[..1])).collect();
                    format!("{} {last} .", filler.join(" "))
                })
                .collect();
            Document::from_text(*id, &text.join(" "))
        })
        .collect()
}

/// Ground truth for [`builder_corpus`], enumerated window by window.
///
/// Sentence lengths (tokens, with the period):
/// alpha 13 15 11 16 14 14 10 14 15 17;
/// beta 7 9 10 11 12 11 13 12 14 11;
/// gamma 14 14 14 14 12 13 14 14 11 15.
///
/// alpha:0 context 55 tokens, target "river" (13 words) occurs in s0: kept.
/// alpha:1 "door" absent. alpha:2 target s6 has 9 words. alpha:3 "moon"
/// absent. alpha:4 "stone" in s6: kept. alpha:5 "moon" in s7: kept.
/// alpha:6.. no room for a target.
/// beta:0 four sentences give 37, five give 49 < 50: rejected.
/// beta:1 five sentences (53), "hare" absent. beta:2 five sentences (57),
/// target s7 has 11 words, "owl" in s2: kept. beta:3 "deer" absent.
/// beta:4 target s9 has exactly 10 words: rejected.
/// gamma:0 "glove" absent. gamma:1 "coat" only in s0, outside the window.
/// gamma:2 "hat" absent from s2..s5. gamma:3 "hat" in s6: kept. gamma:4
/// target s8 has 10 words. gamma:5 "boot" absent.
pub const BUILDER_EXPECTED: [(&str, &str, usize); 5] = [
    ("alpha:0", "river", 4),
    ("alpha:4", "stone", 4),
    ("alpha:5", "moon", 4),
    ("beta:2", "owl", 5),
    ("gamma:3", "hat", 4),
];
