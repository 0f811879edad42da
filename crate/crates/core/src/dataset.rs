//! Training-set construction from a sentence-split corpus.
//!
//! Every start sentence of a document proposes one window: four context
//! sentences, widened to five when four hold fewer than [`MIN_CONTEXT_TOKENS`]
//! tokens. The sentence after the context is the target sentence. Trailing
//! punctuation is trimmed from it so that its final token is a word.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::resources::TokenSet;
use crate::text::{Document, Sentence};

pub const MIN_CONTEXT_TOKENS: usize = 50;
pub const MIN_CONTEXT_SENTENCES: usize = 4;
pub const MAX_CONTEXT_SENTENCES: usize = 5;
/// Target sentences must be strictly longer than this.
pub const MIN_TARGET_TOKENS_EXCLUSIVE: usize = 10;

/// Default train share: 1,618,782 of 1,827,123 instances.
pub const DEFAULT_TRAIN_FRACTION: f64 = 1_618_782.0 / 1_827_123.0;

/// A structurally valid window before the answer-in-context filter.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Window {
    start: usize,
    context_sentences: usize,
    target: Sentence,
}

fn context_tokens(sentences: &[Sentence]) -> usize {
    sentences.iter().map(Vec::len).sum()
}

fn trim_trailing_punctuation(sentence: &Sentence, punctuation: &TokenSet) -> Sentence {
    let keep = sentence
        .iter()
        .rposition(|t| !punctuation.contains(t))
        .map_or(0, |i| i + 1);
    sentence[..keep].to_vec()
}

fn window_at(doc: &Document, start: usize, punctuation: &TokenSet) -> Option<Window> {
    let s = &doc.sentences;
    let mut n = MIN_CONTEXT_SENTENCES;
    loop {
        if start + n >= s.len() {
            return None;
        }
        if context_tokens(&s[start..start + n]) >= MIN_CONTEXT_TOKENS {
            break;
        }
        if n == MAX_CONTEXT_SENTENCES {
            return None;
        }
        n += 1;
    }
    let target = trim_trailing_punctuation(&s[start + n], punctuation);
    if target.len() <= MIN_TARGET_TOKENS_EXCLUSIVE {
        return None;
    }
    Some(Window {
        start,
        context_sentences: n,
        target,
    })
}

fn windows<'a>(doc: &'a Document, punctuation: &'a TokenSet) -> impl Iterator<Item = Window> + 'a {
    (0..doc.sentences.len()).filter_map(move |start| window_at(doc, start, punctuation))
}

fn instance_from_window(doc: &Document, w: Window) -> Instance {
    let context = doc.sentences[w.start..w.start + w.context_sentences].to_vec();
    Instance::new(format!("{}:{}", doc.id, w.start), context, w.target).expect("window targets are non-empty")
}

/// Instances from one document that pass every training filter.
pub fn build_document(doc: &Document, punctuation: &TokenSet) -> Vec<Instance> {
    windows(doc, punctuation)
        .map(|w| instance_from_window(doc, w))
        .filter(Instance::answer_in_context)
        .collect()
}

/// Stream training instances in document order, then window order.
pub fn build_instances<'a, I>(corpus: I, punctuation: &'a TokenSet) -> impl Iterator<Item = Instance> + 'a
where
    I: IntoIterator<Item = Document>,
    I::IntoIter: 'a,
{
    corpus
        .into_iter()
        .flat_map(move |doc| build_document(&doc, punctuation))
}

/// Uniform seeded sample of `n` structurally valid windows, ignoring whether
/// the answer occurs in the context. Returned in corpus order.
pub fn sample_control<I>(corpus: I, n: usize, seed: u64, punctuation: &TokenSet) -> Result<Vec<Instance>>
where
    I: IntoIterator<Item = Document>,
{
    if n == 0 {
        return Err(Error::Config("control sample size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Reservoir of (global window index, instance).
    let mut reservoir: Vec<(usize, Instance)> = Vec::with_capacity(n);
    let mut seen = 0usize;
    for doc in corpus {
        for w in windows(&doc, punctuation) {
            if reservoir.len() < n {
                reservoir.push((seen, instance_from_window(&doc, w)));
            } else {
                let j = rng.gen_range(0..=seen);
                if j < n {
                    reservoir[j] = (seen, instance_from_window(&doc, w));
                }
            }
            seen += 1;
        }
    }
    if seen < n {
        return Err(Error::NotEnoughWindows {
            requested: n,
            available: seen,
        });
    }
    reservoir.sort_by_key(|(i, _)| *i);
    Ok(reservoir.into_iter().map(|(_, inst)| inst).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    /// Keep all instances of a document on the same side.
    #[serde(default)]
    pub by_document: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: 0,
            by_document: false,
        }
    }
}

fn document_of(id: &str) -> &str {
    id.rsplit_once(':').map_or(id, |(doc, _)| doc)
}

/// Seeded partition into (train, validation).
pub fn split(instances: Vec<Instance>, spec: &SplitSpec) -> Result<(Vec<Instance>, Vec<Instance>)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {}",
            spec.train_fraction
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if spec.by_document {
        let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, inst) in instances.iter().enumerate() {
            groups.entry(document_of(&inst.id).to_string()).or_default().push(i);
        }
        let mut docs: Vec<Vec<usize>> = groups.into_values().collect();
        docs.shuffle(&mut rng);
        let target = (spec.train_fraction * instances.len() as f64).round() as usize;
        let mut train_idx = HashSet::new();
        let mut taken = 0;
        for group in &docs {
            if taken >= target {
                break;
            }
            taken += group.len();
            train_idx.extend(group.iter().copied());
        }
        let (train, val): (Vec<_>, Vec<_>) = instances
            .into_iter()
            .enumerate()
            .partition(|(i, _)| train_idx.contains(i));
        return Ok((
            train.into_iter().map(|(_, x)| x).collect(),
            val.into_iter().map(|(_, x)| x).collect(),
        ));
    }
    let n = instances.len();
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut slots: Vec<Option<Instance>> = instances.into_iter().map(Some).collect();
    let mut take =
        |idx: &[usize]| -> Vec<Instance> { idx.iter().map(|&i| slots[i].take().expect("each index once")).collect() };
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..]);
    Ok((train, val))
}

/// Summary numbers for a set of instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub instances: usize,
    pub answer_in_context: usize,
    pub answer_in_context_fraction: f64,
    pub mean_context_sentences: f64,
    pub mean_context_tokens: f64,
    pub mean_target_tokens: f64,
}

pub fn corpus_stats<'a, I>(instances: I) -> Result<CorpusStats>
where
    I: IntoIterator<Item = &'a Instance>,
{
    let mut n = 0usize;
    let mut in_ctx = 0usize;
    let mut sentences = 0usize;
    let mut tokens = 0usize;
    let mut target = 0usize;
    for inst in instances {
        n += 1;
        in_ctx += usize::from(inst.answer_in_context());
        sentences += inst.context.len();
        tokens += inst.context_len();
        target += inst.target_sentence.len();
    }
    if n == 0 {
        return Err(Error::EmptyInput("no instances for statistics"));
    }
    let nf = n as f64;
    Ok(CorpusStats {
        instances: n,
        answer_in_context: in_ctx,
        answer_in_context_fraction: in_ctx as f64 / nf,
        mean_context_sentences: sentences as f64 / nf,
        mean_context_tokens: tokens as f64 / nf,
        mean_target_tokens: target as f64 / nf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::punctuation;

    fn words(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    fn sentence(prefix: &str, n_words: usize) -> Sentence {
        let mut s = words(prefix, n_words);
        s.push(".".into());
        s
    }

    fn doc(sentences: Vec<Sentence>) -> Document {
        Document {
            id: "d".into(),
            sentences,
        }
    }

    /// Four 12-token context sentences (49 tokens) are too short; so is a fifth
    /// missing. Builds a target sentence ending with a context word.
    fn target_with(word: &str, len: usize) -> Sentence {
        let mut t = words("t", len - 1);
        t.push(word.into());
        t.push(".".into());
        t
    }

    #[test]
    fn context_of_49_tokens_is_rejected() {
        // 4 sentences of 12,12,12,13 tokens = 49, and no fifth context sentence
        // before the target: start 0 would need sentence 5 as target.
        let mut s = vec![
            sentence("a", 11),
            sentence("b", 11),
            sentence("c", 11),
            sentence("e", 12),
        ];
        s.push(target_with("a0", 12));
        let d = doc(s);
        assert_eq!(context_tokens(&d.sentences[..4]), 49);
        assert!(build_document(&d, &punctuation()).is_empty());
    }

    #[test]
    fn context_of_50_tokens_is_accepted() {
        let mut s = vec![
            sentence("a", 11),
            sentence("b", 11),
            sentence("c", 12),
            sentence("e", 12),
        ];
        s.push(target_with("a0", 12));
        let out = build_document(&doc(s), &punctuation());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].context.len(), 4);
        assert_eq!(out[0].target_word, "a0");
        assert_eq!(out[0].target_sentence.len(), 12);
    }

    #[test]
    fn target_of_exactly_ten_tokens_is_rejected() {
        let mut s = vec![
            sentence("a", 12),
            sentence("b", 12),
            sentence("c", 12),
            sentence("e", 12),
        ];
        s.push(target_with("a0", 10));
        assert!(build_document(&doc(s.clone()), &punctuation()).is_empty());
        s[4] = target_with("a0", 11);
        assert_eq!(build_document(&doc(s), &punctuation()).len(), 1);
    }

    #[test]
    fn absent_target_word_is_rejected() {
        let mut s = vec![
            sentence("a", 12),
            sentence("b", 12),
            sentence("c", 12),
            sentence("e", 12),
        ];
        s.push(target_with("zebra", 12));
        assert!(build_document(&doc(s.clone()), &punctuation()).is_empty());
        let control = sample_control(vec![doc(s)], 1, 7, &punctuation()).unwrap();
        assert_eq!(control.len(), 1);
        assert_eq!(control[0].target_word, "zebra");
    }

    #[test]
    fn five_sentence_context_used_when_four_fall_short() {
        let mut s = vec![
            sentence("a", 9),
            sentence("b", 9),
            sentence("c", 9),
            sentence("e", 9),
            sentence("f", 9),
        ];
        s.push(target_with("f3", 12));
        let out = build_document(&doc(s), &punctuation());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].context.len(), 5);
        assert_eq!(out[0].context_len(), 50);
    }

    /// Seven sentences, enumerated by hand:
    /// - start 0: s0..s3 = 13*4 = 52 tokens, target s4 (12 words, ends "a1") -> in context, emit
    /// - start 1: s1..s4 = 13+13+13+13 = 52, target s5 (12 words, ends "q9", absent) -> skip
    /// - start 2: s2..s5 = 52, target s6 (12 words, ends "c2") -> emit
    /// - start 3+: no target sentence after four context sentences -> skip
    #[test]
    fn seven_sentence_document_yields_exactly_two_instances() {
        let s = vec![
            sentence("a", 12),
            sentence("b", 12),
            sentence("c", 12),
            sentence("e", 12),
            target_with("a1", 12),
            target_with("q9", 12),
            target_with("c2", 12),
        ];
        let out = build_document(&doc(s), &punctuation());
        let ids: Vec<_> = out.iter().map(|i| i.id.as_str()).collect();
        assert_eq!(ids, vec!["d:0", "d:2"]);
        assert_eq!(out[0].target_word, "a1");
        assert_eq!(out[1].target_word, "c2");
    }

    #[test]
    fn control_requires_positive_n_and_enough_windows() {
        let s = vec![sentence("a", 12); 5];
        assert!(sample_control(vec![doc(s.clone())], 0, 1, &punctuation()).is_err());
        assert!(matches!(
            sample_control(vec![doc(s)], 2, 1, &punctuation()),
            Err(Error::NotEnoughWindows {
                requested: 2,
                available: 1
            })
        ));
    }

    #[test]
    fn control_sample_is_seed_deterministic() {
        let docs: Vec<Document> = (0..5)
            .map(|d| Document {
                id: format!("doc{d}"),
                sentences: (0..12).map(|i| sentence(&format!("w{d}_{i}_"), 12)).collect(),
            })
            .collect();
        let a = sample_control(docs.clone(), 10, 3, &punctuation()).unwrap();
        let b = sample_control(docs.clone(), 10, 3, &punctuation()).unwrap();
        let c = sample_control(docs, 10, 4, &punctuation()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_ne!(a, c);
    }

    fn dummy(n: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| {
                Instance::new(
                    format!("doc{}:{}", i / 3, i),
                    vec![vec!["x".into()]],
                    vec!["y".into(), format!("w{i}")],
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let spec = SplitSpec {
            train_fraction: 0.8,
            seed: 5,
            by_document: false,
        };
        let (t, v) = split(dummy(10), &spec).unwrap();
        assert_eq!((t.len(), v.len()), (8, 2));
        let (t2, v2) = split(dummy(10), &spec).unwrap();
        assert_eq!(t, t2);
        assert_eq!(v, v2);
    }

    #[test]
    fn default_fraction_reproduces_reported_sizes() {
        let n = 1_827_123usize;
        let n_train = (DEFAULT_TRAIN_FRACTION * n as f64).round() as usize;
        assert_eq!((n_train, n - n_train), (1_618_782, 208_341));
    }

    #[test]
    fn split_is_a_partition() {
        let input = dummy(37);
        let (t, v) = split(
            input.clone(),
            &SplitSpec {
                seed: 9,
                ..Default::default()
            },
        )
        .unwrap();
        let mut ids: Vec<_> = t.iter().chain(v.iter()).map(|i| i.id.clone()).collect();
        ids.sort();
        let mut expected: Vec<_> = input.iter().map(|i| i.id.clone()).collect();
        expected.sort();
        assert_eq!(ids, expected);
    }

    #[test]
    fn document_split_keeps_documents_together() {
        let spec = SplitSpec {
            train_fraction: 0.5,
            seed: 1,
            by_document: true,
        };
        let (t, v) = split(dummy(30), &spec).unwrap();
        assert_eq!(t.len() + v.len(), 30);
        let train_docs: HashSet<_> = t.iter().map(|i| document_of(&i.id).to_string()).collect();
        assert!(v.iter().all(|i| !train_docs.contains(document_of(&i.id))));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let spec = SplitSpec {
            train_fraction: 1.0,
            ..Default::default()
        };
        assert!(split(dummy(3), &spec).is_err());
    }

    #[test]
    fn stats_fraction_and_means() {
        let mut insts = dummy(4);
        for inst in insts.iter_mut().take(3) {
            inst.context = vec![vec![inst.target_word.clone()]];
        }
        let s = corpus_stats(&insts).unwrap();
        assert_eq!(s.answer_in_context_fraction, 0.75);

        let five = Instance::new("x", vec![vec!["a".into()]; 5], vec!["a".into()]).unwrap();
        assert_eq!(corpus_stats([&five]).unwrap().mean_context_sentences, 5.0);
        assert!(corpus_stats(std::iter::empty()).is_err());
    }
}
