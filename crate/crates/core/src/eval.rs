//! Accuracy over all instances and over those whose answer is in the context,
//! top-k accuracy, per-label slices and side-by-side comparison.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{lm_score_blank, CacheConfig, LstmLm, NGramModel, Picker};
use crate::error::{Error, Result};
use crate::instance::{Instance, PhenomenonLabel, Prediction};
use crate::numeric::Real;
use crate::readers::Reader;
use crate::resources::{punctuation, stopwords, TokenSet};

pub const DEFAULT_TOP_K: usize = 3;

/// Anything that ranks candidates for an instance, or abstains with `None`.
pub trait Predictor: Sync {
    fn predict(&self, instance: &Instance) -> Result<Option<Prediction>>;
}

impl<T: Real> Predictor for Reader<T> {
    fn predict(&self, instance: &Instance) -> Result<Option<Prediction>> {
        match Reader::predict(self, instance) {
            Ok(p) => Ok(Some(p)),
            Err(Error::DegenerateInstance { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }
}

impl<T: Real> Predictor for LstmLm<T> {
    fn predict(&self, instance: &Instance) -> Result<Option<Prediction>> {
        self.score_blank(instance)
    }
}

/// A [`Picker`] bundled with its seed and word lists.
pub struct PickerPredictor {
    pub picker: Picker,
    pub seed: u64,
    pub stopwords: Arc<TokenSet>,
    pub punctuation: Arc<TokenSet>,
}

impl PickerPredictor {
    pub fn new(picker: Picker, seed: u64) -> Self {
        PickerPredictor {
            picker,
            seed,
            stopwords: stopwords(),
            punctuation: punctuation(),
        }
    }
}

impl Predictor for PickerPredictor {
    fn predict(&self, instance: &Instance) -> Result<Option<Prediction>> {
        self.picker
            .predict(instance, &self.stopwords, &self.punctuation, self.seed)
    }
}

/// An n-gram model, optionally interpolated with a cache.
pub struct NGramPredictor {
    pub model: NGramModel,
    pub cache: Option<CacheConfig>,
    pub stopwords: Arc<TokenSet>,
    pub punctuation: Arc<TokenSet>,
}

impl NGramPredictor {
    pub fn new(model: NGramModel, cache: Option<CacheConfig>) -> Self {
        NGramPredictor {
            model,
            cache,
            stopwords: stopwords(),
            punctuation: punctuation(),
        }
    }
}

impl Predictor for NGramPredictor {
    fn predict(&self, instance: &Instance) -> Result<Option<Prediction>> {
        lm_score_blank(
            &self.model,
            instance,
            &self.stopwords,
            &self.punctuation,
            self.cache.as_ref(),
        )
    }
}

/// Predictions for every instance, in input order.
pub fn predict_all<P: Predictor + ?Sized>(predictor: &P, instances: &[Instance]) -> Result<Vec<Option<Prediction>>> {
    instances.par_iter().map(|i| predictor.predict(i)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelAccuracy {
    pub count: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_total: usize,
    pub n_answer_in_context: usize,
    pub n_abstained: usize,
    pub accuracy_all: f64,
    /// Accuracy restricted to instances whose answer occurs in the context
    /// (0 when there are none).
    pub accuracy_context: f64,
    /// k → fraction of instances whose answer is ranked within the top k.
    pub top_k: BTreeMap<usize, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_label: Option<BTreeMap<String, LabelAccuracy>>,
}

fn fraction(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Score `predictions` (one per instance; `None` is an abstention and counts
/// as wrong) against the target words by exact match.
pub fn evaluate(
    instances: &[Instance],
    predictions: &[Option<Prediction>],
    max_k: usize,
    labels: bool,
) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::EmptyInput("evaluation instances"));
    }
    if instances.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} instances",
            predictions.len(),
            instances.len()
        )));
    }
    let max_k = max_k.max(1);
    let mut correct = 0;
    let mut in_context = 0;
    let mut correct_in_context = 0;
    let mut abstained = 0;
    let mut within = vec![0usize; max_k + 1];
    for (inst, pred) in instances.iter().zip(predictions) {
        let rank = pred.as_ref().and_then(|p| p.rank_of(&inst.target_word));
        let hit = rank == Some(1);
        abstained += usize::from(pred.is_none());
        correct += usize::from(hit);
        if inst.answer_in_context() {
            in_context += 1;
            correct_in_context += usize::from(hit);
        }
        if let Some(r) = rank.filter(|&r| r <= max_k) {
            within[r] += 1;
        }
    }
    let mut top_k = BTreeMap::new();
    let mut cumulative = 0;
    for (k, &w) in within.iter().enumerate().skip(1) {
        cumulative += w;
        top_k.insert(k, fraction(cumulative, instances.len()));
    }
    let per_label = labels.then(|| {
        slice_by_label(instances, predictions)
            .into_iter()
            .map(|(l, a)| (l.as_str().to_string(), a))
            .collect()
    });
    Ok(EvalReport {
        n_total: instances.len(),
        n_answer_in_context: in_context,
        n_abstained: abstained,
        accuracy_all: fraction(correct, instances.len()),
        accuracy_context: fraction(correct_in_context, in_context),
        top_k,
        per_label,
    })
}

pub fn evaluate_predictor<P: Predictor + ?Sized>(
    predictor: &P,
    instances: &[Instance],
    max_k: usize,
    labels: bool,
) -> Result<EvalReport> {
    if instances.is_empty() {
        return Err(Error::EmptyInput("evaluation instances"));
    }
    let predictions = predict_all(predictor, instances)?;
    evaluate(instances, &predictions, max_k, labels)
}

/// Accuracy per phenomenon label; an instance counts toward every label it
/// carries and unlabeled instances are skipped.
pub fn slice_by_label(
    instances: &[Instance],
    predictions: &[Option<Prediction>],
) -> BTreeMap<PhenomenonLabel, LabelAccuracy> {
    let mut out: BTreeMap<PhenomenonLabel, LabelAccuracy> = BTreeMap::new();
    for (inst, pred) in instances.iter().zip(predictions) {
        let hit = pred.as_ref().and_then(Prediction::best) == Some(inst.target_word.as_str());
        for &label in inst.labels.iter().flatten() {
            let e = out.entry(label).or_insert(LabelAccuracy {
                count: 0,
                correct: 0,
                accuracy: 0.0,
            });
            e.count += 1;
            e.correct += usize::from(hit);
        }
    }
    for a in out.values_mut() {
        a.accuracy = fraction(a.correct, a.count);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub accuracy_all: f64,
    pub accuracy_context: f64,
    pub n_total: usize,
}

/// Rows sorted by `accuracy_all` descending, ties by name.
pub fn compare(reports: &[(String, EvalReport)]) -> Vec<ComparisonRow> {
    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|(name, r)| ComparisonRow {
            name: name.clone(),
            accuracy_all: r.accuracy_all,
            accuracy_context: r.accuracy_context,
            n_total: r.n_total,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.accuracy_all
            .total_cmp(&a.accuracy_all)
            .then_with(|| a.name.cmp(&b.name))
    });
    rows
}

/// Fixed-width text rendering of [`compare`] output.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let width = rows
        .iter()
        .map(|r| r.name.len())
        .chain(["system".len()])
        .max()
        .unwrap_or(6);
    let mut out = format!("{:<width$}  {:>7}  {:>7}  {:>7}\n", "system", "all", "context", "n");
    for r in rows {
        out.push_str(&format!(
            "{:<width$}  {:>7.2}  {:>7.2}  {:>7}\n",
            r.name,
            100.0 * r.accuracy_all,
            100.0 * r.accuracy_context,
            r.n_total
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: &str, context: &str, target: &str) -> Instance {
        let s = |x: &str| x.split_whitespace().map(String::from).collect();
        Instance::new(id, vec![s(context)], s(target)).unwrap()
    }

    fn pred(words: &[&str]) -> Option<Prediction> {
        Some(Prediction {
            ranked: words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.to_string(), -(i as f64)))
                .collect(),
        })
    }

    #[test]
    fn accuracy_arithmetic() {
        let data = vec![
            inst("1", "a b", "q a"),
            inst("2", "a b", "q b"),
            inst("3", "a b", "q a"),
            inst("4", "a b", "q z"),
        ];
        let preds = vec![pred(&["a"]), pred(&["a", "b"]), pred(&["b"]), pred(&["z"])];
        let r = evaluate(&data, &preds, 3, false).unwrap();
        assert_eq!(r.accuracy_all, 0.5);
        assert_eq!(r.n_answer_in_context, 3);
        assert!((r.accuracy_context - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.top_k[&1], r.accuracy_all);
    }

    #[test]
    fn top_k_counts_lower_ranks() {
        let data = vec![inst("1", "a b c", "q a")];
        let r = evaluate(&data, &[pred(&["b", "a", "c"])], 3, false).unwrap();
        assert_eq!((r.top_k[&1], r.top_k[&2], r.top_k[&3]), (0.0, 1.0, 1.0));
    }

    #[test]
    fn abstentions_count_wrong() {
        let data = vec![inst("1", "a", "q a"), inst("2", "a", "q a")];
        let r = evaluate(&data, &[None, pred(&["a"])], 1, false).unwrap();
        assert_eq!(r.accuracy_all, 0.5);
        assert_eq!(r.n_abstained, 1);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(evaluate(&[], &[], 3, false).is_err());
    }

    #[test]
    fn labels_slice_and_multi_label_counts() {
        let mut a = inst("1", "a", "q a");
        a.labels = Some(vec![PhenomenonLabel::SingleNameCue, PhenomenonLabel::Coreference]);
        let mut b = inst("2", "a", "q b");
        b.labels = Some(vec![PhenomenonLabel::SingleNameCue]);
        let c = inst("3", "a", "q a");
        let data = vec![a, b, c];
        let preds = vec![pred(&["a"]), pred(&["a"]), pred(&["a"])];
        let s = slice_by_label(&data, &preds);
        assert_eq!(s[&PhenomenonLabel::SingleNameCue].count, 2);
        assert_eq!(s[&PhenomenonLabel::SingleNameCue].accuracy, 0.5);
        assert_eq!(s[&PhenomenonLabel::Coreference].correct, 1);
        let r = evaluate(&data, &preds, 1, true).unwrap();
        assert_eq!(r.per_label.unwrap().len(), 2);
        assert!(slice_by_label(&data[2..], &preds[2..]).is_empty());
    }

    #[test]
    fn nine_single_name_cues_with_eight_right() {
        let mut data = Vec::new();
        let mut preds = Vec::new();
        for i in 0..9 {
            let mut x = inst(&i.to_string(), "a b", "q a");
            x.labels = Some(vec![PhenomenonLabel::SingleNameCue]);
            data.push(x);
            preds.push(pred(if i < 8 { &["a"] } else { &["b"] }));
        }
        let s = slice_by_label(&data, &preds);
        assert_eq!((100.0 * s[&PhenomenonLabel::SingleNameCue].accuracy).round(), 89.0);
    }

    #[test]
    fn comparison_ordering() {
        let report = |acc: f64| EvalReport {
            n_total: 10,
            n_answer_in_context: 10,
            n_abstained: 0,
            accuracy_all: acc,
            accuracy_context: acc,
            top_k: BTreeMap::new(),
            per_label: None,
        };
        let rows = compare(&[
            ("b".into(), report(0.4)),
            ("a".into(), report(0.4)),
            ("c".into(), report(0.9)),
        ]);
        let names: Vec<_> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["c", "a", "b"]);
        assert_eq!(compare(&[("x".into(), report(0.1))]).len(), 1);
        assert!(render_table(&rows).lines().count() == 4);
    }
}
