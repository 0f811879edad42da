mod common;

use std::collections::BTreeMap;

use cloze_core::baselines::Picker;
use cloze_core::dataset::{self, SplitSpec};
use cloze_core::eval::{evaluate, predict_all, PickerPredictor};
use cloze_core::resources::punctuation;
use cloze_core::text::{self, Document};
use cloze_core::{extract_candidates, synth, Instance};
use common::*;
use proptest::prelude::*;

fn write_corpus(dir: &std::path::Path, docs: &[Document]) {
    for d in docs {
        let text: Vec<String> = d.sentences.iter().map(|s| s.join(" ")).collect();
        std::fs::write(dir.join(format!("{}.txt", d.id)), text.join("\n")).unwrap();
    }
}

#[test]
fn hand_built_corpus_yields_the_enumerated_instances() {
    let built: Vec<Instance> = dataset::build_instances(builder_corpus(), &punctuation()).collect();
    let got: Vec<(&str, &str, usize)> = built
        .iter()
        .map(|i| (i.id.as_str(), i.target_word.as_str(), i.context.len()))
        .collect();
    assert_eq!(got, BUILDER_EXPECTED);
}

#[test]
fn files_round_trip_and_rebuilds_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    write_corpus(&corpus, &builder_corpus());
    let build = |name: &str| {
        let docs: Vec<Document> = text::corpus_files(&corpus)
            .unwrap()
            .iter()
            .map(|f| text::read_document(&corpus, f).unwrap())
            .collect();
        let instances: Vec<Instance> = dataset::build_instances(docs, &punctuation()).collect();
        let path = dir.path().join(name);
        text::write_instances(&instances, &path).unwrap();
        (instances, std::fs::read(path).unwrap())
    };
    let (first, bytes_a) = build("a.jsonl");
    let (_, bytes_b) = build("b.jsonl");
    assert_eq!(bytes_a, bytes_b);
    assert_eq!(text::load_instances(&dir.path().join("a.jsonl")).unwrap(), first);
    // File ids carry the extension; the windows are the same.
    let ids: Vec<&str> = first.iter().map(|i| i.id.as_str()).collect();
    assert_eq!(
        ids,
        ["alpha.txt:0", "alpha.txt:4", "alpha.txt:5", "beta.txt:2", "gamma.txt:3"]
    );
}

#[test]
fn passages_evaluate_like_instances() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth::name_selection(20, 3);
    let lines: Vec<String> = data.iter().map(Instance::render).collect();
    let path = dir.path().join("passages.txt");
    std::fs::write(&path, lines.join("\n") + "\n").unwrap();
    let parsed = text::load_eval_data(&path).unwrap();
    assert_eq!(parsed.len(), data.len());
    for (a, b) in parsed.iter().zip(&data) {
        assert_eq!(
            (&a.context, &a.target_sentence, &a.target_word),
            (&b.context, &b.target_sentence, &b.target_word)
        );
    }
}

fn multiset(instances: &[Instance]) -> BTreeMap<String, usize> {
    let mut m = BTreeMap::new();
    for i in instances {
        *m.entry(serde_json::to_string(i).unwrap()).or_default() += 1;
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn builder_output_satisfies_its_filters(seed in any::<u64>(), docs in 1usize..4, per_doc in 4usize..12) {
        let pu = punctuation();
        let built: Vec<Instance> = dataset::build_instances(synth::story_corpus(docs, per_doc, seed), &pu).collect();
        for inst in &built {
            prop_assert!((4..=5).contains(&inst.context.len()));
            prop_assert!(inst.context_len() >= 50);
            prop_assert!(inst.target_sentence.len() > 10);
            prop_assert!(inst.answer_in_context());
            prop_assert!(!pu.contains(&inst.target_word));
            let flat = inst.flat_context();
            let candidates = extract_candidates(inst, &pu).unwrap();
            for (word, positions) in candidates.iter() {
                prop_assert!(positions.iter().all(|&p| flat[p] == word));
            }
        }
        if !built.is_empty() {
            prop_assert_eq!(dataset::corpus_stats(&built).unwrap().answer_in_context_fraction, 1.0);
        }
    }

    #[test]
    fn split_is_a_seeded_partition(n in 2usize..60, frac in 0.05f64..0.95, seed in any::<u64>(), by_document in any::<bool>()) {
        let data = synth::toy_instances(n, seed);
        let spec = SplitSpec { train_fraction: frac, seed, by_document };
        let (a, b) = dataset::split(data.clone(), &spec).unwrap();
        prop_assert_eq!(a.len() + b.len(), n);
        let mut joined = a.clone();
        joined.extend(b.iter().cloned());
        prop_assert_eq!(multiset(&joined), multiset(&data));
        let again = dataset::split(data, &spec).unwrap();
        prop_assert_eq!((a, b), again);
    }

    #[test]
    fn context_restricted_accuracy_never_beats_the_ceiling(seed in 0u64..200) {
        let pu = punctuation();
        let control = dataset::sample_control(synth::story_corpus(8, 10, seed), 20, seed, &pu).unwrap();
        let ceiling = dataset::corpus_stats(&control).unwrap().answer_in_context_fraction;
        for picker in [Picker::Random, Picker::First, Picker::Last, Picker::MostFrequent] {
            let p = PickerPredictor::new(picker, seed);
            let preds = predict_all(&p, &control).unwrap();
            let report = evaluate(&control, &preds, 3, false).unwrap();
            prop_assert!(report.accuracy_all <= ceiling + 1e-12);
            prop_assert_eq!(&report, &evaluate(&control, &preds, 3, false).unwrap());
            let ks: Vec<f64> = report.top_k.values().copied().collect();
            prop_assert!(ks.windows(2).all(|w| w[0] <= w[1]));
        }
    }
}
