mod common;

use cloze_core::baselines::{LstmLm, LstmLmConfig};
use cloze_core::readers::{Reader, ReaderKind};
use cloze_core::training::{epoch_checkpoint, train, TrainConfig, TrainLog, Trainer, LOG_FILE};
use cloze_core::{synth, Error, Vocab};
use common::*;

fn config(max_epochs: usize) -> TrainConfig {
    TrainConfig {
        max_epochs,
        batch_size: 4,
        seed: 9,
        patience: 100,
        ..Default::default()
    }
}

fn replayable(log: &TrainLog) -> Vec<(usize, u64, u64)> {
    log.epochs
        .iter()
        .map(|r| (r.epoch, r.train_loss.to_bits(), r.dev_accuracy.to_bits()))
        .collect()
}

fn fresh(data: &[cloze_core::Instance]) -> Reader<f64> {
    reader_for(data, small_config(ReaderKind::AttentionSum, true), 1)
}

#[test]
fn resuming_after_epoch_three_reproduces_ten_epochs() {
    let data = synth::name_selection(40, 1);
    let (tr, dev) = data.split_at(30);
    let (full, full_log) = train(fresh(tr), tr, dev, config(10), None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(fresh(tr), config(10), Some(dir.path())).unwrap();
    for _ in 0..3 {
        t.run_epoch(tr, dev).unwrap();
    }
    drop(t);
    let mut resumed: Trainer<f64, Reader<f64>> =
        Trainer::resume(&epoch_checkpoint(dir.path(), 3), config(10), Some(dir.path())).unwrap();
    assert_eq!(resumed.epochs_done(), 3);
    resumed.run(tr, dev).unwrap();
    let (model, log) = resumed.finish().unwrap();
    assert_eq!(replayable(&log), replayable(&full_log));
    assert_eq!(model.params, full.params);

    let lines = std::fs::read_to_string(dir.path().join(LOG_FILE)).unwrap();
    assert_eq!(lines.lines().count(), 10);
}

#[test]
fn resume_checks_model_kind_settings_and_integrity() {
    let data = synth::name_selection(12, 2);
    let (tr, dev) = data.split_at(8);
    let dir = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(fresh(tr), config(2), Some(dir.path())).unwrap();
    t.run_epoch(tr, dev).unwrap();
    let path = epoch_checkpoint(dir.path(), 1);

    let as_lm = Trainer::<f64, LstmLm<f64>>::resume(&path, config(2), None);
    assert!(matches!(as_lm, Err(Error::ManifestMismatch(_))));

    let other_seed = TrainConfig { seed: 10, ..config(2) };
    let r = Trainer::<f64, Reader<f64>>::resume(&path, other_seed, None);
    assert!(matches!(r, Err(Error::ManifestMismatch(_))));

    let r = Trainer::<f32, Reader<f32>>::resume(&path, config(2), None);
    assert!(matches!(r, Err(Error::ManifestMismatch(_))));

    let bytes = std::fs::read(&path).unwrap();
    let broken = dir.path().join("broken.ckpt");
    std::fs::write(&broken, &bytes[..bytes.len() - 5]).unwrap();
    match Trainer::<f64, Reader<f64>>::resume(&broken, config(2), None) {
        Err(Error::Checkpoint { offset, .. }) => assert!(offset > 0 && offset <= bytes.len()),
        other => panic!("expected a checkpoint error, got {:?}", other.err()),
    }
    let mut garbled = bytes.clone();
    garbled[2] = b'X';
    std::fs::write(&broken, &garbled).unwrap();
    assert!(matches!(
        Trainer::<f64, Reader<f64>>::resume(&broken, config(2), None),
        Err(Error::Checkpoint { offset: 0, .. })
    ));
}

#[test]
fn identical_seeds_give_identical_logs() {
    let data = synth::name_selection(30, 3);
    let (tr, dev) = data.split_at(24);
    let (a, la) = train(fresh(tr), tr, dev, config(3), None).unwrap();
    let (b, lb) = train(fresh(tr), tr, dev, config(3), None).unwrap();
    assert_eq!(replayable(&la), replayable(&lb));
    assert_eq!(la.selected_epoch, lb.selected_epoch);
    assert_eq!(a.params, b.params);
}

#[test]
fn selected_epoch_has_the_best_dev_accuracy() {
    let data = synth::name_selection(40, 4);
    let (tr, dev) = data.split_at(30);
    let cfg = TrainConfig {
        patience: 2,
        ..config(6)
    };
    let (_, log) = train(fresh(tr), tr, dev, cfg, None).unwrap();
    let selected = log.selected_epoch.unwrap();
    let best = log.epochs[selected - 1].dev_accuracy;
    assert!(log.epochs.iter().all(|r| r.dev_accuracy <= best));
    assert!(log.epochs.windows(2).all(|w| w[0].epoch < w[1].epoch));
}

#[test]
fn empty_sets_are_rejected() {
    let data = synth::name_selection(4, 5);
    assert!(matches!(
        train(fresh(&data), &[], &data, config(1), None),
        Err(Error::EmptyInput(_))
    ));
    assert!(matches!(
        train(fresh(&data), &data, &[], config(1), None),
        Err(Error::EmptyInput(_))
    ));
}

#[test]
fn lstm_language_model_overfits_a_small_corpus() {
    let data = synth::toy_instances(20, 6);
    let vocab = Vocab::from_instances(&data, 1);
    let lm = LstmLm::<f64>::new(
        LstmLmConfig {
            embed_dim: 8,
            hidden_dim: 8,
        },
        vocab,
        2,
    )
    .unwrap();
    let cfg = TrainConfig {
        batch_size: 5,
        optimizer: cloze_core::numeric::OptimizerConfig {
            learning_rate: 0.02,
            ..Default::default()
        },
        ..config(10)
    };
    let (model, log) = train(lm, &data, &data, cfg, None).unwrap();
    let tokens: usize = data.iter().map(|i| model.tokens(i)).sum();
    let per_token: Vec<f64> = log
        .epochs
        .iter()
        .map(|r| r.train_loss * data.len() as f64 / tokens as f64)
        .collect();
    let rises = per_token.windows(2).filter(|w| w[1] > w[0] + 1e-3).count();
    assert!(rises <= 1, "{per_token:?}");
    assert!(per_token[9] < 0.9 * per_token[0], "{per_token:?}");
}
