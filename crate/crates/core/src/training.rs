//! Epoch loop with dev-accuracy early stopping, per-epoch checkpoints and
//! bit-exact resume.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::LstmLm;
use crate::error::{Error, Result};
use crate::eval::{evaluate_predictor, Predictor};
use crate::instance::Instance;
use crate::numeric::{checkpoint, Grads, Optimizer, OptimizerConfig, ParamStore, Real, Tensor};
use crate::readers::Reader;

/// A model the harness can optimize and checkpoint.
pub trait Trainable<T: Real>: Predictor + Clone + Send {
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;
    fn loss_and_grads(&self, instance: &Instance) -> Result<(f64, Grads<T>)>;
    /// Checkpoint metadata sufficient for [`Trainable::from_checkpoint`].
    fn meta(&self) -> serde_json::Value;
    fn from_checkpoint(meta: &serde_json::Value, tensors: Vec<(String, Tensor<T>)>) -> Result<Self>;
}

impl<T: Real> Trainable<T> for Reader<T> {
    fn params(&self) -> &ParamStore<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }
    fn loss_and_grads(&self, instance: &Instance) -> Result<(f64, Grads<T>)> {
        Reader::loss_and_grads(self, instance)
    }
    fn meta(&self) -> serde_json::Value {
        Reader::meta(self)
    }
    fn from_checkpoint(meta: &serde_json::Value, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        Reader::from_checkpoint(meta, tensors)
    }
}

impl<T: Real> Trainable<T> for LstmLm<T> {
    fn params(&self) -> &ParamStore<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }
    fn loss_and_grads(&self, instance: &Instance) -> Result<(f64, Grads<T>)> {
        LstmLm::loss_and_grads(self, instance)
    }
    fn meta(&self) -> serde_json::Value {
        LstmLm::meta(self)
    }
    fn from_checkpoint(meta: &serde_json::Value, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        LstmLm::from_checkpoint(meta, tensors)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    /// Consecutive dev-accuracy decreases that end training.
    pub patience: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 10,
            batch_size: 32,
            seed: 0,
            patience: 2,
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "max_epochs, batch_size and patience must be at least 1".into(),
            ));
        }
        self.optimizer.validate()
    }

    /// Settings that must agree for a resumed run to replay exactly.
    fn replay_key(&self) -> (usize, u64, OptimizerConfig) {
        (self.batch_size, self.seed, self.optimizer)
    }
}

/// Stops after `patience` consecutive strict decreases relative to the
/// previous epoch and remembers the earliest best epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    history: Vec<f64>,
    decreases: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            history: Vec::new(),
            decreases: 0,
        }
    }

    /// Record the next epoch's dev accuracy; `true` means stop now.
    pub fn observe(&mut self, accuracy: f64) -> bool {
        match self.history.last() {
            Some(&prev) if accuracy < prev => self.decreases += 1,
            _ => self.decreases = 0,
        }
        self.history.push(accuracy);
        self.should_stop()
    }

    pub fn should_stop(&self) -> bool {
        self.decreases >= self.patience
    }

    /// 1-based epoch with the highest accuracy (earliest on ties).
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, &a) in self.history.iter().enumerate() {
            if best.is_none_or(|(_, b)| a > b) {
                best = Some((i + 1, a));
            }
        }
        best.map(|(e, _)| e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: f64,
    pub wall_time_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub selected_epoch: Option<usize>,
    pub stopped_early: bool,
}

pub const LOG_FILE: &str = "train_log.jsonl";
pub const BEST_FILE: &str = "model.ckpt";

pub fn epoch_checkpoint(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("epoch-{epoch:03}.ckpt"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrainState {
    epoch: usize,
    steps: u64,
    config: TrainConfig,
    log: TrainLog,
}

/// Training state for one model.
pub struct Trainer<T: Real, M: Trainable<T>> {
    pub config: TrainConfig,
    model: M,
    best: ParamStore<T>,
    optimizer: Optimizer<T>,
    stopper: EarlyStopping,
    log: TrainLog,
    out_dir: Option<PathBuf>,
    /// Extra metadata copied into every checkpoint (e.g. the invocation).
    pub provenance: serde_json::Value,
}

impl<T: Real, M: Trainable<T>> Trainer<T, M> {
    pub fn new(model: M, config: TrainConfig, out_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        if let Some(d) = out_dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        let optimizer = Optimizer::new(config.optimizer, model.params())?;
        Ok(Trainer {
            config,
            best: model.params().clone(),
            model,
            optimizer,
            stopper: EarlyStopping::new(config.patience),
            log: TrainLog::default(),
            out_dir: out_dir.map(Path::to_path_buf),
            provenance: serde_json::Value::Null,
        })
    }

    /// Continue from an epoch checkpoint written by a previous run.
    ///
    /// `config` may raise or lower `max_epochs`; batch size, seed and
    /// optimizer settings must match the original run.
    pub fn resume(path: &Path, config: TrainConfig, out_dir: Option<&Path>) -> Result<Self> {
        config.validate()?;
        let (manifest, tensors) = checkpoint::read::<T>(path)?;
        let state: TrainState = serde_json::from_value(manifest.meta["train"].clone())
            .map_err(|_| Error::ManifestMismatch("checkpoint carries no training state".into()))?;
        if state.config.replay_key() != config.replay_key() {
            return Err(Error::ManifestMismatch(
                "batch size, seed and optimizer settings must match the checkpointed run".into(),
            ));
        }
        let mut model_tensors = Vec::new();
        let mut best = Vec::new();
        let mut first = Vec::new();
        let mut second = Vec::new();
        for (name, t) in tensors {
            if let Some(n) = name.strip_prefix("best/") {
                best.push((n.to_string(), t));
            } else if let Some(n) = name.strip_prefix("adam.m/") {
                first.push((n.to_string(), t));
            } else if let Some(n) = name.strip_prefix("adam.v/") {
                second.push((n.to_string(), t));
            } else {
                model_tensors.push((name, t));
            }
        }
        let model = M::from_checkpoint(&manifest.meta["model"], model_tensors)?;
        let order = |v: Vec<(String, Tensor<T>)>, what: &str| -> Result<Vec<Tensor<T>>> {
            let mut map: std::collections::HashMap<String, Tensor<T>> = v.into_iter().collect();
            model
                .params()
                .iter()
                .map(|(_, n, _)| {
                    map.remove(n)
                        .ok_or_else(|| Error::ManifestMismatch(format!("{what} lacks {n}")))
                })
                .collect()
        };
        let mut best_store = model.params().clone();
        for (name, t) in best {
            best_store.set(&name, t)?;
        }
        let (m, v) = match config.optimizer.kind {
            crate::numeric::OptimizerKind::Adam => (order(first, "first moments")?, order(second, "second moments")?),
            crate::numeric::OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        let optimizer = Optimizer::from_state(config.optimizer, state.steps, m, v, model.params())?;
        let mut stopper = EarlyStopping::new(config.patience);
        for r in &state.log.epochs {
            stopper.observe(r.dev_accuracy);
        }
        if state.log.epochs.len() != state.epoch {
            return Err(Error::ManifestMismatch(
                "training log does not match epoch counter".into(),
            ));
        }
        if let Some(d) = out_dir {
            std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
        }
        Ok(Trainer {
            config,
            model,
            best: best_store,
            optimizer,
            stopper,
            log: state.log,
            out_dir: out_dir.map(Path::to_path_buf),
            provenance: manifest.meta.get("provenance").cloned().unwrap_or_default(),
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut M {
        &mut self.model
    }

    pub fn log(&self) -> &TrainLog {
        &self.log
    }

    pub fn epochs_done(&self) -> usize {
        self.log.epochs.len()
    }

    pub fn finished(&self) -> bool {
        self.epochs_done() >= self.config.max_epochs || self.stopper.should_stop()
    }

    fn shuffled(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order
    }

    /// One pass over `train` followed by dev evaluation.
    pub fn run_epoch(&mut self, train: &[Instance], dev: &[Instance]) -> Result<&EpochRecord> {
        if train.is_empty() {
            return Err(Error::EmptyInput("training set"));
        }
        if dev.is_empty() {
            return Err(Error::EmptyInput("dev set"));
        }
        let start = Instant::now();
        let epoch = self.epochs_done() + 1;
        let order = self.shuffled(train.len(), epoch);
        let mut total_loss = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let model = &self.model;
            let results: Vec<(f64, Grads<T>)> = batch
                .par_iter()
                .map(|&i| model.loss_and_grads(&train[i]))
                .collect::<Result<_>>()?;
            let mut grads = Grads::for_store(self.model.params());
            for (loss, g) in &results {
                total_loss += loss;
                grads.merge(g);
            }
            grads.scale(T::from_f64(1.0 / batch.len() as f64));
            self.optimizer.step(self.model.params_mut(), &grads)?;
        }
        let train_loss = total_loss / train.len() as f64;
        let dev_accuracy = evaluate_predictor(&self.model, dev, 1, false)?.accuracy_all;
        self.stopper.observe(dev_accuracy);
        if self.stopper.best_epoch() == Some(epoch) {
            self.best = self.model.params().clone();
        }
        let checkpoint = self.out_dir.as_ref().map(|d| epoch_checkpoint(d, epoch));
        self.log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_accuracy,
            wall_time_secs: start.elapsed().as_secs_f64(),
            checkpoint: checkpoint.clone(),
        });
        self.log.selected_epoch = self.stopper.best_epoch();
        self.log.stopped_early = self.stopper.should_stop() && epoch < self.config.max_epochs;
        log::info!("epoch {epoch}: train loss {train_loss:.4}, dev accuracy {dev_accuracy:.4}");
        if let (Some(path), Some(dir)) = (checkpoint, self.out_dir.clone()) {
            self.write_checkpoint(&path)?;
            let line = serde_json::to_string(self.log.epochs.last().expect("just pushed")).expect("record serializes");
            let log_path = dir.join(LOG_FILE);
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&log_path)
                .map_err(|e| Error::io(&log_path, e))?;
            writeln!(f, "{line}").map_err(|e| Error::io(&log_path, e))?;
        }
        Ok(self.log.epochs.last().expect("just pushed"))
    }

    fn write_checkpoint(&self, path: &Path) -> Result<()> {
        let state = TrainState {
            epoch: self.epochs_done(),
            steps: self.optimizer.steps(),
            config: self.config,
            log: self.log.clone(),
        };
        let meta = serde_json::json!({
            "model": self.model.meta(),
            "train": state,
            "provenance": self.provenance,
        });
        let params = self.model.params();
        let names: Vec<&str> = params.iter().map(|(_, n, _)| n).collect();
        let best_names: Vec<String> = names.iter().map(|n| format!("best/{n}")).collect();
        let m_names: Vec<String> = names.iter().map(|n| format!("adam.m/{n}")).collect();
        let v_names: Vec<String> = names.iter().map(|n| format!("adam.v/{n}")).collect();
        let mut tensors: Vec<(&str, &Tensor<T>)> = params.iter().map(|(_, n, t)| (n, t)).collect();
        tensors.extend(self.best.iter().zip(&best_names).map(|((_, _, t), n)| (n.as_str(), t)));
        let (m, v) = self.optimizer.moments();
        tensors.extend(m.iter().zip(&m_names).map(|(t, n)| (n.as_str(), t)));
        tensors.extend(v.iter().zip(&v_names).map(|(t, n)| (n.as_str(), t)));
        checkpoint::write(path, &meta, &tensors)
    }

    /// Train until the epoch limit or early stop.
    pub fn run(&mut self, train: &[Instance], dev: &[Instance]) -> Result<()> {
        while !self.finished() {
            self.run_epoch(train, dev)?;
        }
        Ok(())
    }

    /// The model with parameters from the selected epoch, plus the log.
    /// Also writes `model.ckpt` when an output directory was given.
    pub fn finish(self) -> Result<(M, TrainLog)> {
        let mut model = self.model;
        *model.params_mut() = self.best;
        if let Some(dir) = &self.out_dir {
            let mut meta = model.meta();
            if let Some(obj) = meta.as_object_mut() {
                obj.insert("log".into(), serde_json::to_value(&self.log).expect("log serializes"));
                obj.insert("provenance".into(), self.provenance.clone());
            }
            let tensors: Vec<(&str, &Tensor<T>)> = model.params().iter().map(|(_, n, t)| (n, t)).collect();
            checkpoint::write(&dir.join(BEST_FILE), &meta, &tensors)?;
        }
        Ok((model, self.log))
    }
}

/// Train `model` from scratch and return the selected-epoch model.
pub fn train<T: Real, M: Trainable<T>>(
    model: M,
    train: &[Instance],
    dev: &[Instance],
    config: TrainConfig,
    out_dir: Option<&Path>,
) -> Result<(M, TrainLog)> {
    if train.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if dev.is_empty() {
        return Err(Error::EmptyInput("dev set"));
    }
    let mut t = Trainer::new(model, config, out_dir)?;
    t.run(train, dev)?;
    t.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(seq: &[f64]) -> (usize, Option<usize>) {
        let mut s = EarlyStopping::new(2);
        let mut epochs = 0;
        for &a in seq {
            epochs += 1;
            if s.observe(a) {
                break;
            }
        }
        (epochs, s.best_epoch())
    }

    #[test]
    fn two_decreases_stop_training() {
        assert_eq!(run(&[0.20, 0.30, 0.25, 0.22]), (4, Some(2)));
        assert_eq!(run(&[0.3, 0.25, 0.26, 0.24, 0.23]), (5, Some(1)));
    }

    #[test]
    fn increasing_runs_to_the_end() {
        let seq: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert_eq!(run(&seq), (10, Some(10)));
    }

    #[test]
    fn equal_accuracy_is_not_a_decrease() {
        assert_eq!(run(&[0.5, 0.4, 0.4, 0.3, 0.6]), (5, Some(5)));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let c = TrainConfig {
            max_epochs: 0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
