//! Unidirectional LSTM next-word model.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{Instance, Prediction};
use crate::numeric::{checkpoint, init, CellKind, Grads, Graph, ParamId, ParamStore, Real, RnnCell, Tensor, Var};
use crate::resources::{punctuation, stopwords, TokenSet};
use crate::vocab::Vocab;

use super::lm_candidates;

/// Sequence-start marker added to the vocabulary.
pub const START: &str = "<s>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LstmLmConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
}

impl Default for LstmLmConfig {
    fn default() -> Self {
        LstmLmConfig {
            embed_dim: 64,
            hidden_dim: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LstmLm<T: Real> {
    pub config: LstmLmConfig,
    pub vocab: Vocab,
    pub params: ParamStore<T>,
    embed: ParamId,
    cell: RnnCell,
    out_w: ParamId,
    out_b: ParamId,
    stopwords: Arc<TokenSet>,
    punctuation: Arc<TokenSet>,
}

impl<T: Real> LstmLm<T> {
    /// Fresh model; `vocab` should come from training data only.
    pub fn new(config: LstmLmConfig, mut vocab: Vocab, seed: u64) -> Result<Self> {
        if config.embed_dim == 0 || config.hidden_dim == 0 {
            return Err(Error::Config("embedding and hidden sizes must be positive".into()));
        }
        vocab.insert(START);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let n = vocab.len();
        params.add("embed", init::embedding(&mut rng, n, config.embed_dim))?;
        RnnCell::register(
            &mut params,
            "lstm",
            CellKind::Lstm,
            config.embed_dim,
            config.hidden_dim,
            &mut rng,
        )?;
        params.add("out.W", init::xavier(&mut rng, n, config.hidden_dim))?;
        params.add("out.b", Tensor::zeros(&[n]))?;
        Self::from_parts(config, vocab, params)
    }

    pub fn from_parts(config: LstmLmConfig, vocab: Vocab, params: ParamStore<T>) -> Result<Self> {
        let need = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let id = params
                .id(name)
                .ok_or_else(|| Error::ManifestMismatch(format!("missing parameter {name}")))?;
            if params.get(id).shape() != shape {
                return Err(Error::ManifestMismatch(format!(
                    "{name} has shape {:?}",
                    params.get(id).shape()
                )));
            }
            Ok(id)
        };
        let n = vocab.len();
        let embed = need("embed", &[n, config.embed_dim])?;
        let out_w = need("out.W", &[n, config.hidden_dim])?;
        let out_b = need("out.b", &[n])?;
        let cell = RnnCell::attach(&params, "lstm", CellKind::Lstm)?;
        if cell.input_dim != config.embed_dim || cell.hidden_dim != config.hidden_dim {
            return Err(Error::ManifestMismatch("lstm sizes disagree with configuration".into()));
        }
        if vocab.get(START).is_none() {
            return Err(Error::ManifestMismatch(format!("vocabulary lacks {START}")));
        }
        Ok(LstmLm {
            config,
            vocab,
            params,
            embed,
            cell,
            out_w,
            out_b,
            stopwords: stopwords(),
            punctuation: punctuation(),
        })
    }

    pub fn cast<U: Real>(&self) -> LstmLm<U> {
        LstmLm {
            config: self.config,
            vocab: self.vocab.clone(),
            params: self.params.cast(),
            embed: self.embed,
            cell: self.cell.clone(),
            out_w: self.out_w,
            out_b: self.out_b,
            stopwords: self.stopwords.clone(),
            punctuation: self.punctuation.clone(),
        }
    }

    fn start_id(&self) -> usize {
        self.vocab.id(START)
    }

    /// Hidden states after reading `<s>` then each of `ids`.
    fn hidden(&self, g: &mut Graph<'_, T>, ids: &[usize]) -> Result<Vec<Var>> {
        let mut seq = vec![self.start_id()];
        seq.extend_from_slice(ids);
        let x = g.embed(self.embed, &seq)?;
        let rows = (0..seq.len()).map(|t| g.row(x, t)).collect::<Result<Vec<_>>>()?;
        self.cell.run(g, &rows, 0..seq.len(), None)
    }

    fn logits(&self, g: &mut Graph<'_, T>, h: Var) -> Result<Var> {
        let w = g.param(self.out_w);
        let b = g.param(self.out_b);
        g.affine(&[(w, h)], Some(b))
    }

    fn sequence(&self, instance: &Instance) -> Vec<usize> {
        self.vocab
            .ids(instance.context.iter().flatten().chain(&instance.target_sentence))
    }

    fn loss_node(&self, g: &mut Graph<'_, T>, ids: &[usize]) -> Result<Var> {
        if ids.is_empty() {
            return Err(Error::EmptyInput("language model sequence"));
        }
        let states = self.hidden(g, &ids[..ids.len() - 1])?;
        let mut terms = Vec::with_capacity(ids.len());
        for (t, &next) in ids.iter().enumerate() {
            let logits = self.logits(g, states[t])?;
            terms.push(g.nll_softmax(logits, next)?);
        }
        let all = g.concat(&terms);
        Ok(g.sum(all))
    }

    /// Cross entropy summed over every position of the instance.
    pub fn loss_with(&self, params: &ParamStore<T>, instance: &Instance) -> Result<f64> {
        let mut g = Graph::new(params);
        let l = self.loss_node(&mut g, &self.sequence(instance))?;
        Ok(g.value(l).data()[0].as_f64())
    }

    pub fn loss_and_grads(&self, instance: &Instance) -> Result<(f64, Grads<T>)> {
        let mut g = Graph::new(&self.params);
        let l = self.loss_node(&mut g, &self.sequence(instance))?;
        let grads = g.backward(l)?;
        Ok((g.value(l).data()[0].as_f64(), grads))
    }

    /// Number of predicted tokens in `instance` (for per-token losses).
    pub fn tokens(&self, instance: &Instance) -> usize {
        instance.context_len() + instance.target_sentence.len()
    }

    /// Next-word distribution after the context and the target-sentence
    /// prefix.
    pub fn blank_distribution(&self, instance: &Instance) -> Result<Vec<f64>> {
        let ids = self
            .vocab
            .ids(instance.context.iter().flatten().chain(instance.query_prefix()));
        let mut g = Graph::new(&self.params);
        let states = self.hidden(&mut g, &ids)?;
        let logits = self.logits(&mut g, *states.last().expect("start token"))?;
        let p = g.softmax(logits, None)?;
        Ok(g.value(p).to_f64_vec())
    }

    /// Replace the word lists used to form candidate sets.
    pub fn with_word_lists(mut self, stopwords: Arc<TokenSet>, punctuation: Arc<TokenSet>) -> Self {
        self.stopwords = stopwords;
        self.punctuation = punctuation;
        self
    }

    /// Rank non-stopword context words by their probability at the blank.
    pub fn score_blank(&self, instance: &Instance) -> Result<Option<Prediction>> {
        let Some(c) = lm_candidates(instance, &self.stopwords, &self.punctuation) else {
            return Ok(None);
        };
        let dist = self.blank_distribution(instance)?;
        let scores: Vec<f64> = c.words().map(|w| dist[self.vocab.id(w)]).collect();
        Prediction::rank(&c, &scores).map(Some)
    }

    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "model": "lstm-lm",
            "config": self.config,
            "vocab": self.vocab,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors: Vec<(&str, &Tensor<T>)> = self.params.iter().map(|(_, n, t)| (n, t)).collect();
        checkpoint::write(path, &self.meta(), &tensors)
    }

    pub fn from_checkpoint(meta: &serde_json::Value, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        if meta.get("model").and_then(|m| m.as_str()) != Some("lstm-lm") {
            return Err(Error::ManifestMismatch(
                "checkpoint does not hold an LSTM language model".into(),
            ));
        }
        let config = serde_json::from_value(meta["config"].clone())
            .map_err(|e| Error::ManifestMismatch(format!("lstm config: {e}")))?;
        let vocab = serde_json::from_value(meta["vocab"].clone())
            .map_err(|e| Error::ManifestMismatch(format!("vocabulary: {e}")))?;
        let mut params = ParamStore::new();
        for (name, t) in tensors {
            if !name.contains('/') {
                params.add(name, t)?;
            }
        }
        Self::from_parts(config, vocab, params)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (manifest, tensors) = checkpoint::read(path)?;
        Self::from_checkpoint(&manifest.meta, tensors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{grad_check, GradCheckConfig};

    fn instance() -> Instance {
        let s = |x: &str| x.split_whitespace().map(String::from).collect();
        Instance::new("lm", vec![s("the wolf ran to the wolf den .")], s("then the wolf")).unwrap()
    }

    fn model() -> LstmLm<f64> {
        let i = instance();
        let cfg = LstmLmConfig {
            embed_dim: 3,
            hidden_dim: 4,
        };
        LstmLm::new(cfg, Vocab::from_instances(std::slice::from_ref(&i), 1), 3).unwrap()
    }

    #[test]
    fn blank_distribution_sums_to_one() {
        let d = model().blank_distribution(&instance()).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn never_ranks_a_stopword() {
        let p = model().score_blank(&instance()).unwrap().unwrap();
        let words: Vec<_> = p.top(10).collect();
        assert!(words.contains(&"wolf"));
        assert!(!words.contains(&"the") && !words.contains(&"to"));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = model();
        let i = instance();
        let (_, grads) = m.loss_and_grads(&i).unwrap();
        let mut p = m.params.clone();
        let r = grad_check(&mut p, &grads, |p| m.loss_with(p, &i), &GradCheckConfig::default()).unwrap();
        assert!(r.passed, "{:?}", r.worst);
    }

    #[test]
    fn loss_sums_per_position_terms() {
        let m = model();
        let i = instance();
        let per_token = m.loss(&i) / m.tokens(&i) as f64;
        let uniform = (m.vocab.len() as f64).ln();
        assert!((per_token - uniform).abs() < 0.5, "{per_token} vs {uniform}");
    }

    impl LstmLm<f64> {
        fn loss(&self, i: &Instance) -> f64 {
            self.loss_with(&self.params, i).unwrap()
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.ckpt");
        let m = model();
        m.save(&path).unwrap();
        let back = LstmLm::<f64>::load(&path).unwrap();
        assert_eq!(
            back.score_blank(&instance()).unwrap(),
            m.score_blank(&instance()).unwrap()
        );
        assert!(crate::readers::Reader::<f64>::load(&path).is_err());
    }
}
