//! Neural readers that pick the blank's filler from the context.
//!
//! All four readers encode the context with a bidirectional RNN and the query
//! (target sentence without its last word, plus a `<blank>` marker) with a
//! second one, then attend over context positions:
//!
//! * `stanford`: bilinear attention, answer scored by `o(a)·c` where `c` is
//!   the attention-weighted context vector;
//! * `stanford-mod`: the same attention, answer scored by `e(a)ᵀ W c` using
//!   the input embeddings;
//! * `as`: inner-product attention, answer scored by the summed attention at
//!   its positions;
//! * `ga`: several hops of gated attention before the `as` scoring.

mod features;

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{extract_candidates, CandidateSet, Instance, Prediction};
use crate::numeric::{
    birnn, checkpoint, init, CellKind, Grads, Graph, ParamId, ParamStore, Real, RnnCell, Tensor, Var,
};
use crate::resources::{punctuation, TokenSet};
use crate::vocab::{Vocab, BLANK_ID};

pub use features::{compute_features, PositionFeatures, NUM_FEATURES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReaderKind {
    #[serde(rename = "stanford")]
    Stanford,
    #[serde(rename = "stanford-mod")]
    StanfordModified,
    #[serde(rename = "as")]
    AttentionSum,
    #[serde(rename = "ga")]
    GatedAttention,
}

impl ReaderKind {
    pub const ALL: [ReaderKind; 4] = [
        ReaderKind::Stanford,
        ReaderKind::StanfordModified,
        ReaderKind::AttentionSum,
        ReaderKind::GatedAttention,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReaderKind::Stanford => "stanford",
            ReaderKind::StanfordModified => "stanford-mod",
            ReaderKind::AttentionSum => "as",
            ReaderKind::GatedAttention => "ga",
        }
    }

    fn pointer_sum(self) -> bool {
        matches!(self, ReaderKind::AttentionSum | ReaderKind::GatedAttention)
    }
}

impl std::fmt::Display for ReaderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ReaderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReaderKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown reader {s:?} (expected stanford, stanford-mod, as or ga)"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReaderConfig {
    pub kind: ReaderKind,
    /// Concatenate the four position features to context embeddings.
    #[serde(default)]
    pub features: bool,
    #[serde(default)]
    pub cell: CellKind,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    /// Gated-attention hops; ignored by other readers.
    #[serde(default = "default_hops")]
    pub hops: usize,
    /// Replace gated-attention gates with all-ones vectors.
    #[serde(default)]
    pub unit_gates: bool,
}

fn default_embed_dim() -> usize {
    64
}

fn default_hidden_dim() -> usize {
    64
}

fn default_hops() -> usize {
    3
}

impl ReaderConfig {
    pub fn new(kind: ReaderKind) -> Self {
        ReaderConfig {
            kind,
            features: false,
            cell: CellKind::Gru,
            embed_dim: default_embed_dim(),
            hidden_dim: default_hidden_dim(),
            hops: default_hops(),
            unit_gates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("embedding and hidden sizes must be positive".into()));
        }
        if self.kind == ReaderKind::GatedAttention && self.hops == 0 {
            return Err(Error::Config("gated attention needs at least one hop".into()));
        }
        Ok(())
    }

    fn context_input_dim(&self) -> usize {
        self.embed_dim + if self.features { NUM_FEATURES } else { 0 }
    }

    fn layers(&self) -> usize {
        match self.kind {
            ReaderKind::GatedAttention => self.hops,
            _ => 1,
        }
    }
}

/// Softmax of `h_i · g` over the rows of `h`.
pub fn attend_inner<T: Real>(h: &Tensor<T>, g: &[T], mask: Option<&[bool]>) -> Result<Vec<T>> {
    check_attention_dims(h, g.len(), mask)?;
    let scores: Vec<T> = (0..h.rows())
        .map(|i| crate::numeric::tensor::dot(h.row(i), g))
        .collect();
    crate::numeric::softmax(&scores, mask)
}

/// Softmax of `h_iᵀ W g` over the rows of `h`.
pub fn attend_bilinear<T: Real>(h: &Tensor<T>, g: &[T], w: &Tensor<T>, mask: Option<&[bool]>) -> Result<Vec<T>> {
    if w.shape().len() != 2 || w.cols() != g.len() {
        return Err(Error::Shape(format!(
            "bilinear {:?} against query of {}",
            w.shape(),
            g.len()
        )));
    }
    let mut wg = vec![T::zero(); w.rows()];
    crate::numeric::tensor::matvec_acc(w.data(), g, &mut wg);
    attend_inner(h, &wg, mask)
}

fn check_attention_dims<T: Real>(h: &Tensor<T>, dim: usize, mask: Option<&[bool]>) -> Result<()> {
    if h.shape().len() != 2 || h.cols() != dim {
        return Err(Error::Shape(format!(
            "attention over {:?} with query of {dim}",
            h.shape()
        )));
    }
    if mask.is_some_and(|m| m.len() != h.rows()) {
        return Err(Error::Shape("mask length differs from context length".into()));
    }
    Ok(())
}

/// Sum of attention over each candidate's positions, in candidate order.
pub fn pointer_sum(alpha: &[f64], candidates: &CandidateSet) -> Result<Vec<f64>> {
    candidates
        .iter()
        .map(|(w, pos)| {
            pos.iter()
                .map(|&p| {
                    alpha
                        .get(p)
                        .copied()
                        .ok_or_else(|| Error::Shape(format!("candidate {w:?} at {p} beyond {} weights", alpha.len())))
                })
                .sum()
        })
        .collect()
}

/// An instance mapped to ids, ready for the graph.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub context_ids: Vec<usize>,
    pub query_ids: Vec<usize>,
    pub features: Option<Vec<[f64; NUM_FEATURES]>>,
    pub candidates: CandidateSet,
    pub candidate_ids: Vec<usize>,
    /// Index of the target word among the candidates.
    pub target: Option<usize>,
}

impl Encoded {
    fn groups(&self) -> Vec<Vec<usize>> {
        self.candidates.iter().map(|(_, p)| p.to_vec()).collect()
    }
}

/// Graph outputs of one forward pass.
pub struct Forward {
    /// One score per candidate: logits for Stanford readers, attention mass
    /// for pointer-sum readers.
    pub scores: Var,
    /// Final attention over context positions.
    pub attention: Var,
}

#[derive(Debug, Clone)]
struct Layout {
    embed: ParamId,
    output: Option<ParamId>,
    w_att: Option<ParamId>,
    w_out: Option<ParamId>,
    /// One (forward, backward) context encoder per layer.
    doc: Vec<(RnnCell, RnnCell)>,
    /// One (forward, backward) query encoder per layer.
    query: Vec<(RnnCell, RnnCell)>,
}

/// A reader: configuration, vocabulary and parameters.
#[derive(Debug, Clone)]
pub struct Reader<T: Real> {
    pub config: ReaderConfig,
    pub vocab: Vocab,
    pub params: ParamStore<T>,
    layout: Layout,
    punctuation: Arc<TokenSet>,
}

fn layer_prefix(config: &ReaderConfig, layer: usize, side: &str) -> String {
    match config.kind {
        ReaderKind::GatedAttention => format!("hop{layer}.{side}"),
        _ => side.to_string(),
    }
}

impl<T: Real> Reader<T> {
    /// A freshly initialized reader.
    pub fn new(config: ReaderConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let (v, h2) = (config.embed_dim, 2 * config.hidden_dim);
        store.add("embed", init::embedding(&mut rng, vocab.len(), v))?;
        match config.kind {
            ReaderKind::Stanford => {
                store.add("output", init::embedding(&mut rng, vocab.len(), h2))?;
                store.add("W_att", init::xavier(&mut rng, h2, h2))?;
            }
            ReaderKind::StanfordModified => {
                store.add("W_att", init::xavier(&mut rng, h2, h2))?;
                store.add("W_out", init::xavier(&mut rng, v, h2))?;
            }
            ReaderKind::AttentionSum | ReaderKind::GatedAttention => {}
        }
        for layer in 0..config.layers() {
            let doc_in = if layer == 0 { config.context_input_dim() } else { h2 };
            for (side, input) in [("doc", doc_in), ("query", v)] {
                let prefix = layer_prefix(&config, layer, side);
                for dir in ["fwd", "bwd"] {
                    RnnCell::register(
                        &mut store,
                        &format!("{prefix}.{dir}"),
                        config.cell,
                        input,
                        config.hidden_dim,
                        &mut rng,
                    )?;
                }
            }
        }
        Self::from_parts(config, vocab, store)
    }

    /// Wrap existing parameters, checking every expected tensor is present
    /// with a consistent shape.
    pub fn from_parts(config: ReaderConfig, vocab: Vocab, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let (v, h, h2) = (config.embed_dim, config.hidden_dim, 2 * config.hidden_dim);
        let need = |name: &str, shape: &[usize]| -> Result<ParamId> {
            let id = params
                .id(name)
                .ok_or_else(|| Error::ManifestMismatch(format!("missing parameter {name}")))?;
            if params.get(id).shape() != shape {
                return Err(Error::ManifestMismatch(format!(
                    "{name} has shape {:?}, expected {shape:?}",
                    params.get(id).shape()
                )));
            }
            Ok(id)
        };
        let n = vocab.len();
        let embed = need("embed", &[n, v])?;
        let (output, w_att, w_out) = match config.kind {
            ReaderKind::Stanford => (Some(need("output", &[n, h2])?), Some(need("W_att", &[h2, h2])?), None),
            ReaderKind::StanfordModified => (None, Some(need("W_att", &[h2, h2])?), Some(need("W_out", &[v, h2])?)),
            _ => (None, None, None),
        };
        let mut doc = Vec::new();
        let mut query = Vec::new();
        for layer in 0..config.layers() {
            let doc_in = if layer == 0 { config.context_input_dim() } else { h2 };
            for (side, input, dst) in [("doc", doc_in, &mut doc), ("query", v, &mut query)] {
                let prefix = layer_prefix(&config, layer, side);
                let mut pair = Vec::new();
                for dir in ["fwd", "bwd"] {
                    let cell = RnnCell::attach(&params, &format!("{prefix}.{dir}"), config.cell)?;
                    if cell.input_dim != input || cell.hidden_dim != h {
                        return Err(Error::ManifestMismatch(format!(
                            "{prefix}.{dir} is {}→{}, expected {input}→{h}",
                            cell.input_dim, cell.hidden_dim
                        )));
                    }
                    pair.push(cell);
                }
                let bwd = pair.pop().expect("two cells");
                let fwd = pair.pop().expect("two cells");
                dst.push((fwd, bwd));
            }
        }
        let expected = 1
            + usize::from(output.is_some())
            + usize::from(w_att.is_some())
            + usize::from(w_out.is_some())
            + doc
                .iter()
                .chain(&query)
                .map(|(f, b)| f.param_ids().count() + b.param_ids().count())
                .sum::<usize>();
        if params.len() != expected {
            return Err(Error::ManifestMismatch(format!(
                "{} parameters present, {expected} expected for this configuration",
                params.len()
            )));
        }
        Ok(Reader {
            config,
            vocab,
            params,
            layout: Layout {
                embed,
                output,
                w_att,
                w_out,
                doc,
                query,
            },
            punctuation: punctuation(),
        })
    }

    /// Same reader in another precision.
    pub fn cast<U: Real>(&self) -> Reader<U> {
        Reader {
            config: self.config,
            vocab: self.vocab.clone(),
            params: self.params.cast(),
            layout: self.layout.clone(),
            punctuation: self.punctuation.clone(),
        }
    }

    pub fn with_punctuation(mut self, punctuation: Arc<TokenSet>) -> Self {
        self.punctuation = punctuation;
        self
    }

    pub fn encode(&self, instance: &Instance) -> Result<Encoded> {
        let candidates = extract_candidates(instance, &self.punctuation)?;
        let context_ids = self.vocab.ids(instance.context.iter().flatten().map(String::as_str));
        let mut query_ids = self.vocab.ids(instance.query_prefix().iter().map(String::as_str));
        query_ids.push(BLANK_ID);
        let features = self.config.features.then(|| {
            compute_features(instance)
                .into_iter()
                .map(PositionFeatures::to_array)
                .collect()
        });
        let candidate_ids = candidates.words().map(|w| self.vocab.id(w)).collect();
        let target = candidates.index_of(&instance.target_word);
        Ok(Encoded {
            context_ids,
            query_ids,
            features,
            candidates,
            candidate_ids,
            target,
        })
    }

    fn context_inputs(&self, g: &mut Graph<'_, T>, enc: &Encoded) -> Result<Var> {
        let emb = g.embed(self.layout.embed, &enc.context_ids)?;
        match &enc.features {
            None => Ok(emb),
            Some(rows) => {
                let data = rows.iter().flatten().map(|&x| T::from_f64(x)).collect();
                let f = g.input(Tensor::matrix(rows.len(), NUM_FEATURES, data)?);
                g.concat_cols(emb, f)
            }
        }
    }

    /// Build the forward computation on `g`, whose parameter store must have
    /// this reader's layout.
    pub fn forward(&self, g: &mut Graph<'_, T>, enc: &Encoded) -> Result<Forward> {
        let l = &self.layout;
        let query_emb = g.embed(l.embed, &enc.query_ids)?;
        let mut doc_in = self.context_inputs(g, enc)?;
        let layers = l.doc.len();
        let mut doc = None;
        let mut query = None;
        for layer in 0..layers {
            let (df, db) = &l.doc[layer];
            let (qf, qb) = &l.query[layer];
            let d = birnn(g, doc_in, df, db, None)?;
            let q = birnn(g, query_emb, qf, qb, None)?;
            if layer + 1 < layers {
                doc_in = if self.config.unit_gates {
                    d.states
                } else {
                    // Each document token attends over query tokens and is
                    // gated by the attended query vector.
                    let s = g.matmul_bt(d.states, q.states)?;
                    let a = g.softmax_rows(s)?;
                    let qt = g.matmul(a, q.states)?;
                    g.mul(d.states, qt)?
                };
            }
            doc = Some(d);
            query = Some(q);
        }
        let (doc, query) = (doc.expect("at least one layer"), query.expect("at least one layer"));
        let h = doc.states;
        let qsum = query.summary(g);
        match self.config.kind {
            ReaderKind::Stanford | ReaderKind::StanfordModified => {
                let w_att = g.param(l.w_att.expect("stanford attention"));
                let wq = g.matvec(w_att, qsum)?;
                let s = g.matvec(h, wq)?;
                let alpha = g.softmax(s, None)?;
                let c = g.mat_t_vec(h, alpha)?;
                let scores = if let Some(out) = l.output {
                    let o = g.embed(out, &enc.candidate_ids)?;
                    g.matvec(o, c)?
                } else {
                    let w_out = g.param(l.w_out.expect("modified stanford matcher"));
                    let wc = g.matvec(w_out, c)?;
                    let e = g.embed(l.embed, &enc.candidate_ids)?;
                    g.matvec(e, wc)?
                };
                Ok(Forward {
                    scores,
                    attention: alpha,
                })
            }
            ReaderKind::AttentionSum | ReaderKind::GatedAttention => {
                let s = g.matvec(h, qsum)?;
                let alpha = g.softmax(s, None)?;
                let scores = g.group_sum(alpha, &enc.groups())?;
                Ok(Forward {
                    scores,
                    attention: alpha,
                })
            }
        }
    }

    fn loss_node(&self, g: &mut Graph<'_, T>, enc: &Encoded, target: usize) -> Result<Var> {
        let f = self.forward(g, enc)?;
        if self.config.kind.pointer_sum() {
            let total = g.sum(f.scores);
            let pt = g.pick(f.scores, target)?;
            let (lt, lp) = (g.log(total), g.log(pt));
            g.sub(lt, lp)
        } else {
            g.nll_softmax(f.scores, target)
        }
    }

    fn target_of(enc: &Encoded, instance: &Instance) -> Result<usize> {
        enc.target
            .ok_or_else(|| Error::TargetNotInCandidates(instance.id.clone()))
    }

    /// Negative log probability of the target word, normalized over the
    /// candidates, evaluated with `params` (same layout as `self.params`).
    pub fn loss_with(&self, params: &ParamStore<T>, instance: &Instance) -> Result<f64> {
        let enc = self.encode(instance)?;
        let target = Self::target_of(&enc, instance)?;
        let mut g = Graph::new(params);
        let loss = self.loss_node(&mut g, &enc, target)?;
        let v = g.value(loss).data()[0].as_f64();
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("loss on {}", instance.id)));
        }
        Ok(v)
    }

    pub fn loss(&self, instance: &Instance) -> Result<f64> {
        self.loss_with(&self.params, instance)
    }

    /// Loss and parameter gradients for one instance.
    pub fn loss_and_grads(&self, instance: &Instance) -> Result<(f64, Grads<T>)> {
        let enc = self.encode(instance)?;
        let target = Self::target_of(&enc, instance)?;
        let mut g = Graph::new(&self.params);
        let loss = self.loss_node(&mut g, &enc, target)?;
        let grads = g.backward(loss)?;
        Ok((g.value(loss).data()[0].as_f64(), grads))
    }

    /// Attention over context positions and per-candidate scores.
    pub fn scores(&self, instance: &Instance) -> Result<(Encoded, Vec<f64>, Vec<f64>)> {
        let enc = self.encode(instance)?;
        let mut g = Graph::new(&self.params);
        let f = self.forward(&mut g, &enc)?;
        let alpha = g.value(f.attention).to_f64_vec();
        let scores = g.value(f.scores).to_f64_vec();
        Ok((enc, alpha, scores))
    }

    pub fn predict(&self, instance: &Instance) -> Result<Prediction> {
        let (enc, _, mut scores) = self.scores(instance)?;
        if self.config.kind.pointer_sum() {
            let total: f64 = scores.iter().sum();
            if total > 0.0 {
                scores.iter_mut().for_each(|s| *s /= total);
            }
        }
        Prediction::rank(&enc.candidates, &scores)
    }

    /// Manifest metadata describing this reader.
    pub fn meta(&self) -> serde_json::Value {
        serde_json::json!({
            "model": "reader",
            "config": self.config,
            "vocab": self.vocab,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tensors: Vec<(&str, &Tensor<T>)> = self.params.iter().map(|(_, n, t)| (n, t)).collect();
        checkpoint::write(path, &self.meta(), &tensors)
    }

    /// Rebuild from checkpoint metadata and tensors (extra tensors whose names
    /// contain `/` are ignored).
    pub fn from_checkpoint(meta: &serde_json::Value, tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        if meta.get("model").and_then(|m| m.as_str()) != Some("reader") {
            return Err(Error::ManifestMismatch("checkpoint does not hold a reader".into()));
        }
        let config: ReaderConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| Error::ManifestMismatch(format!("reader config: {e}")))?;
        let vocab: Vocab = serde_json::from_value(meta["vocab"].clone())
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
