use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use cloze_core::baselines::{BaselineKind, LstmLm, NGramModel};
use cloze_core::dataset::{self, SplitSpec};
use cloze_core::eval::{self, EvalReport, NGramPredictor, PickerPredictor, Predictor};
use cloze_core::numeric::{checkpoint, grad_check, GradCheckConfig, Real};
use cloze_core::readers::{Reader, ReaderKind};
use cloze_core::resources::TokenSet;
use cloze_core::text::{self, Document};
use cloze_core::training::{Trainer, BEST_FILE};
use cloze_core::{synth, Instance, Sentence, Vocab};
use serde_json::{json, Value};

use crate::config::{Config, Precision};
use crate::{BaselineArgs, BuildDataArgs, Cli, Command, CompareArgs, EvaluateArgs, FeatureChoice, GradcheckArgs};
use crate::{PredictArgs, TrainArgs, UsageError, VerificationFailure};

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            bail!(UsageError("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let config = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::BuildData(a) => build_data(&config, a),
        Command::Train(a) => train(&config, a),
        Command::Evaluate(a) => evaluate(&config, a),
        Command::Baseline(a) => baseline(&config, a),
        Command::Predict(a) => predict(&config, a),
        Command::Gradcheck(a) => gradcheck(&config, a),
        Command::Compare(a) => compare(a),
    }
}

/// The command line as given, recorded in every artifact.
fn invocation() -> Value {
    json!(std::env::args().collect::<Vec<_>>())
}

fn print_json(value: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

fn read_corpus(dir: &Path) -> Result<Vec<Document>> {
    let files = text::corpus_files(dir)?;
    if files.is_empty() {
        bail!(cloze_core::Error::EmptyInput("corpus directory has no files"));
    }
    files.iter().map(|f| Ok(text::read_document(dir, f)?)).collect()
}

fn build_data(config: &Config, a: BuildDataArgs) -> Result<()> {
    let punctuation = config.punctuation()?;
    let seed = a.seed.unwrap_or(config.seed);
    let spec = SplitSpec {
        train_fraction: a.train_fraction.unwrap_or(dataset::DEFAULT_TRAIN_FRACTION),
        seed,
        by_document: a.by_document,
    };
    let docs = read_corpus(&a.corpus)?;
    let instances: Vec<Instance> = dataset::build_instances(docs.clone(), &punctuation).collect();
    let stats = dataset::corpus_stats(&instances)?;
    let (train, val) = dataset::split(instances, &spec)?;
    text::write_instances(&train, &a.out)?;
    text::write_instances(&val, &a.val_out)?;
    let mut summary = json!({
        "invocation": invocation(),
        "documents": docs.len(),
        "split": spec,
        "train": train.len(),
        "val": val.len(),
        "stats": stats,
    });
    if let (Some(path), Some(n)) = (&a.control_out, a.control_n) {
        let control = dataset::sample_control(docs, n, seed, &punctuation)?;
        text::write_instances(&control, path)?;
        summary["control"] = json!({
            "instances": control.len(),
            "stats": dataset::corpus_stats(&control)?,
        });
        write_json(&sidecar(path), &summary)?;
    }
    write_json(&sidecar(&a.out), &summary)?;
    write_json(&sidecar(&a.val_out), &summary)?;
    print_json(&summary)
}

fn train(config: &Config, a: TrainArgs) -> Result<()> {
    match config.precision {
        Precision::F32 => train_as::<f32>(config, a),
        Precision::F64 => train_as::<f64>(config, a),
    }
}

fn train_as<T: Real>(config: &Config, a: TrainArgs) -> Result<()> {
    let punctuation = config.punctuation()?;
    let seed = a.seed.unwrap_or(config.seed);
    let train_cfg = config.train(seed);
    let train_set = text::load_instances(&a.train)?;
    let dev = text::load_instances(&a.dev)?;
    let mut trainer = match &a.resume {
        Some(path) => {
            let manifest = checkpoint::read_manifest(path)?;
            let model = &manifest.meta["model"];
            let kind: Option<ReaderKind> = serde_json::from_value(model["config"]["kind"].clone()).ok();
            let features = model["config"]["features"].as_bool();
            if kind != Some(a.reader) || features != Some(a.features) {
                bail!(cloze_core::Error::ManifestMismatch(format!(
                    "{} does not hold a {} reader with features={}",
                    path.display(),
                    a.reader,
                    a.features
                )));
            }
            let mut t = Trainer::<T, Reader<T>>::resume(path, train_cfg, Some(&a.out))?;
            let m = t.model_mut();
            *m = m.clone().with_punctuation(punctuation);
            t
        }
        None => {
            if train_set.is_empty() {
                bail!(cloze_core::Error::EmptyInput("training set"));
            }
            let vocab = Vocab::from_instances(&train_set, config.reader.min_count);
            let reader =
                Reader::<T>::new(config.reader(a.reader, a.features), vocab, seed)?.with_punctuation(punctuation);
            Trainer::new(reader, train_cfg, Some(&a.out))?
        }
    };
    trainer.provenance = json!({ "invocation": invocation(), "config": config });
    trainer.run(&train_set, &dev)?;
    let (_, log) = trainer.finish()?;
    print_json(&json!({
        "invocation": invocation(),
        "model": a.out.join(BEST_FILE),
        "log": log,
    }))
}

/// A loaded checkpoint of any supported model and precision.
enum Model {
    Reader32(Reader<f32>),
    Reader64(Reader<f64>),
    Lstm32(LstmLm<f32>),
    Lstm64(LstmLm<f64>),
}

impl Model {
    fn load(path: &Path, config: &Config) -> Result<Self> {
        let manifest = checkpoint::read_manifest(path)?;
        let punctuation = config.punctuation()?;
        let stopwords = config.stopwords()?;
        // Epoch checkpoints nest the model description under "model".
        let kind = match &manifest.meta["model"] {
            Value::Object(inner) => inner.get("model").and_then(Value::as_str).map(str::to_owned),
            v => v.as_str().map(str::to_owned),
        };
        let model = match (kind.as_deref(), manifest.precision.as_str()) {
            (Some("reader"), "f32") => Model::Reader32(load_reader(path)?.with_punctuation(punctuation)),
            (Some("reader"), "f64") => Model::Reader64(load_reader(path)?.with_punctuation(punctuation)),
            (Some("lstm-lm"), "f32") => Model::Lstm32(load_lstm(path)?.with_word_lists(stopwords, punctuation)),
            (Some("lstm-lm"), "f64") => Model::Lstm64(load_lstm(path)?.with_word_lists(stopwords, punctuation)),
            (k, p) => bail!(cloze_core::Error::ManifestMismatch(format!(
                "unsupported model {k:?} at precision {p:?}"
            ))),
        };
        Ok(model)
    }

    /// Report name: reader kind with `+f` when features are on, or `lstm`.
    fn name(&self) -> String {
        let reader =
            |c: &cloze_core::readers::ReaderConfig| format!("{}{}", c.kind, if c.features { "+f" } else { "" });
        match self {
            Model::Reader32(m) => reader(&m.config),
            Model::Reader64(m) => reader(&m.config),
            Model::Lstm32(_) | Model::Lstm64(_) => "lstm".into(),
        }
    }

    fn predictor(&self) -> &dyn Predictor {
        match self {
            Model::Reader32(m) => m,
            Model::Reader64(m) => m,
            Model::Lstm32(m) => m,
            Model::Lstm64(m) => m,
        }
    }
}

fn model_meta(meta: &Value) -> &Value {
    match &meta["model"] {
        inner @ Value::Object(_) => inner,
        _ => meta,
    }
}

fn load_reader<T: Real>(path: &Path) -> Result<Reader<T>> {
    let (manifest, tensors) = checkpoint::read::<T>(path)?;
    Ok(Reader::from_checkpoint(model_meta(&manifest.meta), tensors)?)
}

fn load_lstm<T: Real>(path: &Path) -> Result<LstmLm<T>> {
    let (manifest, tensors) = checkpoint::read::<T>(path)?;
    Ok(LstmLm::from_checkpoint(model_meta(&manifest.meta), tensors)?)
}

fn report_json(name: &str, report: &EvalReport) -> Value {
    json!({ "name": name, "invocation": invocation(), "report": report })
}

fn evaluate(config: &Config, a: EvaluateArgs) -> Result<()> {
    let model = Model::load(&a.model, config)?;
    let data = text::load_eval_data(&a.data)?;
    let report = eval::evaluate_predictor(model.predictor(), &data, a.topk, a.labels)?;
    print_json(&report_json(&model.name(), &report))
}

/// Sentences for language-model training: every sentence of a document
/// directory, or every context and target sentence of an instance file.
fn lm_sentences(path: &Path) -> Result<Vec<Sentence>> {
    if path.is_dir() {
        return Ok(read_corpus(path)?.into_iter().flat_map(|d| d.sentences).collect());
    }
    Ok(text::load_instances(path)?
        .into_iter()
        .flat_map(|i| i.context.into_iter().chain(std::iter::once(i.target_sentence)))
        .collect())
}

/// Instances for LSTM training: built from a document directory, or read
/// from an instance file.
fn lm_instances(path: &Path, punctuation: &TokenSet) -> Result<Vec<Instance>> {
    if path.is_dir() {
        return Ok(dataset::build_instances(read_corpus(path)?, punctuation).collect());
    }
    Ok(text::load_instances(path)?)
}

fn baseline(config: &Config, a: BaselineArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(config.seed);
    let punctuation = config.punctuation()?;
    let stopwords = config.stopwords()?;
    let data = text::load_eval_data(&a.data)?;
    let need_corpus = || {
        a.train_corpus
            .as_deref()
            .ok_or_else(|| UsageError(format!("--train-corpus is required for --kind {}", a.kind)))
    };
    let report = match a.kind {
        BaselineKind::Ngram | BaselineKind::NgramCache => {
            let sentences = lm_sentences(need_corpus()?)?;
            let model = NGramModel::train(&sentences, config.lm.order)?;
            let cache = (a.kind == BaselineKind::NgramCache).then(|| config.cache(a.lambda));
            if let Some(c) = &cache {
                c.validate()?;
            }
            let mut p = NGramPredictor::new(model, cache);
            p.stopwords = stopwords;
            p.punctuation = punctuation;
            eval::evaluate_predictor(&p, &data, a.topk, a.labels)?
        }
        BaselineKind::Lstm => {
            let model = match &a.model {
                Some(path) => Model::load(path, config)?,
                None => train_lstm(config, need_corpus()?, a.out.as_deref(), seed, &punctuation)?,
            };
            eval::evaluate_predictor(model.predictor(), &data, a.topk, a.labels)?
        }
        kind => {
            let picker = kind.picker().expect("remaining kinds are pickers");
            let p = PickerPredictor {
                picker,
                seed,
                stopwords,
                punctuation,
            };
            eval::evaluate_predictor(&p, &data, a.topk, a.labels)?
        }
    };
    print_json(&report_json(a.kind.as_str(), &report))
}

fn train_lstm(
    config: &Config,
    corpus: &Path,
    out: Option<&Path>,
    seed: u64,
    punctuation: &Arc<TokenSet>,
) -> Result<Model> {
    let instances = lm_instances(corpus, punctuation)?;
    let frac = config.lm.lstm_dev_fraction;
    if !(frac > 0.0 && frac < 1.0) {
        bail!(UsageError(format!(
            "lm.lstm_dev_fraction must lie in (0, 1), got {frac}"
        )));
    }
    let spec = SplitSpec {
        train_fraction: 1.0 - frac,
        seed,
        by_document: false,
    };
    let (train_set, dev) = dataset::split(instances, &spec)?;
    if train_set.is_empty() {
        bail!(cloze_core::Error::EmptyInput("LSTM training set"));
    }
    let vocab = Vocab::from_instances(&train_set, config.reader.min_count);
    let stopwords = config.stopwords()?;
    macro_rules! fit {
        ($t:ty, $variant:ident) => {{
            let lm = LstmLm::<$t>::new(config.lstm(), vocab, seed)?.with_word_lists(stopwords, punctuation.clone());
            let mut trainer = Trainer::new(lm, config.train(seed), out)?;
            trainer.provenance = json!({ "invocation": invocation(), "config": config });
            trainer.run(&train_set, &dev)?;
            Model::$variant(trainer.finish()?.0)
        }};
    }
    Ok(match config.precision {
        Precision::F32 => fit!(f32, Lstm32),
        Precision::F64 => fit!(f64, Lstm64),
    })
}

fn parse_line(line: &str, id: String, punctuation: &TokenSet) -> Result<Instance> {
    if line.trim_start().starts_with('{') {
        let inst: Instance = serde_json::from_str(line)?;
        inst.validate().map_err(cloze_core::Error::MalformedPassage)?;
        return Ok(inst);
    }
    Ok(text::parse_passage_line_with(line, id, punctuation)?)
}

fn predict(config: &Config, a: PredictArgs) -> Result<()> {
    let model = Model::load(&a.model, config)?;
    let punctuation = config.punctuation()?;
    let lines: Vec<String> = match (&a.passage, &a.input) {
        (Some(p), _) => vec![p.clone()],
        (None, Some(path)) if path.as_os_str() == "-" => std::io::stdin().lock().lines().collect::<Result<_, _>>()?,
        (None, Some(path)) => std::fs::read_to_string(path)
            .map_err(|e| cloze_core::Error::Io {
                path: path.clone(),
                source: e,
            })?
            .lines()
            .map(String::from)
            .collect(),
        (None, None) => bail!(UsageError("give --passage or --input".into())),
    };
    let mut out = std::io::stdout().lock();
    let mut failures = 0;
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 1;
        let outcome = parse_line(line, format!("line-{n}"), &punctuation).and_then(|inst| {
            let pred = model.predictor().predict(&inst)?;
            Ok((inst, pred))
        });
        let record = match outcome {
            Ok((inst, Some(pred))) => {
                let ranked: Vec<Value> = pred
                    .ranked
                    .iter()
                    .take(a.topk)
                    .map(|(w, s)| json!({ "word": w, "score": s }))
                    .collect();
                json!({ "line": n, "id": inst.id, "target": inst.target_word, "ranked": ranked })
            }
            Ok((inst, None)) => {
                failures += 1;
                json!({ "line": n, "id": inst.id, "error": "no candidate words in the context" })
            }
            Err(e) => {
                failures += 1;
                json!({ "line": n, "error": format!("{e:#}") })
            }
        };
        serde_json::to_writer(&mut out, &record)?;
        writeln!(out)?;
    }
    out.flush()?;
    if a.strict && failures > 0 {
        bail!(cloze_core::Error::MalformedPassage(format!(
            "{failures} line(s) could not be scored"
        )));
    }
    Ok(())
}

fn gradcheck(config: &Config, a: GradcheckArgs) -> Result<()> {
    use rand::SeedableRng;
    let seed = a.seed.unwrap_or(config.seed);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let instance = synth::toy_instance(&mut rng, "gradcheck");
    let kinds: Vec<ReaderKind> = a.reader.map_or(ReaderKind::ALL.to_vec(), |k| vec![k]);
    let features: &[bool] = match a.features {
        FeatureChoice::Off => &[false],
        FeatureChoice::On => &[true],
        FeatureChoice::Both => &[false, true],
    };
    let check = GradCheckConfig {
        tolerance: a.tolerance,
        seed,
        ..GradCheckConfig::default()
    };
    let mut results = Vec::new();
    let mut failed = 0;
    for &kind in &kinds {
        for &f in features {
            // Small dimensions keep the full coordinate sweep fast.
            let mut rc = config.reader(kind, f);
            rc.embed_dim = 6;
            rc.hidden_dim = 3;
            rc.hops = rc.hops.min(2);
            let vocab = Vocab::from_instances(std::slice::from_ref(&instance), 1);
            let reader = Reader::<f64>::new(rc, vocab, seed)?;
            let (_, mut grads) = reader.loss_and_grads(&instance)?;
            if a.corrupt {
                let (id, _, _) = reader.params.iter().last().expect("readers have parameters");
                let v = grads.coordinate(id, 0);
                grads.set_coordinate(id, 0, v + 1.0);
            }
            let mut params = reader.params.clone();
            let report = grad_check(&mut params, &grads, |p| reader.loss_with(p, &instance), &check)?;
            failed += usize::from(!report.passed);
            log::info!(
                "{kind} features={f}: {} coordinates, {}",
                report.checked,
                if report.passed { "pass" } else { "FAIL" }
            );
            results.push(json!({ "reader": kind, "features": f, "report": report }));
        }
    }
    print_json(&json!({
        "invocation": invocation(),
        "seed": seed,
        "tolerance": a.tolerance,
        "instance_tokens": instance.context_len() + instance.target_sentence.len(),
        "results": results,
        "passed": failed == 0,
    }))?;
    if failed > 0 {
        bail!(VerificationFailure(format!("{failed} gradient check(s) failed")));
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let entries = std::fs::read_dir(&a.reports).map_err(|e| cloze_core::Error::Io {
        path: a.reports.clone(),
        source: e,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut reports = Vec::new();
    for path in &paths {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: Value = serde_json::from_str(&text).map_err(|e| cloze_core::Error::Record {
            path: path.clone(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        let stem = path
            .file_stem()
            .map_or(String::new(), |s| s.to_string_lossy().into_owned());
        let name = value.get("name").and_then(Value::as_str).map_or(stem, str::to_owned);
        let body = value.get("report").cloned().unwrap_or(value);
        let report: EvalReport = serde_json::from_value(body).map_err(|e| cloze_core::Error::Record {
            path: path.clone(),
            line: 1,
            reason: format!("not an evaluation report: {e}"),
        })?;
        reports.push((name, report));
    }
    if reports.is_empty() {
        bail!(cloze_core::Error::EmptyInput("no .json reports in the directory"));
    }
    let rows = eval::compare(&reports);
    if a.json {
        print_json(&json!(rows))
    } else {
        print!("{}", eval::render_table(&rows));
        Ok(())
    }
}
