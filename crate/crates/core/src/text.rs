//! Tokenized text ingestion, sentence splitting and the instance file formats.
//!
//! Input text is assumed to be whitespace-pretokenized. Tokens are never
//! normalized: capitalization and punctuation survive untouched.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::resources::TokenSet;

pub type Sentence = Vec<String>;

const TERMINATORS: [&str; 3] = [".", "!", "?"];
const CLOSERS: [&str; 11] = ["''", "\"", "'", "”", "’", ")", "]", "}", "»", "-RRB-", "`"];

/// A corpus document: an id plus its sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
}

impl Document {
    pub fn from_text(id: impl Into<String>, text: &str) -> Self {
        let tokens: Vec<String> = text.split_whitespace().map(String::from).collect();
        Document {
            id: id.into(),
            sentences: split_sentences(tokens),
        }
    }
}

fn is_terminator(tok: &str) -> bool {
    TERMINATORS.contains(&tok)
}

fn is_closer(tok: &str) -> bool {
    CLOSERS.contains(&tok)
}

/// Split a token sequence into sentences.
///
/// A boundary follows any terminator token, after absorbing a run of further
/// terminators and closing quotes or brackets. The output always concatenates back to the input.
pub fn split_sentences<I>(tokens: I) -> Vec<Sentence>
where
    I: IntoIterator<Item = String>,
{
    let mut out = Vec::new();
    let mut current: Sentence = Vec::new();
    let mut closing = false;
    for tok in tokens {
        if closing && !is_closer(&tok) && !is_terminator(&tok) {
            out.push(std::mem::take(&mut current));
            closing = false;
        }
        if !closing && is_terminator(&tok) {
            closing = true;
        }
        current.push(tok);
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Parse one passage line: the last sentence is the target sentence and its
/// final token the target word.
pub fn parse_passage_line(line: &str, id: impl Into<String>) -> Result<Instance> {
    parse_passage_line_with(line, id, &crate::resources::punctuation())
}

/// Same as [`parse_passage_line`] with a caller-supplied punctuation list.
pub fn parse_passage_line_with(line: &str, id: impl Into<String>, punctuation: &TokenSet) -> Result<Instance> {
    let tokens: Vec<String> = line.split_whitespace().map(String::from).collect();
    if tokens.is_empty() {
        return Err(Error::MalformedPassage("empty line".into()));
    }
    let mut sentences = split_sentences(tokens);
    if sentences.len() < 2 {
        return Err(Error::MalformedPassage(format!(
            "need at least 2 sentences, found {}",
            sentences.len()
        )));
    }
    let target = sentences.pop().expect("len checked");
    let instance = Instance::new(id, sentences, target)?;
    if punctuation.contains(&instance.target_word) {
        return Err(Error::MalformedPassage(format!(
            "target word {:?} is punctuation",
            instance.target_word
        )));
    }
    Ok(instance)
}

/// Streaming reader over a JSON Lines instance file.
pub struct InstanceReader<R> {
    path: PathBuf,
    lines: std::io::Lines<R>,
    line_no: usize,
}

impl<R: BufRead> Iterator for InstanceReader<R> {
    type Item = Result<Instance>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let record = |reason: String| Error::Record {
                path: self.path.clone(),
                line: self.line_no,
                reason,
            };
            let inst: Instance = match serde_json::from_str(&line) {
                Ok(i) => i,
                Err(e) => return Some(Err(record(e.to_string()))),
            };
            if let Err(reason) = inst.validate() {
                return Some(Err(record(reason)));
            }
            return Some(Ok(inst));
        }
    }
}

/// Open a JSON Lines instance file for streaming.
pub fn read_instances(path: &Path) -> Result<InstanceReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(InstanceReader {
        path: path.to_path_buf(),
        lines: BufReader::new(file).lines(),
        line_no: 0,
    })
}

/// Read a whole instance file into memory.
pub fn load_instances(path: &Path) -> Result<Vec<Instance>> {
    read_instances(path)?.collect()
}

/// Write instances as JSON Lines, one object per line.
pub fn write_instances<'a, I>(instances: I, path: &Path) -> Result<usize>
where
    I: IntoIterator<Item = &'a Instance>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut n = 0;
    for inst in instances {
        serde_json::to_writer(&mut w, inst).expect("instances always serialize");
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        n += 1;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(n)
}

/// Read a passage file; each non-empty line yields a parse result tagged with
/// its 1-based line number.
pub fn read_passages(path: &Path) -> Result<Vec<(usize, Result<Instance>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, parse_passage_line(&line, format!("line-{}", i + 1))));
    }
    Ok(out)
}

/// Load evaluation data: `.jsonl`/`.json` files are instance records, anything
/// else is the passage format (malformed passages are an error here).
pub fn load_eval_data(path: &Path) -> Result<Vec<Instance>> {
    let is_jsonl = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl") | Some("json"));
    if is_jsonl {
        return load_instances(path);
    }
    read_passages(path)?
        .into_iter()
        .map(|(line, r)| {
            r.map_err(|e| Error::Record {
                path: path.to_path_buf(),
                line,
                reason: e.to_string(),
            })
        })
        .collect()
}

/// All regular files under `dir`, recursively, in sorted order.
pub fn corpus_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let entries = std::fs::read_dir(&d).map_err(|e| Error::io(&d, e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&d, e))?;
            let path = entry.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.is_file() {
                out.push(path);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Read one corpus document; its id is the path relative to `root`.
pub fn read_document(root: &Path, path: &Path) -> Result<Document> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path.strip_prefix(root).unwrap_or(path).to_string_lossy().into_owned();
    Ok(Document::from_text(id, &text))
}
