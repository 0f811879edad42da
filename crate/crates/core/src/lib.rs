//! Broad-context cloze prediction: dataset construction, neural readers,
//! language-model baselines, training and evaluation.

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod instance;
pub mod numeric;
pub mod readers;
pub mod resources;
pub mod synth;
pub mod text;
pub mod training;
pub mod vocab;

pub use error::{Error, Result};
pub use instance::{extract_candidates, CandidateSet, Instance, PhenomenonLabel, Prediction};
pub use text::{Document, Sentence};
pub use vocab::Vocab;
