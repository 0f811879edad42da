//! Dense arrays, a reverse-mode tape, recurrent cells, an optimizer and a
//! finite-difference gradient checker.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod init;
pub mod optim;
pub mod params;
pub mod rnn;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use graph::{Graph, Var};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use params::{GradSlot, Grads, ParamId, ParamStore};
pub use rnn::{birnn, encode_query, BiRnnOutput, CellKind, RnnCell};
pub use tensor::{Real, Tensor};

use crate::error::Result;

/// Softmax of a plain vector (masked entries excluded and set to 0).
pub fn softmax<T: Real>(scores: &[T], mask: Option<&[bool]>) -> Result<Vec<T>> {
    graph::softmax_slice(scores, mask)
}

/// Rows of `table` selected by `ids`.
pub fn embed<T: Real>(ids: &[usize], table: &Tensor<T>) -> Result<Tensor<T>> {
    let mut store = ParamStore::new();
    let id = store.add("table", table.clone())?;
    let mut g = Graph::new(&store);
    let v = g.embed(id, ids)?;
    Ok(g.value(v).clone())
}
