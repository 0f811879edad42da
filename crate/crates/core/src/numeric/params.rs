use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::numeric::tensor::{Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named learnable arrays in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    index: HashMap<String, ParamId>,
}

impl<T> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            names: Vec::new(),
            values: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Shape(format!("duplicate parameter {name}")));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor<T>> {
        self.id(name).map(|id| self.get(id))
    }

    /// Replace a parameter's values, keeping its shape.
    pub fn set(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let id = self
            .id(name)
            .ok_or_else(|| Error::Shape(format!("no parameter named {name}")))?;
        if self.values[id.0].shape() != value.shape() {
            return Err(Error::Shape(format!(
                "{name}: shape {:?} != {:?}",
                value.shape(),
                self.values[id.0].shape()
            )));
        }
        self.values[id.0] = value;
        Ok(())
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor<T>)> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, v)| (ParamId(i), self.names[i].as_str(), v))
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            index: self.index.clone(),
        }
    }
}

/// Gradient accumulator for one slot: untouched, dense, or a sparse set of
/// rows (embedding lookups touch only a few rows of a large table).
#[derive(Debug, Clone, PartialEq)]
pub enum GradSlot<T> {
    Empty,
    Dense(Vec<T>),
    Rows(BTreeMap<usize, Vec<T>>),
}

/// Gradients for every parameter of a store.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<T> {
    slots: Vec<GradSlot<T>>,
    sizes: Vec<usize>,
    cols: Vec<usize>,
}

impl<T: Real> Grads<T> {
    pub fn for_store(store: &ParamStore<T>) -> Self {
        Grads {
            slots: vec![GradSlot::Empty; store.len()],
            sizes: store.values.iter().map(Tensor::len).collect(),
            cols: store.values.iter().map(Tensor::cols).collect(),
        }
    }

    pub fn slot(&self, id: ParamId) -> &GradSlot<T> {
        &self.slots[id.0]
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    fn densify(&mut self, i: usize) -> &mut Vec<T> {
        let size = self.sizes[i];
        let cols = self.cols[i];
        let slot = std::mem::replace(&mut self.slots[i], GradSlot::Empty);
        let dense = match slot {
            GradSlot::Empty => vec![T::zero(); size],
            GradSlot::Dense(d) => d,
            GradSlot::Rows(rows) => {
                let mut d = vec![T::zero(); size];
                for (r, vals) in rows {
                    for (dst, v) in d[r * cols..(r + 1) * cols].iter_mut().zip(vals) {
                        *dst = *dst + v;
                    }
                }
                d
            }
        };
        self.slots[i] = GradSlot::Dense(dense);
        match &mut self.slots[i] {
            GradSlot::Dense(d) => d,
            _ => unreachable!(),
        }
    }

    pub fn add_dense(&mut self, id: ParamId, values: &[T]) {
        let d = self.densify(id.0);
        for (a, b) in d.iter_mut().zip(values) {
            *a = *a + *b;
        }
    }

    pub fn add_row(&mut self, id: ParamId, row: usize, values: &[T]) {
        let cols = self.cols[id.0];
        match &mut self.slots[id.0] {
            GradSlot::Dense(d) => {
                for (a, b) in d[row * cols..(row + 1) * cols].iter_mut().zip(values) {
                    *a = *a + *b;
                }
            }
            slot => {
                if matches!(slot, GradSlot::Empty) {
                    *slot = GradSlot::Rows(BTreeMap::new());
                }
                if let GradSlot::Rows(rows) = slot {
                    let r = rows.entry(row).or_insert_with(|| vec![T::zero(); cols]);
                    for (a, b) in r.iter_mut().zip(values) {
                        *a = *a + *b;
                    }
                }
            }
        }
    }

    /// Add another gradient set in place.
    pub fn merge(&mut self, other: &Grads<T>) {
        for (i, slot) in other.slots.iter().enumerate() {
            match slot {
                GradSlot::Empty => {}
                GradSlot::Dense(d) => self.add_dense(ParamId(i), d),
                GradSlot::Rows(rows) => {
                    for (r, v) in rows {
                        self.add_row(ParamId(i), *r, v);
                    }
                }
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for slot in &mut self.slots {
            match slot {
                GradSlot::Empty => {}
                GradSlot::Dense(d) => d.iter_mut().for_each(|x| *x = *x * factor),
                GradSlot::Rows(rows) => rows.values_mut().flatten().for_each(|x| *x = *x * factor),
            }
        }
    }

    fn values(&self) -> impl Iterator<Item = &T> {
        self.slots.iter().flat_map(|slot| -> Box<dyn Iterator<Item = &T> + '_> {
            match slot {
                GradSlot::Empty => Box::new(std::iter::empty()),
                GradSlot::Dense(d) => Box::new(d.iter()),
                GradSlot::Rows(rows) => Box::new(rows.values().flatten()),
            }
        })
    }

    /// L2 norm over all gradient values, accumulated in f64.
    pub fn global_norm(&self) -> f64 {
        self.values().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|x| x.is_finite())
    }

    /// Full dense gradient for one parameter.
    pub fn dense(&self, id: ParamId) -> Vec<T> {
        let mut copy = Grads {
            slots: vec![self.slots[id.0].clone()],
            sizes: vec![self.sizes[id.0]],
            cols: vec![self.cols[id.0]],
        };
        std::mem::take(copy.densify(0))
    }

    /// Gradient value at a flat coordinate of one parameter.
    pub fn coordinate(&self, id: ParamId, flat: usize) -> T {
        match &self.slots[id.0] {
            GradSlot::Empty => T::zero(),
            GradSlot::Dense(d) => d[flat],
            GradSlot::Rows(rows) => {
                let cols = self.cols[id.0];
                rows.get(&(flat / cols)).map_or(T::zero(), |r| r[flat % cols])
            }
        }
    }

    /// Overwrite one coordinate (used to build corrupted-gradient controls).
    pub fn set_coordinate(&mut self, id: ParamId, flat: usize, value: T) {
        let d = self.densify(id.0);
        d[flat] = value;
    }
}
