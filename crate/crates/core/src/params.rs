//! Named trainable parameters over one contiguous flat buffer.
//!
//! Every scalar parameter has a stable flat index: entries are laid out in
//! registration order. Optimizer moments and consolidation arrays use the same
//! indexing.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::tensor::{Shape, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Shape,
    pub offset: usize,
    /// Rows held at their current value (zero gradient).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frozen_rows: Vec<usize>,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.numel()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    by_name: BTreeMap<String, usize>,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn add(&mut self, name: &str, init: Tensor) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let id = self.entries.len();
        self.entries.push(ParamEntry {
            name: name.into(),
            shape: init.shape(),
            offset: self.values.len(),
            frozen_rows: Vec::new(),
        });
        self.values.extend_from_slice(init.data());
        self.by_name.insert(name.into(), id);
        Ok(ParamId(id))
    }

    /// Rebuilds a store from serialized entries and their flat values.
    pub fn from_parts(entries: Vec<ParamEntry>, values: Vec<f64>) -> Result<Self> {
        let mut store = ParamStore::new();
        for e in entries {
            if e.offset != store.values.len() || e.offset + e.len() > values.len() {
                return Err(Error::Alignment {
                    expected: store.values.len(),
                    got: e.offset,
                });
            }
            let data = values[e.range()].to_vec();
            let id = store.add(&e.name, Tensor::new(e.shape, data)?)?;
            store.entries[id.0].frozen_rows = e.frozen_rows;
        }
        if store.values.len() != values.len() {
            return Err(Error::Alignment {
                expected: store.values.len(),
                got: values.len(),
            });
        }
        Ok(store)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn require(&self, name: &str) -> Result<ParamId> {
        self.id(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name:?}")))
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry {
        &self.entries[id.0]
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    /// Total scalar parameter count.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn slice(&self, id: ParamId) -> &[f64] {
        &self.values[self.entries[id.0].range()]
    }

    pub fn slice_mut(&mut self, id: ParamId) -> &mut [f64] {
        let r = self.entries[id.0].range();
        &mut self.values[r]
    }

    pub fn tensor(&self, id: ParamId) -> Tensor {
        let e = &self.entries[id.0];
        Tensor::new(e.shape, self.values[e.range()].to_vec()).expect("entry shape matches its range")
    }

    /// Records the whole parameter as a leaf of `tape`.
    pub fn leaf<'t>(&self, tape: &'t Tape, id: ParamId) -> Var<'t> {
        let e = &self.entries[id.0];
        tape.param_slice(&self.values[e.range()], e.shape, e.offset)
    }

    /// Records one row of a matrix parameter as a vector leaf.
    pub fn row_leaf<'t>(&self, tape: &'t Tape, id: ParamId, row: usize) -> Var<'t> {
        let e = &self.entries[id.0];
        let cols = e.shape.cols();
        let start = e.offset + row * cols;
        tape.param_slice(&self.values[start..start + cols], Shape::vector(cols), start)
    }

    /// Zeroes the row and excludes it from training.
    pub fn freeze_row(&mut self, id: ParamId, row: usize) {
        let e = &mut self.entries[id.0];
        let cols = e.shape.cols();
        let start = e.offset + row * cols;
        if !e.frozen_rows.contains(&row) {
            e.frozen_rows.push(row);
        }
        self.values[start..start + cols].fill(0.0);
    }

    /// Zeroes gradient entries of frozen rows.
    pub fn mask_frozen(&self, grads: &mut [f64]) {
        for e in &self.entries {
            let cols = e.shape.cols();
            for &row in &e.frozen_rows {
                let start = e.offset + row * cols;
                grads[start..start + cols].fill(0.0);
            }
        }
    }

    /// `(name, flat range)` of the entry owning flat index `k`.
    pub fn locate(&self, k: usize) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|e| e.range().contains(&k))
            .map(|e| (e.name.as_str(), k - e.offset))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn flat_layout_follows_registration_order() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let b = s.add("b", Tensor::matrix(2, 2, vec![3.0, 4.0, 5.0, 6.0]).unwrap()).unwrap();
        assert_eq!(s.values(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(s.entry(b).offset, 2);
        assert_eq!(s.slice(a), &[1.0, 2.0]);
        assert_eq!(s.locate(4), Some(("b", 2)));
        assert!(s.add("a", Tensor::scalar(0.0)).is_err());
    }

    #[test]
    fn frozen_rows_are_zero_and_masked() {
        let mut s = ParamStore::new();
        let e = s.add("emb", Tensor::matrix(3, 2, vec![1.0; 6]).unwrap()).unwrap();
        s.freeze_row(e, 0);
        assert_eq!(s.slice(e), &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let mut g = vec![1.0; 6];
        s.mask_frozen(&mut g);
        assert_eq!(g, vec![0.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn row_leaf_gradient_lands_in_its_row() {
        let mut s = ParamStore::new();
        s.add("pad", Tensor::vector(vec![0.0])).unwrap();
        let e = s.add("emb", Tensor::matrix(3, 2, vec![1.0; 6]).unwrap()).unwrap();
        let tape = Tape::new();
        let r = s.row_leaf(&tape, e, 2);
        let g = tape.backward(r.sum()).unwrap().flat(s.len());
        assert_eq!(g, vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn from_parts_round_trip() {
        let mut s = ParamStore::new();
        s.add("a", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let e = s.add("b", Tensor::matrix(2, 1, vec![3.0, 4.0]).unwrap()).unwrap();
        s.freeze_row(e, 1);
        let back = ParamStore::from_parts(s.entries().to_vec(), s.values().to_vec()).unwrap();
        assert_eq!(back, s);
    }
}
