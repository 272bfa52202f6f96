//! Flat parameter storage with named slices.

use crate::error::{Error, Result};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// All trainable parameters in one flat vector, addressed by name. The
/// BTreeMap keeps iteration (and therefore initialization and optimizer
/// state) in a deterministic order.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ParamStore {
    pub data: Vec<f64>,
    index: BTreeMap<String, (usize, usize)>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    /// Register a zero-initialized slice of `len` values under `name`.
    pub fn register(&mut self, name: &str, len: usize) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let offset = self.data.len();
        self.data.resize(offset + len, 0.0);
        self.index.insert(name.to_string(), (offset, len));
        offset
    }

    /// Register and fill with N(0, 1/fan_in) draws.
    pub fn register_normal<R: Rng>(&mut self, name: &str, len: usize, fan_in: usize, rng: &mut R) -> usize {
        let offset = self.register(name, len);
        let std = 1.0 / (fan_in.max(1) as f64).sqrt();
        let dist = Normal::new(0.0, std).expect("normal init");
        for x in self.data[offset..offset + len].iter_mut() {
            *x = dist.sample(rng);
        }
        offset
    }

    pub fn register_const(&mut self, name: &str, values: &[f64]) -> usize {
        let offset = self.register(name, values.len());
        self.data[offset..offset + values.len()].copy_from_slice(values);
        offset
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn slice_info(&self, name: &str) -> (usize, usize) {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"))
    }

    pub fn get(&self, name: &str) -> &[f64] {
        let (o, l) = self.slice_info(name);
        &self.data[o..o + l]
    }

    pub fn get_mut(&mut self, name: &str) -> &mut [f64] {
        let (o, l) = self.slice_info(name);
        &mut self.data[o..o + l]
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Check that `other` has exactly the same layout (for checkpoint loads).
    pub fn compatible(&self, other: &ParamStore) -> Result<()> {
        if self.index != other.index {
            return Err(Error::Config("parameter layout mismatch in checkpoint".into()));
        }
        Ok(())
    }
}
