use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::{Error, Result};

/// Named parameter tensors. Each name has exactly one storage slot, so every
/// network path that refers to a name shares the same weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    entries: BTreeMap<String, Tensor>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ParamJson {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, t: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return Err(Error::Config(format!("parameter {name:?} registered twice")));
        }
        self.entries.insert(name, t);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Glorot-uniform `[rows, cols]` matrix.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
        Self::uniform(vec![rows, cols], (6.0 / (rows + cols) as f64).sqrt(), rng)
    }

    pub fn uniform(shape: Vec<usize>, bound: f64, rng: &mut impl Rng) -> Tensor {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Tensor::from_parts_unchecked(shape, data)
    }

    pub(crate) fn to_json(&self) -> BTreeMap<String, ParamJson> {
        self.entries
            .iter()
            .map(|(k, t)| {
                (
                    k.clone(),
                    ParamJson {
                        shape: t.shape().to_vec(),
                        values: t.data().to_vec(),
                    },
                )
            })
            .collect()
    }

    pub(crate) fn from_json(map: BTreeMap<String, ParamJson>) -> Result<Self> {
        let mut store = Self::new();
        for (k, p) in map {
            let t = Tensor::new(p.shape, p.values)
                .map_err(|e| Error::Checkpoint(format!("parameter {k:?}: {e}")))?;
            store.insert(k, t)?;
        }
        Ok(store)
    }
}
