//! Named parameter storage and JSON checkpoints.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
    index: BTreeMap<String, ParamId>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    shape: Vec<usize>,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::DuplicateParameter(name));
        }
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.index.get(name).copied().ok_or_else(|| Error::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
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

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.values.iter().enumerate().map(|(i, t)| (ParamId(i), self.names[i].as_str(), t))
    }

    pub fn values_mut(&mut self) -> &mut [Tensor] {
        &mut self.values
    }

    /// Checkpoint as `{name: {shape, values}}` with names in sorted order.
    pub fn to_json(&self) -> Result<String> {
        let map: BTreeMap<&str, Entry> = self
            .iter()
            .map(|(_, n, t)| (n, Entry { shape: t.shape().to_vec(), values: t.data().to_vec() }))
            .collect();
        Ok(serde_json::to_string(&map)?)
    }

    /// Overwrite every parameter from a checkpoint; names and shapes must match exactly.
    pub fn load_json(&mut self, text: &str) -> Result<()> {
        let map: BTreeMap<String, Entry> = serde_json::from_str(text)?;
        for name in map.keys() {
            self.id(name)?;
        }
        for (i, name) in self.names.iter().enumerate() {
            let e = map.get(name).ok_or_else(|| Error::UnknownParameter(name.clone()))?;
            if e.shape != self.values[i].shape() {
                return Err(Error::ShapeMismatch { op: "checkpoint", lhs: self.values[i].shape().to_vec(), rhs: e.shape.clone() });
            }
            self.values[i] = Tensor::new(&e.shape, e.values.clone())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.load_json(&std::fs::read_to_string(path)?)
    }
}
