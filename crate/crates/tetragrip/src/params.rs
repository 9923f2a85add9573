//! Flat JSON parameter files shared by the seal classifier and the PPO
//! policy: named tensors with explicit shapes and row-major data, plus a
//! small metadata map (layer sizes, normalization constants).
//!
//! JSON round-trips through `serde_json` preserve `f64` values exactly, so a
//! saved model reloads bit-identically.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("tensor {name}: shape {shape:?} does not match {len} values")]
    ShapeMismatch { name: String, shape: Vec<usize>, len: usize },
    #[error("tensor {name} contains a non-finite value")]
    NonFinite { name: String },
    #[error("missing tensor {0}")]
    Missing(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        Tensor { shape, data }
    }
}

/// Ordered tensor map; iteration and serialization order is the key order,
/// which keeps files byte-stable across runs.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct ParamStore {
    #[serde(default)]
    pub meta: BTreeMap<String, serde_json::Value>,
    pub tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, shape: Vec<usize>, data: Vec<f64>) -> Result<(), ParamError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(ParamError::ShapeMismatch { name: name.into(), shape, len: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ParamError::NonFinite { name: name.into() });
        }
        self.tensors.insert(name.into(), Tensor::new(shape, data));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, ParamError> {
        self.tensors.get(name).ok_or_else(|| ParamError::Missing(name.into()))
    }

    pub fn set_meta_usize(&mut self, key: &str, value: usize) {
        self.meta.insert(key.into(), serde_json::json!(value));
    }

    pub fn meta_usize(&self, key: &str) -> Option<usize> {
        self.meta.get(key).and_then(|v| v.as_u64()).map(|v| v as usize)
    }

    pub fn save(&self, path: &Path) -> Result<(), ParamError> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ParamError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
