use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

pub const PARAMS_FORMAT: &str = "hyplns-params/1";

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    index: HashMap<String, usize>,
    seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct ParamFile {
    format: String,
    seed: u64,
    params: Vec<NamedTensor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            seed,
            ..Default::default()
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn add(&mut self, name: &str, value: Matrix) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Parameter(format!("duplicate parameter name {name:?}")));
        }
        let id = self.values.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.values.push(value);
        Ok(ParamId(id))
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
    pub fn add_uniform<R: Rng + ?Sized>(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Matrix::from_vec(rows, cols, data))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
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

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("parameter file serializes")
    }

    pub(crate) fn to_file(&self) -> ParamFile {
        ParamFile {
            format: PARAMS_FORMAT.into(),
            seed: self.seed,
            params: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, m)| NamedTensor {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                    data: m.data().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamFile = serde_json::from_str(text).map_err(|e| Error::Load {
            what: "parameters",
            msg: e.to_string(),
        })?;
        Self::from_file(file)
    }

    pub(crate) fn from_file(file: ParamFile) -> Result<Self> {
        let load = |msg: String| Error::Load { what: "parameters", msg };
        if file.format != PARAMS_FORMAT {
            return Err(load(format!(
                "format {:?}, expected {PARAMS_FORMAT:?}",
                file.format
            )));
        }
        let mut store = ParamStore::new(file.seed);
        for t in file.params {
            if t.data.len() != t.rows * t.cols {
                return Err(load(format!("tensor {:?} has the wrong length", t.name)));
            }
            store
                .add(&t.name, Matrix::from_vec(t.rows, t.cols, t.data))
                .map_err(|e| load(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Copy values from `other`, which must have identical names and shapes.
    pub fn assign_from(&mut self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Load {
                what: "parameters",
                msg: "parameter names differ from the architecture".into(),
            });
        }
        for (name, (a, b)) in self.names.iter().zip(self.values.iter_mut().zip(&other.values)) {
            if a.shape() != b.shape() {
                return Err(Error::Load {
                    what: "parameters",
                    msg: format!("shape of {name:?} differs from the architecture"),
                });
            }
            *a = b.clone();
        }
        Ok(())
    }
}
