use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Array, Gradients, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    /// Position in the store, matching the order of [`ParamStore::ids`].
    pub fn index(self) -> usize {
        self.0
    }
}

/// Tape variables for every parameter of a store, from [`ParamStore::bind`].
#[derive(Clone, Debug)]
pub struct BoundParams(Vec<Var>);

impl BoundParams {
    /// Binds variables recorded elsewhere, in the store's parameter order.
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Self(vars)
    }

    pub fn get(&self, id: ParamId) -> Var {
        self.0[id.0]
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Param {
    name: String,
    value: Array,
    trainable: bool,
}

/// Named parameter arrays owned by a model.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array, trainable: bool) -> Result<ParamId> {
        let name = name.into();
        if self.params.iter().any(|p| p.name == name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name:?}")));
        }
        self.params.push(Param { name, value, trainable });
        Ok(ParamId(self.params.len() - 1))
    }

    /// Glorot-uniform matrix `[rows, cols]` with fan-in `cols` and fan-out `rows`.
    pub fn add_glorot(&mut self, name: &str, rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Result<ParamId> {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.gen_range(-limit..limit)).collect();
        self.add(name, Array::matrix(rows, cols, data)?, true)
    }

    pub fn add_uniform(&mut self, name: &str, shape: &[usize], limit: f64, rng: &mut ChaCha8Rng) -> Result<ParamId> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        self.add(name, Array::new(shape, data)?, true)
    }

    pub fn add_filled(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        self.add(name, Array::filled(shape, value), true)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Array {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array {
        &mut self.params[id.0].value
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.params[id.0].trainable
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of trainable scalars.
    pub fn trainable_size(&self) -> usize {
        self.params.iter().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    /// Records every parameter as a leaf on `tape`; trainable ones require
    /// gradients when `track` is set.
    pub fn bind(&self, tape: &mut Tape, track: bool) -> Result<BoundParams> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), track && p.trainable))
            .collect::<Result<Vec<_>>>()
            .map(BoundParams)
    }

    /// Per-parameter gradients out of a backward pass; `None` for frozen or
    /// unused parameters.
    pub fn collect_grads(&self, grads: &Gradients, bound: &BoundParams) -> Vec<Option<Vec<f64>>> {
        self.params
            .iter()
            .zip(&bound.0)
            .map(|(p, &v)| if p.trainable { grads.get(v).map(<[f64]>::to_vec) } else { None })
            .collect()
    }

    pub fn named_arrays(&self) -> impl Iterator<Item = (&str, &Array)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }

    /// Overwrites values from `(name, array)` pairs; every parameter must be
    /// present with the same shape.
    pub fn load_named(&mut self, arrays: Vec<(String, Array)>) -> Result<()> {
        if arrays.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "{} arrays for a model with {} parameters",
                arrays.len(),
                self.params.len()
            )));
        }
        for (name, value) in arrays {
            let id = self
                .find(&name)
                .ok_or_else(|| Error::Checkpoint(format!("unexpected parameter {name:?}")))?;
            let slot = &mut self.params[id.0].value;
            if slot.shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name:?} has shape {:?}, checkpoint has {:?}",
                    slot.shape(),
                    value.shape()
                )));
            }
            *slot = value;
        }
        Ok(())
    }
}
