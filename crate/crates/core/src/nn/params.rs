use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Dims, NnError, Scalar, Tensor};

/// Named parameter tensors in declaration order, plus the initialization seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    entries: Vec<(String, Tensor<T>)>,
    index: BTreeMap<String, usize>,
    seed: u64,
}

/// Trainable weights are stored in `f32`.
pub type NetworkWeights = ParamStore<f32>;

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        Self {
            entries: Vec::new(),
            index: BTreeMap::new(),
            seed,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn insert(&mut self, name: &str, tensor: Tensor<T>) -> Result<(), NnError> {
        if self.index.contains_key(name) {
            return Err(NnError::DuplicateParam(name.to_string()));
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push((name.to_string(), tensor));
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index_of(name).map(|i| &self.entries[i].1)
    }

    pub fn tensor(&self, idx: usize) -> &Tensor<T> {
        &self.entries[idx].1
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor<T> {
        &mut self.entries[idx].1
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.entries[idx].0
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, name: &str, tensor: Tensor<T>) -> Result<(), NnError> {
        let idx = self
            .index_of(name)
            .ok_or_else(|| NnError::UnknownParam(name.to_string()))?;
        let old = self.entries[idx].1.dims();
        if old != tensor.dims() {
            return Err(NnError::ShapeMismatch {
                op: "set",
                left: old,
                right: tensor.dims(),
            });
        }
        self.entries[idx].1 = tensor;
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|(n, t)| (n.clone(), t.cast()))
                .collect(),
            index: self.index.clone(),
            seed: self.seed,
        }
    }
}

/// He-uniform initialization: `U(-b, b)` with `b = sqrt(6 / fan_in)`.
pub fn he_uniform<T: Scalar>(rng: &mut ChaCha8Rng, dims: Dims, fan_in: usize) -> Tensor<T> {
    let bound = libm::sqrt(6.0 / fan_in.max(1) as f64);
    let mut t = Tensor::zeros(dims);
    for v in t.data_mut() {
        *v = T::from_f64(rng.random_range(-bound..bound));
    }
    t
}
