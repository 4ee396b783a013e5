use std::collections::HashMap;

use rand::Rng;

use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Index of a parameter inside its [`ParameterSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A trainable tensor together with its gradient slot and Adam moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub first_moment: Tensor,
    pub second_moment: Tensor,
}

impl Param {
    fn new(name: String, value: Tensor) -> Self {
        let shape = value.shape().to_vec();
        Param {
            name,
            value,
            grad: Tensor::zeros(&shape),
            first_moment: Tensor::zeros(&shape),
            second_moment: Tensor::zeros(&shape),
        }
    }
}

/// Ordered, uniquely named collection of trainable tensors. Insertion order is
/// the serialization order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: Vec<Param>,
    by_name: HashMap<String, usize>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(NnError::DuplicateParameter(name));
        }
        let id = self.entries.len();
        self.by_name.insert(name.clone(), id);
        self.entries.push(Param::new(name, value));
        Ok(ParamId(id))
    }

    /// Weight tensor drawn uniformly from ±√(6/(fan_in+fan_out)).
    pub fn insert_glorot<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: &[usize],
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Result<ParamId> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let value = Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit));
        self.insert(name, value)
    }

    pub fn insert_zeros(&mut self, name: impl Into<String>, shape: &[usize]) -> Result<ParamId> {
        self.insert(name, Tensor::zeros(shape))
    }

    pub fn id(&self, name: &str) -> Result<ParamId> {
        self.by_name
            .get(name)
            .map(|&i| ParamId(i))
            .ok_or_else(|| NnError::UnknownParameter(name.to_string()))
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.entries[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.entries[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.entries[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].grad
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.entries.iter()
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [Param] {
        &mut self.entries
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar weights.
    pub fn num_weights(&self) -> usize {
        self.entries.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grad.data_mut().fill(0.0);
        }
    }

    pub(crate) fn accumulate_grad(&mut self, id: ParamId, g: &Tensor) {
        self.entries[id.0].grad.add_assign(g);
    }

    /// Structural equality on names, shapes and values (ignores optimizer state).
    pub fn same_values(&self, other: &ParameterSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.value == b.value)
    }
}
