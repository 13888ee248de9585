use std::sync::atomic::{AtomicU64, Ordering};

use crate::tensor::Tensor;
use crate::tape::Gradients;

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

/// Handle to one trainable tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId {
    store: u64,
    index: usize,
}

impl ParamId {
    pub fn index(&self) -> usize {
        self.index
    }
}

#[derive(Debug, Clone)]
struct Param {
    name: String,
    value: Tensor,
    grad: Vec<f64>,
}

/// Owns the trainable tensors of one network together with their
/// accumulated gradients. Clones share the store identity, so a cloned
/// network keeps resolving its own parameter handles.
#[derive(Debug, Clone)]
pub struct ParamStore {
    id: u64,
    params: Vec<Param>,
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            id: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = vec![0.0; value.len()];
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId {
            store: self.id,
            index: self.params.len() - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(|index| ParamId {
            store: self.id,
            index,
        })
    }

    pub fn owns(&self, id: ParamId) -> bool {
        id.store == self.id && id.index < self.params.len()
    }

    fn slot(&self, id: ParamId) -> &Param {
        assert!(self.owns(id), "parameter {id:?} belongs to another store");
        &self.params[id.index]
    }

    fn slot_mut(&mut self, id: ParamId) -> &mut Param {
        assert!(self.owns(id), "parameter {id:?} belongs to another store");
        &mut self.params[id.index]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.slot(id).name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.slot(id).value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.slot_mut(id).value
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        &self.slot(id).grad
    }

    pub(crate) fn value_and_grad_mut(&mut self, index: usize) -> (&mut Tensor, &[f64]) {
        let p = &mut self.params[index];
        (&mut p.value, &p.grad)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Adds the gradients of every parameter of this store found in `grads`.
    /// Parameters of other stores on the same tape are ignored.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.param_grads() {
            if id.store != self.id {
                continue;
            }
            for (acc, v) in self.params[id.index].grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
    }

    /// Flattened copy of all parameter values in declaration order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.data().iter().copied())
            .collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.grad.iter().copied())
            .collect()
    }

    /// Maps a flat index (as in [`Self::flat_values`]) to its parameter slot.
    pub fn flat_value_mut(&mut self, mut flat: usize) -> &mut f64 {
        for p in &mut self.params {
            if flat < p.value.len() {
                return &mut p.value.data_mut()[flat];
            }
            flat -= p.value.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn named_tensors(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }
}
