//! Named, ordered parameter registry.
//!
//! A `ParamSet` owns every trainable tensor of a model in a stable order, so
//! checkpoints, optimizer state, and name-matched transfer all agree on what
//! "parameter k" means.

use crate::numcore::Tensor;
use crate::Scalar;

/// One named parameter tensor.
#[derive(Debug, Clone)]
pub struct ParamEntry<S> {
    pub name: String,
    pub tensor: Tensor<S>,
}

/// Ordered collection of named parameters. Names are unique; insertion order
/// is preserved and is the canonical enumeration order everywhere.
#[derive(Debug, Clone, Default)]
pub struct ParamSet<S> {
    entries: Vec<ParamEntry<S>>,
}

impl<S: Scalar> ParamSet<S> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Add a tensor under a new name. Panics on a duplicate name: parameter
    /// names are compile-time-style identifiers, so a clash is a bug.
    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor<S>) {
        let name = name.into();
        assert!(
            self.get(&name).is_none(),
            "duplicate parameter name {name:?}"
        );
        self.entries.push(ParamEntry { name, tensor });
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .map(|e| &e.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.entries
            .iter_mut()
            .find(|e| e.name == name)
            .map(|e| &mut e.tensor)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry<S>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry<S>> {
        self.entries.iter_mut()
    }

    /// Total scalar count across all tensors.
    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    /// Element-wise conversion to another scalar type (e.g. f32 -> f64 for
    /// gradient checking).
    pub fn cast<T: Scalar>(&self) -> ParamSet<T> {
        ParamSet {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry {
                    name: e.name.clone(),
                    tensor: e.tensor.cast::<T>(),
                })
                .collect(),
        }
    }
}
