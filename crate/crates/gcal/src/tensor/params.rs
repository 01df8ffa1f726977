//! Named trainable parameters and their gradient slots.

use std::collections::BTreeMap;

use super::matrix::DenseMatrix;
use super::tape::Gradients;

/// Stable handle to a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// One trainable matrix plus its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: DenseMatrix,
    pub gradient: DenseMatrix,
}

/// Ordered collection of parameters. Registration order is stable and
/// iteration is always in that order, so optimizer updates and checkpoint
/// layout do not depend on hash state.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
    index: BTreeMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a parameter under a unique name.
    ///
    /// Panics if the name is already taken; parameter names are compile-time
    /// constants in this crate, so a clash is a programming error.
    pub fn register(&mut self, name: &str, value: DenseMatrix) -> ParamId {
        assert!(
            !self.index.contains_key(name),
            "duplicate parameter name: {name}"
        );
        let id = ParamId(self.params.len());
        let gradient = DenseMatrix::zeros(value.rows(), value.cols());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            gradient,
        });
        self.index.insert(name.to_string(), id);
        id
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &DenseMatrix {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut DenseMatrix {
        &mut self.params[id.0].value
    }

    pub fn gradient(&self, id: ParamId) -> &DenseMatrix {
        &self.params[id.0].gradient
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Parameter)> {
        self.params
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p))
    }

    /// Number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_gradients(&mut self) {
        for p in &mut self.params {
            p.gradient = DenseMatrix::zeros(p.value.rows(), p.value.cols());
        }
    }

    /// Adds `grads`, scaled by `scale`, into the stored gradient slots.
    pub fn accumulate(&mut self, grads: &Gradients, scale: f64) {
        for (id, g) in grads.iter() {
            let p = &mut self.params[id.0];
            debug_assert_eq!(p.gradient.shape(), g.shape());
            for (slot, add) in p.gradient.values_mut().iter_mut().zip(g.values()) {
                *slot += add * scale;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn register_and_lookup() {
        let mut set = ParamSet::new();
        let a = set.register("alpha", DenseMatrix::zeros(2, 3));
        let b = set.register("beta", DenseMatrix::zeros(1, 1));
        assert_eq!(set.id("alpha"), Some(a));
        assert_eq!(set.id("beta"), Some(b));
        assert_eq!(set.id("gamma"), None);
        assert_eq!(set.name(a), "alpha");
        assert_eq!(set.scalar_count(), 7);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter name")]
    fn duplicate_name_panics() {
        let mut set = ParamSet::new();
        set.register("w", DenseMatrix::zeros(1, 1));
        set.register("w", DenseMatrix::zeros(1, 1));
    }

    #[test]
    fn iteration_follows_registration_order() {
        let mut set = ParamSet::new();
        set.register("zeta", DenseMatrix::zeros(1, 1));
        set.register("alpha", DenseMatrix::zeros(1, 1));
        let names: Vec<&str> = set.iter().map(|(_, p)| p.name.as_str()).collect();
        assert_eq!(names, ["zeta", "alpha"]);
    }
}
