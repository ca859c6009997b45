use std::collections::BTreeMap;

use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;

/// Named parameter tensors in deterministic (lexicographic) order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.tensors.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::is_finite)
    }
}

/// Parameters placed on a tape, each either trainable or frozen.
pub struct Binding {
    vars: BTreeMap<String, Var>,
    trainable: BTreeMap<String, bool>,
}

impl Binding {
    pub fn new(tape: &mut Tape, params: &ParamSet, trainable: impl Fn(&str) -> bool) -> Self {
        let mut vars = BTreeMap::new();
        let mut flags = BTreeMap::new();
        for (name, value) in params.iter() {
            let train = trainable(name);
            let v = if train {
                tape.param(value.clone())
            } else {
                tape.constant(value.clone())
            };
            vars.insert(name.clone(), v);
            flags.insert(name.clone(), train);
        }
        Binding {
            vars,
            trainable: flags,
        }
    }

    /// Panics on an unknown name: parameter layouts are fixed by the model config.
    pub fn var(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("parameter `{name}` is not bound"),
        }
    }

    /// Gradients of all trainable parameters; unreached ones come back as zeros.
    pub fn gradients(&self, tape: &Tape, grads: &mut Gradients) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, &v) in &self.vars {
            if !self.trainable[name] {
                continue;
            }
            let g = grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()));
            out.insert(name.clone(), g);
        }
        out
    }
}
