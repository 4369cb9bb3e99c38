use std::collections::BTreeMap;

use super::{Gradients, Real, Tape, Tensor, Var};

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Params<T: Real> {
    tensors: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> Params<T> {
    pub fn new() -> Self {
        Params {
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor<T>)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor<T>)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &String> {
        self.tensors.keys()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Registers every tensor as a trainable leaf of `tape`.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.param(v.clone())))
                .collect(),
        }
    }

    /// Adds `grads` (from a tape bound with `bound`) into `acc`, creating
    /// zero entries on first use.
    pub fn accumulate_grads(
        &self,
        bound: &Bound,
        grads: &Gradients<T>,
        acc: &mut BTreeMap<String, Tensor<T>>,
    ) {
        for (name, &var) in &bound.vars {
            if !grads.is_reached(var) {
                continue;
            }
            let g = grads.get(var);
            match acc.get_mut(name) {
                Some(existing) => {
                    let sum: Vec<T> = existing.data().iter().zip(g.data()).map(|(&a, &b)| a + b).collect();
                    *existing = Tensor::new(existing.shape(), sum).expect("gradient shape");
                }
                None => {
                    acc.insert(name.clone(), g);
                }
            }
        }
    }
}

/// Mapping from parameter names to the tape leaves they were bound to.
#[derive(Clone, Debug, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Tape leaf of parameter `name`.
    ///
    /// Panics when `name` was never bound; layer code and parameter
    /// initialization derive names from the same config.
    pub fn var(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(&v) => v,
            None => panic!("parameter {name:?} not bound"),
        }
    }

    pub fn get(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }
}

impl FromIterator<(String, Var)> for Bound {
    fn from_iter<I: IntoIterator<Item = (String, Var)>>(iter: I) -> Self {
        Bound {
            vars: iter.into_iter().collect(),
        }
    }
}
