use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

use super::{Gradients, Real, Tape, Tensor, Var};

/// Named trainable tensors, iterated in insertion order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet<R: Real = f32> {
    tensors: IndexMap<String, Tensor<R>>,
}

/// A [`ParameterSet`] recorded on one tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter '{name}' is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// The entries named `prefix/...`, with the prefix removed.
    pub fn scoped(&self, prefix: &str) -> Bound {
        let head = format!("{prefix}/");
        Bound {
            vars: self
                .vars
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&head).map(|rest| (rest.to_string(), *v)))
                .collect(),
        }
    }
}

impl<R: Real> ParameterSet<R> {
    pub fn new() -> Self {
        ParameterSet {
            tensors: IndexMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<R>) -> Result<()> {
        let name = name.into();
        if self.tensors.contains_key(&name) {
            return Err(Error::Contract(format!(
                "duplicate parameter name '{name}'"
            )));
        }
        self.tensors.insert(name, tensor.with_requires_grad(true));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<R>> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter '{name}'")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor<R>> {
        self.tensors
            .get_mut(name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter '{name}'")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<R>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<R>)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
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

    /// Total scalar count across all tensors.
    pub fn numel(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    /// Records every tensor on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape<R>) -> Bound {
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), tape.leaf(t)))
                .collect(),
        }
    }

    /// Copies gradients for every bound tensor out of `grads`.
    pub fn store_grads(&mut self, bound: &Bound, grads: &mut Gradients<R>) -> Result<()> {
        for (name, tensor) in &mut self.tensors {
            let var = bound.get(name)?;
            tensor.set_grad(grads.take(var))?;
        }
        Ok(())
    }

    pub fn clear_grads(&mut self) {
        for t in self.tensors.values_mut() {
            t.clear_grad();
        }
    }

    pub fn cast<S: Real>(&self) -> ParameterSet<S> {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), t.cast()))
                .collect(),
        }
    }

    /// Moves every tensor of `other` in under `prefix/name`.
    pub fn absorb(&mut self, prefix: &str, other: ParameterSet<R>) -> Result<()> {
        for (k, t) in other.tensors {
            self.insert(format!("{prefix}/{k}"), t)?;
        }
        Ok(())
    }

    /// Splits off the tensors named `prefix/...`, with the prefix removed.
    pub fn extract(&self, prefix: &str) -> ParameterSet<R> {
        let head = format!("{prefix}/");
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .filter_map(|(k, t)| {
                    k.strip_prefix(&head)
                        .map(|rest| (rest.to_string(), t.clone()))
                })
                .collect(),
        }
    }

    /// Same names and shapes, all values zero.
    pub fn zeros_like(&self) -> Self {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|(k, t)| {
                    let z = Tensor::zeros(t.shape().to_vec()).expect("valid shape");
                    (k.clone(), z.with_requires_grad(true))
                })
                .collect(),
        }
    }

    /// Same names and shapes with every value drawn from `U(-bound, bound)`,
    /// where `bound = sqrt(6 / (fan_in + fan_out))` for 2-D tensors and
    /// `1/sqrt(len)` for vectors.
    pub fn randomize<G: Rng>(&mut self, rng: &mut G) {
        for t in self.tensors.values_mut() {
            let limit = match t.shape() {
                [fan_in, fan_out] => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                shape => 1.0 / (shape.iter().product::<usize>() as f64).sqrt(),
            };
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
            for v in t.data_mut() {
                *v = R::of(dist.sample(rng));
            }
        }
    }

    /// True when both sets hold bitwise-identical values under the same names.
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((ka, a), (kb, b))| {
                    ka == kb
                        && a.shape() == b.shape()
                        && a.data()
                            .iter()
                            .zip(b.data())
                            .all(|(x, y)| x.as_f64().to_bits() == y.as_f64().to_bits())
                })
    }

    /// Largest absolute elementwise difference; infinite when the layouts differ.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        if self.tensors.len() != other.tensors.len() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for ((ka, a), (kb, b)) in self.tensors.iter().zip(&other.tensors) {
            if ka != kb || a.shape() != b.shape() {
                return f64::INFINITY;
            }
            for (x, y) in a.data().iter().zip(b.data()) {
                worst = worst.max((x.as_f64() - y.as_f64()).abs());
            }
        }
        worst
    }
}
