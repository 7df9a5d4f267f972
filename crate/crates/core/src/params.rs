//! Named, ordered collection of trainable tensors.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Tape, Tensor, Var};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor under a unique name. The tensor is marked as trainable.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Checkpoint(format!("duplicate parameter name `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor.with_grad()));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.index
            .get(name)
            .map(|&i| &self.entries[i].1)
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        match self.index.get(name) {
            Some(&i) => Ok(&mut self.entries[i].1),
            None => Err(Error::Checkpoint(format!("missing parameter `{name}`"))),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar entries across all tensors.
    pub fn num_values(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn zero_grads(&mut self) {
        self.entries.iter_mut().for_each(|(_, t)| t.zero_grad());
    }

    /// Records every parameter as a trainable leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bindings {
        let vars = self.entries.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
        Bindings {
            vars,
            index: self.index.clone(),
        }
    }

    /// Adds the gradients of the bound leaves into each tensor's grad slot.
    /// Parameters unreachable from the loss receive zeros.
    pub fn accumulate_grads(&mut self, bindings: &Bindings, grads: &Gradients) {
        for ((_, t), &v) in self.entries.iter_mut().zip(&bindings.vars) {
            let g = grads.get_or_zeros(v, t.numel());
            t.accumulate_grad(&g);
        }
    }

    /// Weight matrix with Glorot-uniform entries.
    pub fn insert_glorot(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Result<()> {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
        self.insert(name, Tensor::new(vec![fan_in, fan_out], data)?)
    }

    pub fn insert_filled(&mut self, name: &str, shape: &[usize], value: f64) -> Result<()> {
        self.insert(name, Tensor::full(shape, value))
    }
}

/// Tape handles for every parameter, looked up by name.
#[derive(Debug, Clone)]
pub struct Bindings {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bindings {
    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Compares autodiff gradients of `f` against central differences for every
/// parameter entry. Returns the maximum of `|fd - ad| / max(1, |fd|, |ad|)`.
pub fn finite_diff_check<F>(params: &ModelParams, h: f64, f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let eval = |p: &ModelParams| -> Result<f64> {
        let mut tape = Tape::new();
        let b = p.bind(&mut tape);
        let out = f(&mut tape, &b)?;
        Ok(tape.value(out).data()[0])
    };

    let mut tape = Tape::new();
    let bindings = params.bind(&mut tape);
    let loss = f(&mut tape, &bindings)?;
    let grads = tape.backward(loss)?;

    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (k, (name, t)) in params.iter().enumerate() {
        let analytic = grads.get_or_zeros(bindings.vars[k], t.numel());
        for (i, &ad) in analytic.iter().enumerate() {
            let orig = t.data()[i];
            probe.get_mut(name)?.data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe.get_mut(name)?.data_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (fd - ad).abs() / 1f64.max(fd.abs()).max(ad.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
