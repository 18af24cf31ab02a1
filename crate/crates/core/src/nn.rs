//! Parameter containers shared by the network layers.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::image_ops::{conv2d, PadMode};
use crate::tensor::{Real, Tensor, Var};

/// Structured access to the named parameters of a layer tree.
pub trait Module<T: Real> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Truncated normal (resampled beyond two standard deviations).
pub(crate) fn trunc_normal<T: Real, R: Rng>(rng: &mut R, shape: &[usize], std: f64) -> Tensor<T> {
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape, |_| loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 2.0 * std {
            break T::of(v);
        }
    })
}

pub(crate) const INIT_STD: f64 = 0.02;

#[derive(Debug)]
pub struct Conv<T: Real> {
    pub weight: Var<T>,
    pub bias: Option<Var<T>>,
    pub groups: usize,
    pub padding: PadMode,
}

impl<T: Real> Conv<T> {
    pub fn new<R: Rng>(rng: &mut R, cin: usize, cout: usize, k: usize, groups: usize) -> Self {
        Self {
            weight: Var::param(trunc_normal(rng, &[cout, cin / groups, k, k], INIT_STD)),
            bias: Some(Var::param(Tensor::zeros(&[cout]))),
            groups,
            padding: PadMode::Zero,
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        conv2d(x, &self.weight, self.bias.as_ref(), 1, self.padding, self.groups)
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

impl<T: Real> Module<T> for Conv<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

/// Every parameter of a module as `(name, value)` pairs in visiting order.
pub fn named_parameters<T: Real, M: Module<T> + ?Sized>(m: &M) -> Vec<(String, Tensor<T>)> {
    let mut out = Vec::new();
    m.visit("", &mut |name, v| out.push((name.to_string(), v.value().clone())));
    out
}

pub fn parameter_count<T: Real, M: Module<T> + ?Sized>(m: &M) -> usize {
    let mut n = 0;
    m.visit("", &mut |_, v| n += v.value().numel());
    n
}

/// Turns gradient tracking on or off for every parameter.
pub fn set_requires_grad<T: Real, M: Module<T> + ?Sized>(m: &mut M, on: bool) {
    m.visit_mut("", &mut |_, v| *v = Var::leaf(v.value().clone(), on));
}

pub fn zero_grad<T: Real, M: Module<T> + ?Sized>(m: &M) {
    m.visit("", &mut |_, v| v.zero_grad());
}

/// Replaces every parameter with a constant-filled leaf of the same shape.
pub fn fill_parameters<T: Real, M: Module<T> + ?Sized>(m: &mut M, value: T) {
    m.visit_mut("", &mut |_, v| *v = Var::param(Tensor::full(v.shape(), value)));
}

/// Overwrites parameters by name. Every parameter must be supplied exactly
/// once with a matching shape.
pub fn assign_parameters<T: Real, M: Module<T> + ?Sized>(m: &mut M, values: Vec<(String, Tensor<T>)>) -> Result<()> {
    let mut table: std::collections::HashMap<String, Tensor<T>> = values.into_iter().collect();
    let mut problems = Vec::new();
    m.visit_mut("", &mut |name, v| match table.remove(name) {
        Some(t) if t.shape() == v.shape() => *v = Var::param(t),
        Some(t) => problems.push(format!(
            "{name}: stored shape {:?}, expected {:?}",
            t.shape(),
            v.shape()
        )),
        None => problems.push(format!("{name}: missing")),
    });
    let mut extra: Vec<String> = table.into_keys().map(|k| format!("{k}: unexpected")).collect();
    extra.sort();
    problems.extend(extra);
    if problems.is_empty() {
        Ok(())
    } else {
        Err(crate::error::Error::Contract(format!(
            "parameter set does not fit the model: {}",
            problems.join("; ")
        )))
    }
}
