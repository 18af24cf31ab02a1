//! Multi-level variance-aware feed-forward network.

use rand::Rng;

use crate::error::{Error, Result};
use crate::image_ops::{avg_pool_local, dims4, local_variance};
use crate::nn::{join, Conv, Module};
use crate::tensor::{Real, Tensor, Var};

/// Kernel sizes of the parallel branches.
pub const BRANCH_KERNELS: [usize; 3] = [3, 5, 7];

/// One depthwise branch: conv, variance gate, high-pass.
#[derive(Debug)]
pub struct VarianceBranch<T: Real> {
    pub k: usize,
    pub dw: Conv<T>,
    pub var_scale: Var<T>,
    pub var_bias: Var<T>,
}

impl<T: Real> VarianceBranch<T> {
    pub fn new<R: Rng>(rng: &mut R, channels: usize, k: usize) -> Self {
        Self {
            k,
            dw: Conv::new(rng, channels, channels, k, channels),
            var_scale: Var::param(Tensor::full(&[channels], T::one())),
            var_bias: Var::param(Tensor::zeros(&[channels])),
        }
    }

    pub fn forward(&self, h: &Var<T>) -> Result<Var<T>> {
        variance_branch(h, self)
    }
}

impl<T: Real> Module<T> for VarianceBranch<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>)) {
        self.dw.visit(&join(prefix, "dw"), f);
        f(&join(prefix, "var_scale"), &self.var_scale);
        f(&join(prefix, "var_bias"), &self.var_bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>)) {
        self.dw.visit_mut(&join(prefix, "dw"), f);
        f(&join(prefix, "var_scale"), &mut self.var_scale);
        f(&join(prefix, "var_bias"), &mut self.var_bias);
    }
}

/// `b = dw(h)`, `g = b ⊙ σ(s·var_k(b) + β)`, returns `g − avgpool_k(g)`.
pub fn variance_branch<T: Real>(h: &Var<T>, p: &VarianceBranch<T>) -> Result<Var<T>> {
    let b = p.dw.forward(h)?;
    let gate = local_variance(&b, p.k)?
        .scale_along(&p.var_scale, 1)?
        .shift_along(&p.var_bias, 1)?
        .sigmoid();
    let g = b.mul(&gate)?;
    g.sub(&avg_pool_local(&g, p.k)?)
}

#[derive(Debug)]
pub struct Mvfn<T: Real> {
    pub channels: usize,
    pub gamma: usize,
    pub expand: Conv<T>,
    pub branches: Vec<VarianceBranch<T>>,
    pub merge: Conv<T>,
    pub out: Conv<T>,
}

impl<T: Real> Mvfn<T> {
    pub fn new<R: Rng>(rng: &mut R, channels: usize, gamma: usize) -> Result<Self> {
        if gamma < 1 {
            return Err(Error::config("mvfn expansion ratio must be at least 1"));
        }
        let hidden = gamma * channels;
        Ok(Self {
            channels,
            gamma,
            expand: Conv::new(rng, channels, hidden, 1, 1),
            branches: BRANCH_KERNELS
                .iter()
                .map(|&k| VarianceBranch::new(rng, hidden, k))
                .collect(),
            merge: Conv::new(rng, BRANCH_KERNELS.len() * hidden, hidden, 1, 1),
            out: Conv::new(rng, hidden, channels, 1, 1),
        })
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        mvfn_forward(x, self)
    }
}

impl<T: Real> Module<T> for Mvfn<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>)) {
        self.expand.visit(&join(prefix, "expand"), f);
        for b in &self.branches {
            b.visit(&join(prefix, &format!("branch{}", b.k)), f);
        }
        self.merge.visit(&join(prefix, "merge"), f);
        self.out.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>)) {
        self.expand.visit_mut(&join(prefix, "expand"), f);
        for b in &mut self.branches {
            let name = join(prefix, &format!("branch{}", b.k));
            b.visit_mut(&name, f);
        }
        self.merge.visit_mut(&join(prefix, "merge"), f);
        self.out.visit_mut(&join(prefix, "out"), f);
    }
}

/// `y = out(SiLU(merge(concat(o₃, o₅, o₇)) + h))` with `h = expand(x)`.
pub fn mvfn_forward<T: Real>(x: &Var<T>, p: &Mvfn<T>) -> Result<Var<T>> {
    let (_, c, _, _) = dims4(x)?;
    if c != p.channels {
        return Err(Error::dim(format!("mvfn expects {} channels, got {c}", p.channels)));
    }
    let h = p.expand.forward(x)?;
    let branches = p
        .branches
        .iter()
        .map(|b| variance_branch(&h, b))
        .collect::<Result<Vec<_>>>()?;
    let z = p.merge.forward(&Var::concat(&branches, 1)?)?.add(&h)?.silu();
    p.out.forward(&z)
}
