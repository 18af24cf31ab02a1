use rand::Rng;

use super::{pivotal_softmax, similarity_matrix, window_merge, window_partition, AttentionConfig, MaskTape, TokenAxis};
use crate::error::Result;
use crate::image_ops::dims4;
use crate::nn::{join, Conv, Module};
use crate::tensor::{Real, Tensor, Var};

/// PTSA parameters: 1×1 query/key/value/output projections and one
/// temperature per head.
#[derive(Debug)]
pub struct Ptsa<T: Real> {
    pub cfg: AttentionConfig,
    pub q: Conv<T>,
    pub k: Conv<T>,
    pub v: Conv<T>,
    pub proj: Conv<T>,
    pub tau: Var<T>,
}

impl<T: Real> Ptsa<T> {
    pub fn new<R: Rng>(rng: &mut R, channels: usize, cfg: AttentionConfig) -> Result<Self> {
        cfg.check_channels(channels)?;
        Ok(Self {
            q: Conv::new(rng, channels, channels, 1, 1),
            k: Conv::new(rng, channels, channels, 1, 1),
            v: Conv::new(rng, channels, channels, 1, 1),
            proj: Conv::new(rng, channels, channels, 1, 1),
            tau: Var::param(Tensor::full(&[cfg.heads], T::of(cfg.tau_init))),
            cfg,
        })
    }

    pub fn forward(&self, x: &Var<T>, tape: &mut MaskTape) -> Result<Var<T>> {
        ptsa_forward(x, self, tape)
    }
}

impl<T: Real> Module<T> for Ptsa<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>)) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.proj.visit(&join(prefix, "proj"), f);
        f(&join(prefix, "tau"), &self.tau);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>)) {
        self.q.visit_mut(&join(prefix, "q"), f);
        self.k.visit_mut(&join(prefix, "k"), f);
        self.v.visit_mut(&join(prefix, "v"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
        f(&join(prefix, "tau"), &mut self.tau);
    }
}

/// Masked attention on token groups `[G, heads, T, d]`: normalized
/// similarity, pivotal mask from `tape`, softmax over kept keys, then `A·V`.
pub fn pivotal_attention<T: Real>(
    q: &Var<T>,
    k: &Var<T>,
    v: &Var<T>,
    tau: &Var<T>,
    tape: &mut MaskTape,
    max_iters: usize,
) -> Result<Var<T>> {
    let m = similarity_matrix(q, k, tau)?;
    let mask = tape.next(m.value(), max_iters)?;
    let a = pivotal_softmax(&m, &mask)?;
    let (g, h, t, d) = (v.shape()[0], v.shape()[1], v.shape()[2], v.shape()[3]);
    let a3 = a.reshape(&[g * h, t, t])?;
    a3.bmm(&v.reshape(&[g * h, t, d])?)?.reshape(&[g, h, t, d])
}

pub fn ptsa_forward<T: Real>(x: &Var<T>, p: &Ptsa<T>, tape: &mut MaskTape) -> Result<Var<T>> {
    let (b, c, h, w) = dims4(x)?;
    let cfg = &p.cfg;
    cfg.check_channels(c)?;
    let heads = cfg.heads;
    let (q, k, v) = (p.q.forward(x)?, p.k.forward(x)?, p.v.forward(x)?);
    let o = match cfg.token_axis {
        TokenAxis::Channel => {
            let tok = |y: &Var<T>| y.reshape(&[b, heads, c / heads, h * w]);
            let o = pivotal_attention(&tok(&q)?, &tok(&k)?, &tok(&v)?, &p.tau, tape, cfg.kmeans_max_iters)?;
            o.reshape(&[b, c, h, w])?
        }
        TokenAxis::SpatialWindow => {
            let (qt, grid) = window_partition(&q, heads, cfg.window)?;
            let (kt, _) = window_partition(&k, heads, cfg.window)?;
            let (vt, _) = window_partition(&v, heads, cfg.window)?;
            let o = pivotal_attention(&qt, &kt, &vt, &p.tau, tape, cfg.kmeans_max_iters)?;
            window_merge(&o, grid)?
        }
    };
    p.proj.forward(&o)
}
