use rand::Rng;

use super::{window_merge, window_partition, AttentionConfig};
use crate::error::Result;
use crate::image_ops::dims4;
use crate::nn::{join, trunc_normal, Conv, Module, INIT_STD};
use crate::tensor::{Real, Var};

/// Window self-attention parameters with a learned bias per relative offset.
#[derive(Debug)]
pub struct Wsa<T: Real> {
    pub cfg: AttentionConfig,
    pub q: Conv<T>,
    pub k: Conv<T>,
    pub v: Conv<T>,
    pub proj: Conv<T>,
    /// `[(2w-1)², heads]`.
    pub rel_bias: Var<T>,
    index: Vec<usize>,
}

impl<T: Real> Wsa<T> {
    pub fn new<R: Rng>(rng: &mut R, channels: usize, cfg: AttentionConfig) -> Result<Self> {
        cfg.check_channels(channels)?;
        let span = 2 * cfg.window - 1;
        Ok(Self {
            q: Conv::new(rng, channels, channels, 1, 1),
            k: Conv::new(rng, channels, channels, 1, 1),
            v: Conv::new(rng, channels, channels, 1, 1),
            proj: Conv::new(rng, channels, channels, 1, 1),
            rel_bias: Var::param(trunc_normal(rng, &[span * span, cfg.heads], INIT_STD)),
            index: relative_position_index(cfg.window),
            cfg,
        })
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        wsa_forward(x, self)
    }
}

impl<T: Real> Module<T> for Wsa<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>)) {
        self.q.visit(&join(prefix, "q"), f);
        self.k.visit(&join(prefix, "k"), f);
        self.v.visit(&join(prefix, "v"), f);
        self.proj.visit(&join(prefix, "proj"), f);
        f(&join(prefix, "rel_bias"), &self.rel_bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>)) {
        self.q.visit_mut(&join(prefix, "q"), f);
        self.k.visit_mut(&join(prefix, "k"), f);
        self.v.visit_mut(&join(prefix, "v"), f);
        self.proj.visit_mut(&join(prefix, "proj"), f);
        f(&join(prefix, "rel_bias"), &mut self.rel_bias);
    }
}

/// Row of the bias table for each (query, key) pair of a `w×w` window,
/// flattened query-major.
pub fn relative_position_index(w: usize) -> Vec<usize> {
    let span = 2 * w - 1;
    let t = w * w;
    let mut out = Vec::with_capacity(t * t);
    for i in 0..t {
        for j in 0..t {
            let dy = i / w + w - 1 - j / w;
            let dx = i % w + w - 1 - j % w;
            out.push(dy * span + dx);
        }
    }
    out
}

pub fn wsa_forward<T: Real>(x: &Var<T>, p: &Wsa<T>) -> Result<Var<T>> {
    let (_, c, _, _) = dims4(x)?;
    let cfg = &p.cfg;
    cfg.check_channels(c)?;
    let (heads, w) = (cfg.heads, cfg.window);
    let t = w * w;
    let dh = c / heads;
    let (q, grid) = window_partition(&p.q.forward(x)?, heads, w)?;
    let (k, _) = window_partition(&p.k.forward(x)?, heads, w)?;
    let (v, _) = window_partition(&p.v.forward(x)?, heads, w)?;
    let g = q.shape()[0];
    let q = q.scale(T::of(1.0 / (dh as f64).sqrt())).reshape(&[g * heads, t, dh])?;
    let kt = k.reshape(&[g * heads, t, dh])?.transpose(1, 2)?;
    let bias = p
        .rel_bias
        .index_select(&p.index)?
        .reshape(&[t, t, heads])?
        .permute(&[2, 0, 1])?;
    let a = q
        .bmm(&kt)?
        .reshape(&[g, heads, t, t])?
        .add_trailing(&bias)?
        .softmax(3)?;
    let o = a
        .reshape(&[g * heads, t, t])?
        .bmm(&v.reshape(&[g * heads, t, dh])?)?
        .reshape(&[g, heads, t, dh])?;
    p.proj.forward(&window_merge(&o, grid)?)
}
