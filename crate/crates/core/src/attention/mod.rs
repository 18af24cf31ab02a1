//! Pivotal token selective attention and window self-attention.

mod kmeans;
mod ptsa;
mod wsa;

pub use kmeans::{kmeans_mask, kmeans_row, lloyd_mask, lloyd_row, PivotalMask};
pub use ptsa::{pivotal_attention, ptsa_forward, Ptsa};
pub use wsa::{relative_position_index, wsa_forward, Wsa};

use crate::error::{Error, Result};
use crate::image_ops::{crop, dims4, pad, PadMode};
use crate::tensor::{Real, Tensor, Var};

/// What a PTSA score row is made of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenAxis {
    /// Tokens are channels; each token's descriptor is the whole spatial map.
    Channel,
    /// Tokens are pixels inside a non-overlapping spatial window.
    SpatialWindow,
}

impl TokenAxis {
    pub fn name(self) -> &'static str {
        match self {
            TokenAxis::Channel => "channel",
            TokenAxis::SpatialWindow => "spatial_window",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "channel" => Some(TokenAxis::Channel),
            "spatial_window" => Some(TokenAxis::SpatialWindow),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionConfig {
    pub heads: usize,
    pub window: usize,
    pub tau_init: f64,
    pub token_axis: TokenAxis,
    pub kmeans_max_iters: usize,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        Self {
            heads: 6,
            window: 8,
            tau_init: 1.0,
            token_axis: TokenAxis::Channel,
            kmeans_max_iters: 10,
        }
    }
}

impl AttentionConfig {
    /// Lists every violated invariant.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.heads < 1 {
            out.push("heads must be at least 1".into());
        }
        if self.window < 2 {
            out.push(format!("window must be at least 2, got {}", self.window));
        }
        if self.kmeans_max_iters < 1 {
            out.push("kmeans_max_iters must be at least 1".into());
        }
        out
    }

    pub(crate) fn check_channels(&self, c: usize) -> Result<()> {
        let mut p = self.problems();
        if self.heads >= 1 && !c.is_multiple_of(self.heads) {
            p.push(format!("{c} channels are not divisible by {} heads", self.heads));
        }
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

/// How PTSA layers obtain their pivotal masks during a forward pass.
#[derive(Clone, Debug)]
pub enum MaskPolicy {
    /// Per-row optimal two-means split of the live scores.
    KMeans,
    /// Per-row Lloyd two-means from min/max centroids.
    Lloyd,
    /// Keep every token; PTSA degenerates to dense attention.
    AllOnes,
    /// Reuse masks recorded by an earlier pass, in call order.
    Replay(Vec<PivotalMask>),
}

/// Supplies masks to PTSA calls and records the ones handed out, so a
/// forward pass can be repeated with the selection frozen.
#[derive(Clone, Debug)]
pub struct MaskTape {
    policy: MaskPolicy,
    recorded: Vec<PivotalMask>,
}

impl Default for MaskTape {
    fn default() -> Self {
        Self::new(MaskPolicy::KMeans)
    }
}

impl MaskTape {
    pub fn new(policy: MaskPolicy) -> Self {
        Self {
            policy,
            recorded: Vec::new(),
        }
    }

    /// A tape that replays everything this one recorded.
    pub fn frozen(&self) -> Self {
        Self::new(MaskPolicy::Replay(self.recorded.clone()))
    }

    pub fn recorded(&self) -> &[PivotalMask] {
        &self.recorded
    }

    pub(crate) fn next<T: Real>(&mut self, scores: &Tensor<T>, max_iters: usize) -> Result<PivotalMask> {
        let mask = match &self.policy {
            MaskPolicy::KMeans => kmeans_mask(scores),
            MaskPolicy::Lloyd => lloyd_mask(scores, max_iters),
            MaskPolicy::AllOnes => PivotalMask::all_ones(scores.shape()),
            MaskPolicy::Replay(masks) => {
                let m = masks.get(self.recorded.len()).ok_or_else(|| {
                    Error::contract(format!("mask replay exhausted after {} masks", self.recorded.len()))
                })?;
                if m.shape() != scores.shape() {
                    return Err(Error::dim(format!(
                        "replayed mask {:?} does not fit scores {:?}",
                        m.shape(),
                        scores.shape()
                    )));
                }
                m.clone()
            }
        };
        self.recorded.push(mask.clone());
        Ok(mask)
    }
}

/// `τ_h · ⟨q̂_i, k̂_j⟩` for `q, k: [B, heads, T, d]` and `tau: [heads]`, where
/// hats denote l2 normalization along `d`.
pub fn similarity_matrix<T: Real>(q: &Var<T>, k: &Var<T>, tau: &Var<T>) -> Result<Var<T>> {
    let (b, h, t, d) = match (q.shape(), k.shape()) {
        (&[b, h, t, d], &[kb, kh, kt, kd]) if (b, h, t) == (kb, kh, kt) => {
            if d != kd {
                return Err(Error::dim(format!("query width {d} vs key width {kd}")));
            }
            (b, h, t, d)
        }
        (qs, ks) => return Err(Error::dim(format!("query {qs:?} and key {ks:?} are incompatible"))),
    };
    let eps = T::of(1e-8);
    let qn = q.l2_normalize(3, eps)?.reshape(&[b * h, t, d])?;
    let kn = k.l2_normalize(3, eps)?.reshape(&[b * h, t, d])?.transpose(1, 2)?;
    qn.bmm(&kn)?.reshape(&[b, h, t, t])?.scale_along(tau, 1)
}

/// Softmax along the last axis restricted to kept entries. Dropped entries
/// receive the masking sentinel, so they come out as exact zeros and pass
/// no gradient; the mask itself is a constant.
pub fn pivotal_softmax<T: Real>(m: &Var<T>, mask: &PivotalMask) -> Result<Var<T>> {
    if mask.shape() != m.shape() {
        return Err(Error::dim(format!("mask {:?} vs scores {:?}", mask.shape(), m.shape())));
    }
    let all_kept = mask.bits().iter().all(|&k| k);
    let logits = if all_kept {
        m.clone()
    } else {
        let bias = mask
            .bits()
            .iter()
            .map(|&k| if k { T::zero() } else { T::NEG_LARGE })
            .collect();
        m.add(&Var::constant(Tensor::new(m.shape(), bias)?))?
    };
    logits.softmax(m.shape().len() - 1)
}

/// Reflect-pads to window multiples and splits `[B, heads·dh, H, W]` into
/// `[B·nH·nW, heads, w², dh]` token groups.
pub(crate) fn window_partition<T: Real>(x: &Var<T>, heads: usize, w: usize) -> Result<(Var<T>, Grid)> {
    let (b, c, h, wd) = dims4(x)?;
    let (hp, wp) = (h.div_ceil(w) * w, wd.div_ceil(w) * w);
    let padded = if (hp, wp) == (h, wd) {
        x.clone()
    } else {
        pad(x, 0, hp - h, 0, wp - wd, PadMode::Reflect)?
    };
    let grid = Grid {
        b,
        heads,
        dh: c / heads,
        nh: hp / w,
        nw: wp / w,
        w,
        h,
        wd,
    };
    let tokens = padded
        .reshape(&[b, heads, grid.dh, grid.nh, w, grid.nw, w])?
        .permute(&[0, 3, 5, 1, 4, 6, 2])?
        .reshape(&[b * grid.nh * grid.nw, heads, w * w, grid.dh])?;
    Ok((tokens, grid))
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Grid {
    b: usize,
    heads: usize,
    dh: usize,
    nh: usize,
    nw: usize,
    w: usize,
    h: usize,
    wd: usize,
}

/// Inverse of [`window_partition`], cropping the padding away.
pub(crate) fn window_merge<T: Real>(tokens: &Var<T>, g: Grid) -> Result<Var<T>> {
    let merged = tokens
        .reshape(&[g.b, g.nh, g.nw, g.heads, g.w, g.w, g.dh])?
        .permute(&[0, 3, 6, 1, 4, 2, 5])?
        .reshape(&[g.b, g.heads * g.dh, g.nh * g.w, g.nw * g.w])?;
    if (g.nh * g.w, g.nw * g.w) == (g.h, g.wd) {
        Ok(merged)
    } else {
        crop(&merged, 0, 0, g.h, g.wd)
    }
}
