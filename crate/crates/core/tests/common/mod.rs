//! Test-side oracles shared by several integration targets. Every function
//! here recomputes a quantity from its definition with plain loops.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use that_core::attention::Ptsa;
use that_core::nn::Conv;
use that_core::{Tensor, Var};

/// Lowest within-cluster SSE split over the sorted order; returns the keep
/// bits of the upper part.
pub fn exhaustive_two_means(row: &[f64]) -> Vec<bool> {
    let mut sorted = row.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sse = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
    };
    let best = (1..sorted.len())
        .min_by(|&a, &b| {
            let ea = sse(&sorted[..a]) + sse(&sorted[a..]);
            let eb = sse(&sorted[..b]) + sse(&sorted[b..]);
            ea.partial_cmp(&eb).unwrap()
        })
        .unwrap();
    let thr = sorted[best];
    row.iter().map(|&v| v >= thr).collect()
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-scale..scale))
}

pub fn randomize(rng: &mut ChaCha8Rng, c: &mut Conv<f64>) {
    c.weight = Var::param(rand_tensor(rng, c.weight.shape(), 0.5));
    c.bias = Some(Var::param(rand_tensor(rng, &[c.out_channels()], 0.2)));
}

/// `y[o, p] = b[o] + Σ_i W[o, i] x[i, p]` on a `[C, P]` pixel matrix.
pub fn pointwise(c: &Conv<f64>, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let w = c.weight.value();
    let b = c.bias.as_ref().unwrap().value();
    let (co, ci) = (w.shape()[0], w.shape()[1]);
    (0..co)
        .map(|o| {
            (0..x[0].len())
                .map(|p| b.data()[o] + (0..ci).map(|i| w.data()[o * ci + i] * x[i][p]).sum::<f64>())
                .collect()
        })
        .collect()
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn to_rows(x: &Tensor<f64>) -> Vec<Vec<f64>> {
    let (c, p) = (x.shape()[1], x.shape()[2] * x.shape()[3]);
    (0..c).map(|i| x.data()[i * p..][..p].to_vec()).collect()
}

/// Dense channel attention computed with plain loops.
pub fn dense_channel_attention(p: &Ptsa<f64>, x: &Tensor<f64>) -> Vec<Vec<f64>> {
    let xr = to_rows(x);
    let (q, k, v) = (pointwise(&p.q, &xr), pointwise(&p.k, &xr), pointwise(&p.v, &xr));
    let c = xr.len();
    let heads = p.cfg.heads;
    let dc = c / heads;
    let norm = |r: &[f64]| {
        let n = r.iter().map(|a| a * a).sum::<f64>().sqrt();
        r.iter().map(|a| a / n).collect::<Vec<f64>>()
    };
    let mut o = vec![vec![0.0; xr[0].len()]; c];
    for h in 0..heads {
        let tau = p.tau.value().data()[h];
        for i in 0..dc {
            let qi = norm(&q[h * dc + i]);
            let scores: Vec<f64> = (0..dc)
                .map(|j| tau * qi.iter().zip(norm(&k[h * dc + j])).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            let a = softmax(&scores);
            for (j, aj) in a.iter().enumerate() {
                for (op, vp) in o[h * dc + i].iter_mut().zip(&v[h * dc + j]) {
                    *op += aj * vp;
                }
            }
        }
    }
    pointwise(&p.proj, &o)
}

/// Hand-summed layer table for `ModelConfig::tiny(4, 2)` at LR 8×8:
/// (layer, parameters, multiply-accumulates). C=16, N=1, heads=2, window=4,
/// S=4, r=2, gamma=2; the body runs at 16×16 (256 pixels).
pub const TINY_HAND_TABLE: [(&str, u64, u64); 18] = [
    ("shallow 3x3 4->15", 555, 138_240),
    ("norm1", 32, 0),
    ("ptsa q/k/v/proj 1x1 16->16", 1088, 262_144),
    ("ptsa tau + channel attention", 2, 65_536),
    ("norm2", 32, 0),
    ("wsa q/k/v/proj 1x1 16->16", 1088, 262_144),
    ("wsa bias table + 16 windows of 16 tokens", 98, 131_072),
    ("norm3", 32, 0),
    ("mvfn expand 16->32", 544, 131_072),
    ("dw3", 320, 73_728),
    ("gate3", 64, 0),
    ("dw5", 832, 204_800),
    ("gate5", 64, 0),
    ("dw7", 1600, 401_408),
    ("gate7", 64, 0),
    ("merge 96->32", 3104, 786_432),
    ("out 32->16", 528, 131_072),
    ("recon 3x3 16->4", 580, 147_456),
];
