//! Analytic parameter and operation counts.
//!
//! Parameters are learnable scalars. Operations are multiply-accumulates
//! (MACs) of convolutions and matrix products only; normalization,
//! activations, softmax, pooling, resampling and elementwise arithmetic
//! are not counted. A convolution `cin→cout`, `k×k`, `g` groups costs
//! `cout·(cin/g)·k²` MACs per output pixel and has `cout·(cin/g)·k² + cout`
//! parameters. Attention products cost `T·T·d` MACs each for `QKᵀ` and
//! `AV` per head and token group.

use super::{ModelConfig, UpsampleStage};
use crate::attention::TokenAxis;
use crate::mvfn::BRANCH_KERNELS;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub params: u64,
    pub macs: u64,
}

fn conv(name: String, cin: usize, cout: usize, k: usize, groups: usize, pixels: usize) -> LayerCost {
    let per_pixel = (cout * (cin / groups) * k * k) as u64;
    LayerCost {
        name,
        params: per_pixel + cout as u64,
        macs: per_pixel * pixels as u64,
    }
}

fn other(name: String, params: usize, macs: u64) -> LayerCost {
    LayerCost {
        name,
        params: params as u64,
        macs,
    }
}

/// Per-layer costs for a forward pass on an `h×w` LR input.
pub fn layer_table(cfg: &ModelConfig, h: usize, w: usize) -> Vec<LayerCost> {
    let (c, r) = (cfg.channels, cfg.scale);
    let (bh, bw) = match cfg.upsample_stage {
        UpsampleStage::Input => (h * r, w * r),
        UpsampleStage::Output => (h, w),
    };
    let p = bh * bw;
    let win = cfg.window;
    let windows = bh.div_ceil(win) * bw.div_ceil(win);
    let t = win * win;
    // QKᵀ and AV over every padded window: 2·windows·heads·T²·(C/heads).
    let window_attention = 2 * (windows * t * t * c) as u64;
    let hidden = cfg.gamma * c;

    let mut rows = vec![conv("shallow".into(), cfg.bands, cfg.shallow_out(), 3, 1, p)];
    for i in 0..cfg.blocks {
        let b = |s: &str| format!("blocks.{i}.{s}");
        if cfg.use_ptsa {
            rows.push(other(b("norm1"), 2 * c, 0));
            for n in ["q", "k", "v", "proj"] {
                rows.push(conv(b(&format!("ptsa.{n}")), c, c, 1, 1, p));
            }
            let attn = match cfg.token_axis {
                // Per head T = C/heads tokens of width H·W.
                TokenAxis::Channel => 2 * (c * c / cfg.heads * p) as u64,
                TokenAxis::SpatialWindow => window_attention,
            };
            rows.push(other(b("ptsa.attention"), cfg.heads, attn));
        }
        rows.push(other(b("norm2"), 2 * c, 0));
        for n in ["q", "k", "v", "proj"] {
            rows.push(conv(b(&format!("wsa.{n}")), c, c, 1, 1, p));
        }
        let span = 2 * win - 1;
        rows.push(other(b("wsa.attention"), span * span * cfg.heads, window_attention));
        if cfg.use_mvfn {
            rows.push(other(b("norm3"), 2 * c, 0));
            rows.push(conv(b("mvfn.expand"), c, hidden, 1, 1, p));
            for k in BRANCH_KERNELS {
                rows.push(conv(b(&format!("mvfn.branch{k}.dw")), hidden, hidden, k, hidden, p));
                rows.push(other(b(&format!("mvfn.branch{k}.gate")), 2 * hidden, 0));
            }
            rows.push(conv(b("mvfn.merge"), BRANCH_KERNELS.len() * hidden, hidden, 1, 1, p));
            rows.push(conv(b("mvfn.out"), hidden, c, 1, 1, p));
        }
    }
    rows.push(conv("recon".into(), c, cfg.recon_out(), 3, 1, p));
    rows
}

/// Total `(parameters, MACs)` for an `h×w` LR input.
pub fn count_params_flops(cfg: &ModelConfig, h: usize, w: usize) -> (u64, u64) {
    layer_table(cfg, h, w)
        .iter()
        .fold((0, 0), |(p, f), l| (p + l.params, f + l.macs))
}
