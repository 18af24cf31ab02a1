//! The fusion network: shallow extraction with the pan image appended,
//! stacked PTSA/WSA/MVFN groups, and reconstruction with a bicubic global
//! residual.

mod checkpoint;
mod complexity;
mod config;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use complexity::{count_params_flops, layer_table, LayerCost};
pub use config::{ModelConfig, UpsampleStage};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::{MaskTape, Ptsa, Wsa};
use crate::error::{Error, Result};
use crate::image_ops::{bicubic_resize, dims4, layer_norm_channels, pixel_shuffle, pixel_unshuffle};
use crate::mvfn::Mvfn;
use crate::nn::{join, Conv, Module};
use crate::tensor::{Real, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug)]
pub struct ChannelNorm<T: Real> {
    pub gamma: Var<T>,
    pub beta: Var<T>,
}

impl<T: Real> ChannelNorm<T> {
    pub fn new(c: usize) -> Self {
        Self {
            gamma: Var::param(Tensor::full(&[c], T::one())),
            beta: Var::param(Tensor::zeros(&[c])),
        }
    }

    pub fn forward(&self, x: &Var<T>) -> Result<Var<T>> {
        layer_norm_channels(x, &self.gamma, &self.beta, T::of(LN_EPS))
    }
}

impl<T: Real> Module<T> for ChannelNorm<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }
}

/// One group: pre-norm residual PTSA, WSA and MVFN. Disabled sub-layers
/// carry no parameters.
#[derive(Debug)]
pub struct PtsgBlock<T: Real> {
    pub ptsa: Option<(ChannelNorm<T>, Ptsa<T>)>,
    pub wsa: (ChannelNorm<T>, Wsa<T>),
    pub mvfn: Option<(ChannelNorm<T>, Mvfn<T>)>,
}

impl<T: Real> PtsgBlock<T> {
    pub fn new(rng: &mut ChaCha8Rng, cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.channels;
        let ptsa = if cfg.use_ptsa {
            Some((ChannelNorm::new(c), Ptsa::new(rng, c, cfg.attention())?))
        } else {
            None
        };
        let wsa = (ChannelNorm::new(c), Wsa::new(rng, c, cfg.attention())?);
        let mvfn = if cfg.use_mvfn {
            Some((ChannelNorm::new(c), Mvfn::new(rng, c, cfg.gamma)?))
        } else {
            None
        };
        Ok(Self { ptsa, wsa, mvfn })
    }
}

impl<T: Real> Module<T> for PtsgBlock<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>)) {
        if let Some((n, p)) = &self.ptsa {
            n.visit(&join(prefix, "norm1"), f);
            p.visit(&join(prefix, "ptsa"), f);
        }
        self.wsa.0.visit(&join(prefix, "norm2"), f);
        self.wsa.1.visit(&join(prefix, "wsa"), f);
        if let Some((n, m)) = &self.mvfn {
            n.visit(&join(prefix, "norm3"), f);
            m.visit(&join(prefix, "mvfn"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>)) {
        if let Some((n, p)) = &mut self.ptsa {
            n.visit_mut(&join(prefix, "norm1"), f);
            p.visit_mut(&join(prefix, "ptsa"), f);
        }
        self.wsa.0.visit_mut(&join(prefix, "norm2"), f);
        self.wsa.1.visit_mut(&join(prefix, "wsa"), f);
        if let Some((n, m)) = &mut self.mvfn {
            n.visit_mut(&join(prefix, "norm3"), f);
            m.visit_mut(&join(prefix, "mvfn"), f);
        }
    }
}

/// `f₁ = f + PTSA(LN f)`, `f₂ = f₁ + WSA(LN f₁)`, `f₃ = f₂ + MVFN(LN f₂)`.
pub fn ptsg_forward<T: Real>(f: &Var<T>, block: &PtsgBlock<T>, tape: &mut MaskTape) -> Result<Var<T>> {
    let f1 = match &block.ptsa {
        Some((n, p)) => f.add(&p.forward(&n.forward(f)?, tape)?)?,
        None => f.clone(),
    };
    let f2 = f1.add(&block.wsa.1.forward(&block.wsa.0.forward(&f1)?)?)?;
    match &block.mvfn {
        Some((n, m)) => f2.add(&m.forward(&n.forward(&f2)?)?),
        None => Ok(f2),
    }
}

#[derive(Debug)]
pub struct That<T: Real> {
    pub cfg: ModelConfig,
    pub shallow: Conv<T>,
    pub blocks: Vec<PtsgBlock<T>>,
    pub recon: Conv<T>,
}

impl<T: Real> That<T> {
    /// Deterministic initialization: the same seed yields the same values
    /// in every precision.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        let problems = cfg.problems();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shallow = Conv::new(&mut rng, cfg.bands, cfg.shallow_out(), 3, 1);
        let blocks = (0..cfg.blocks)
            .map(|_| PtsgBlock::new(&mut rng, &cfg))
            .collect::<Result<Vec<_>>>()?;
        let recon = Conv::new(&mut rng, cfg.channels, cfg.recon_out(), 3, 1);
        Ok(Self {
            cfg,
            shallow,
            blocks,
            recon,
        })
    }

    pub fn forward(&self, y: &Var<T>, x: &Var<T>, tape: &mut MaskTape) -> Result<Var<T>> {
        that_forward(y, x, self, tape)
    }

    /// Same architecture and values in another precision, without gradients.
    pub fn cast<U: Real>(&self) -> That<U> {
        let mut out = That::<U>::new(self.cfg.clone(), 0).expect("validated config");
        let values: Vec<Tensor<U>> = crate::nn::named_parameters(self)
            .into_iter()
            .map(|(_, t)| t.cast())
            .collect();
        let mut it = values.into_iter();
        out.visit_mut("", &mut |_, v| *v = Var::param(it.next().expect("same layout")));
        out
    }
}

impl<T: Real> Module<T> for That<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Var<T>)) {
        self.shallow.visit(&join(prefix, "shallow"), f);
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.recon.visit(&join(prefix, "recon"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Var<T>)) {
        self.shallow.visit_mut(&join(prefix, "shallow"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_mut(&join(prefix, &format!("blocks.{i}")), f);
        }
        self.recon.visit_mut(&join(prefix, "recon"), f);
    }
}

/// Checks `y: [B,S,h,w]` against `x: [B,1,r·h,r·w]`.
fn check_inputs<T: Real>(y: &Var<T>, x: &Var<T>, cfg: &ModelConfig) -> Result<(usize, usize)> {
    let (b, s, h, w) = dims4(y)?;
    let (bx, cx, hx, wx) = dims4(x)?;
    if s != cfg.bands {
        return Err(Error::dim(format!("model expects {} bands, got {s}", cfg.bands)));
    }
    if bx != b || cx != 1 {
        return Err(Error::dim(format!(
            "pan image must be [{b},1,H,W], got {:?}",
            x.shape()
        )));
    }
    if hx != cfg.scale * h || wx != cfg.scale * w {
        return Err(Error::dim(format!(
            "pan image {hx}x{wx} is not {}x the {h}x{w} cube",
            cfg.scale
        )));
    }
    Ok((hx, wx))
}

/// Bicubic upsampling of the LR cube to the pan resolution.
pub fn upsample_lr<T: Real>(y: &Var<T>, cfg: &ModelConfig) -> Result<Var<T>> {
    let (_, _, h, w) = dims4(y)?;
    bicubic_resize(y, cfg.scale * h, cfg.scale * w)
}

/// Shallow features with the pan image appended as the last channel(s).
/// `up` is the bicubic-upsampled cube, used by the input-stage variant.
pub fn shallow_extract<T: Real>(y: &Var<T>, up: &Var<T>, x: &Var<T>, model: &That<T>) -> Result<Var<T>> {
    let cfg = &model.cfg;
    check_inputs(y, x, cfg)?;
    let (src, pan) = match cfg.upsample_stage {
        UpsampleStage::Input => (up.clone(), x.clone()),
        UpsampleStage::Output => (y.clone(), pixel_unshuffle(x, cfg.scale)?),
    };
    let f = model.shallow.forward(&src)?.relu();
    if cfg.use_pci {
        Var::concat(&[f, pan], 1)
    } else {
        Ok(f)
    }
}

/// Reconstruction conv (plus pixel shuffle for the output-stage variant)
/// and the global bicubic residual.
pub fn reconstruct<T: Real>(f: &Var<T>, up: &Var<T>, model: &That<T>) -> Result<Var<T>> {
    let r = model.recon.forward(f)?;
    let r = match model.cfg.upsample_stage {
        UpsampleStage::Input => r,
        UpsampleStage::Output => pixel_shuffle(&r, model.cfg.scale)?,
    };
    r.add(up)
}

/// `y: [B,S,h,w]`, `x: [B,1,H,W]` → fused `[B,S,H,W]`.
pub fn that_forward<T: Real>(y: &Var<T>, x: &Var<T>, model: &That<T>, tape: &mut MaskTape) -> Result<Var<T>> {
    check_inputs(y, x, &model.cfg)?;
    let up = upsample_lr(y, &model.cfg)?;
    let mut f = shallow_extract(y, &up, x, model)?;
    for b in &model.blocks {
        f = ptsg_forward(&f, b, tape)?;
    }
    reconstruct(&f, &up, model)
}
