//! L1 loss, Adam, step-decay schedule and the training loop.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attention::MaskTape;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, MetricsReport};
use crate::model::{save_checkpoint, that_forward, That};
use crate::nn::{zero_grad, Module};
use crate::tensor::{no_grad, Real, Tensor, Var};
use crate::wald::{HyperCube, PanImage, WaldPair};

pub const TRAIN_LOG_HEADER: &str = "epoch,lr,loss,psnr,ssim,sam,ergas,scc";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_every: usize,
    pub decay_factor: f64,
    pub epochs: usize,
    pub batch: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Evaluate (and consider a best checkpoint) every this many epochs;
    /// the last epoch is always evaluated.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 5e-4,
            decay_every: 20,
            decay_factor: 0.5,
            epochs: 50,
            batch: 2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
            seed: 0,
            eval_every: 5,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            p.push(format!("lr0 must be positive, got {}", self.lr0));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            p.push(format!("decay_factor must lie in (0, 1], got {}", self.decay_factor));
        }
        if self.decay_every < 1 {
            p.push("decay_every must be at least 1".into());
        }
        if self.batch < 1 {
            p.push("batch must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            p.push("adam betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            p.push("adam eps must be positive".into());
        }
        if !(self.weight_decay >= 0.0) {
            p.push("weight_decay must be non-negative".into());
        }
        if self.eval_every < 1 {
            p.push("eval_every must be at least 1".into());
        }
        p
    }
}

/// `lr0 · factor^⌊epoch / every⌋`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.decay_factor.powi((epoch / cfg.decay_every) as i32)
}

/// Mean absolute error; the subgradient at ties is 0.
pub fn l1_loss<T: Real>(pred: &Var<T>, target: &Var<T>) -> Result<Var<T>> {
    if pred.shape() != target.shape() {
        return Err(Error::dim(format!(
            "l1 loss: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(pred.sub(target)?.abs().mean_all())
}

/// Bias-corrected Adam with optional L2 weight decay folded into the
/// gradient. Moment buffers follow the module's visiting order.
#[derive(Clone, Debug)]
pub struct Adam<T: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(cfg: &TrainConfig) -> Self {
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update from the gradients currently stored on the
    /// parameters, then clears them.
    pub fn step<M: Module<T> + ?Sized>(&mut self, model: &mut M, lr: f64) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let (eps, wd) = (self.eps, self.weight_decay);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut i = 0;
        model.visit_mut("", &mut |_, p| {
            if ms.len() <= i {
                ms.push(Tensor::zeros(p.shape()));
                vs.push(Tensor::zeros(p.shape()));
            }
            let g = p.grad();
            let mut w = p.value().clone();
            let (m, v) = (ms[i].data_mut(), vs[i].data_mut());
            for (((wj, &gj), mj), vj) in w.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                let gj = gj.f64() + wd * wj.f64();
                let mn = b1 * mj.f64() + (1.0 - b1) * gj;
                let vn = b2 * vj.f64() + (1.0 - b2) * gj * gj;
                *mj = T::of(mn);
                *vj = T::of(vn);
                let update = lr * (mn / c1) / ((vn / c2).sqrt() + eps);
                *wj = T::of(wj.f64() - update);
            }
            *p = Var::param(w);
            i += 1;
        });
    }
}

/// Stacks cubes into `[B, S, H, W]`.
pub fn stack_cubes<T: Real>(cubes: &[&HyperCube]) -> Result<Tensor<T>> {
    let first = cubes.first().ok_or_else(|| Error::contract("empty batch"))?;
    let (s, h, w) = (first.bands(), first.height(), first.width());
    let mut data = Vec::with_capacity(cubes.len() * s * h * w);
    for c in cubes {
        if (c.bands(), c.height(), c.width()) != (s, h, w) {
            return Err(Error::dim("batch members differ in shape"));
        }
        data.extend(c.values().data().iter().map(|&v| T::of(v as f64)));
    }
    Tensor::new(&[cubes.len(), s, h, w], data)
}

pub fn stack_pans<T: Real>(pans: &[&PanImage]) -> Result<Tensor<T>> {
    let first = pans.first().ok_or_else(|| Error::contract("empty batch"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(pans.len() * h * w);
    for p in pans {
        if (p.height(), p.width()) != (h, w) {
            return Err(Error::dim("batch members differ in shape"));
        }
        data.extend(p.values().data().iter().map(|&v| T::of(v as f64)));
    }
    Tensor::new(&[pans.len(), 1, h, w], data)
}

/// Fused cube for one LR/pan pair, without recording a graph.
pub fn predict<T: Real>(model: &That<T>, lr: &HyperCube, pan: &PanImage) -> Result<HyperCube> {
    let out = no_grad(|| {
        that_forward(
            &Var::constant(lr.to_map()),
            &Var::constant(pan.to_map()),
            model,
            &mut MaskTape::default(),
        )
    })?;
    HyperCube::from_map(out.value(), lr.wavelengths_nm().map(<[f64]>::to_vec))
}

/// Scalar metrics averaged over pairs; band-wise PSNR averaged per band.
pub fn evaluate_pairs<T: Real>(model: &That<T>, pairs: &[WaldPair]) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::contract("no evaluation pairs"));
    }
    let reports = pairs
        .iter()
        .map(|p| evaluate(&predict(model, &p.lr, &p.pan)?, &p.gt, model.cfg.scale))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_reports(&reports))
}

pub fn average_reports(reports: &[MetricsReport]) -> MetricsReport {
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let bands = reports[0].psnr_per_band.len();
    MetricsReport {
        psnr_db: mean(&|r| r.psnr_db),
        ssim: mean(&|r| r.ssim),
        sam_deg: mean(&|r| r.sam_deg),
        ergas: mean(&|r| r.ergas),
        scc: mean(&|r| r.scc),
        psnr_per_band: (0..bands).map(|b| mean(&|r| r.psnr_per_band[b])).collect(),
        ergas_excluded: reports[0].ergas_excluded.clone(),
        scc_degenerate: reports[0].scc_degenerate.clone(),
    }
}

/// One line of the training log.
#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub eval: Option<MetricsReport>,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        let mut row = format!("{},{:e},{:.8}", self.epoch, self.lr, self.loss);
        match &self.eval {
            Some(m) => write!(
                row,
                ",{:.6},{:.6},{:.6},{:.6},{:.6}",
                m.psnr_db, m.ssim, m.sam_deg, m.ergas, m.scc
            ),
            None => write!(row, ",,,,,"),
        }
        .expect("string write");
        row
    }
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub log: Vec<EpochLog>,
    /// Best evaluated epoch and its metrics.
    pub best: Option<(usize, MetricsReport)>,
    pub final_checkpoint: Option<PathBuf>,
    pub best_checkpoint: Option<PathBuf>,
}

/// Names the first non-finite parameter value or gradient.
fn first_non_finite<T: Real, M: Module<T>>(model: &M) -> Option<String> {
    let mut found = None;
    model.visit("", &mut |name, v| {
        if found.is_none() {
            if !v.value().all_finite() {
                found = Some(format!("parameter {name}"));
            } else if v.has_grad() && !v.grad().all_finite() {
                found = Some(format!("gradient of {name}"));
            }
        }
    });
    found
}

/// Trains on `train` with shuffled mini-batches; evaluates on `eval` (or
/// on `train` when `eval` is empty). With `out_dir`, writes
/// `train_log.csv`, `final.ckpt` and `best.ckpt` there.
pub fn train_loop<T: Real>(
    model: &mut That<T>,
    train: &[WaldPair],
    eval: &[WaldPair],
    cfg: &TrainConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainSummary> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    if train.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let eval_set = if eval.is_empty() { train } else { eval };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(cfg);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut summary = TrainSummary {
        log: Vec::new(),
        best: None,
        final_checkpoint: None,
        best_checkpoint: None,
    };
    let mut csv = format!("{TRAIN_LOG_HEADER}\n");
    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            let pairs: Vec<&WaldPair> = chunk.iter().map(|&i| &train[i]).collect();
            let y = Var::constant(stack_cubes(&pairs.iter().map(|p| &p.lr).collect::<Vec<_>>())?);
            let x = Var::constant(stack_pans(&pairs.iter().map(|p| &p.pan).collect::<Vec<_>>())?);
            let gt = Var::constant(stack_cubes(&pairs.iter().map(|p| &p.gt).collect::<Vec<_>>())?);
            let pred = that_forward(&y, &x, model, &mut MaskTape::default())?;
            let loss = l1_loss(&pred, &gt)?;
            let lv = loss.value().item().f64();
            loss.backward()?;
            if !lv.is_finite() {
                let culprit = first_non_finite(model).unwrap_or_else(|| "the network output".into());
                return Err(Error::Numerical(format!(
                    "non-finite loss {lv} at epoch {epoch}; first non-finite tensor: {culprit}"
                )));
            }
            adam.step(model, lr);
            zero_grad(model);
            if let Some(culprit) = first_non_finite(model) {
                return Err(Error::Numerical(format!(
                    "{culprit} became non-finite at epoch {epoch}"
                )));
            }
            loss_sum += lv;
            batches += 1;
        }
        let last = epoch + 1 == cfg.epochs;
        let eval_report = if (epoch + 1) % cfg.eval_every == 0 || last {
            Some(evaluate_pairs(model, eval_set)?)
        } else {
            None
        };
        let entry = EpochLog {
            epoch,
            lr,
            loss: loss_sum / batches as f64,
            eval: eval_report,
        };
        if let Some(m) = &entry.eval {
            let better = summary.best.as_ref().is_none_or(|(_, b)| m.psnr_db > b.psnr_db);
            if better {
                summary.best = Some((epoch, m.clone()));
                if let Some(dir) = out_dir {
                    let path = dir.join("best.ckpt");
                    save_checkpoint(model, &path)?;
                    summary.best_checkpoint = Some(path);
                }
            }
        }
        csv.push_str(&entry.csv_row());
        csv.push('\n');
        on_epoch(&entry);
        summary.log.push(entry);
    }
    if let Some(dir) = out_dir {
        let path = dir.join("train_log.csv");
        std::fs::write(&path, &csv).map_err(|e| Error::io(&path, e))?;
        let path = dir.join("final.ckpt");
        save_checkpoint(model, &path)?;
        summary.final_checkpoint = Some(path);
    }
    Ok(summary)
}
