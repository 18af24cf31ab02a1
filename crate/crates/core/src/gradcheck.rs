//! Finite-difference verification of every differentiable primitive and of
//! the full network.
//!
//! Each check builds `L = Σ w ⊙ f(inputs)` with random weights `w`, takes
//! the analytic gradient by back-propagation and compares it against
//! central differences of `L` in double precision. The relative error of
//! one entry is `|a − n| / max(|a|, |n|, REL_FLOOR)`.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::{MaskPolicy, MaskTape};
use crate::error::{Error, Result};
use crate::image_ops::{bicubic_resize, conv2d, crop, decimate, gaussian_blur, layer_norm_channels, pad, PadMode};
use crate::model::{that_forward, ModelConfig, That};
use crate::nn::Module;
use crate::tensor::{Tensor, Var};
use crate::training::l1_loss;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor of the relative error, so that near-zero gradients are
/// judged on an absolute scale.
pub const REL_FLOOR: f64 = 1e-3;
pub const OP_TOLERANCE: f64 = 1e-5;
pub const MODEL_TOLERANCE: f64 = 1e-3;
/// Random instances per primitive.
pub const OP_INSTANCES: usize = 20;
/// Parameter entries sampled in the end-to-end check.
pub const MODEL_SAMPLES: usize = 50;

/// Every operation name the engine records, each checked once.
pub const OP_NAMES: &[&str] = &[
    "abs",
    "add",
    "add_scalar",
    "add_trailing",
    "concat",
    "conv2d",
    "crop",
    "decimate",
    "index_select",
    "l2_normalize",
    "layer_norm",
    "matmul",
    "mean",
    "mul",
    "pad",
    "permute",
    "relu",
    "resample",
    "reshape",
    "scale",
    "scale_along",
    "shift_along",
    "sigmoid",
    "silu",
    "softmax",
    "square",
    "sub",
    "sum",
];

/// Looks up the canonical name, so callers holding a `String` can reach the
/// `'static` names the engine uses.
pub fn op_name(name: &str) -> Option<&'static str> {
    OP_NAMES.iter().copied().find(|&n| n == name)
}

#[derive(Clone, Debug, PartialEq)]
pub struct OpCheck {
    pub op: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheck {
    pub samples: usize,
    pub max_rel_err: f64,
    /// Parameter entry with the largest error.
    pub worst: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub ops: Vec<OpCheck>,
    pub model: ModelCheck,
}

impl GradcheckReport {
    /// Human-readable reasons for failure; empty when everything passes.
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .ops
            .iter()
            .filter(|c| !(c.max_rel_err < OP_TOLERANCE))
            .map(|c| format!("op {} has max rel err {:.3e}", c.op, c.max_rel_err))
            .collect();
        if !(self.model.max_rel_err < MODEL_TOLERANCE) {
            out.push(format!(
                "end-to-end max rel err {:.3e} at {}",
                self.model.max_rel_err, self.model.worst
            ));
        }
        out
    }

    pub fn passed(&self) -> bool {
        self.failures().is_empty()
    }

    /// One line per op type, the model line, then PASS or FAIL.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.ops {
            let verdict = if c.max_rel_err < OP_TOLERANCE { "ok" } else { "FAIL" };
            writeln!(
                s,
                "{:<14} instances={:<3} max_rel_err={:.3e} {verdict}",
                c.op, c.instances, c.max_rel_err
            )
            .expect("string write");
        }
        let m = &self.model;
        let verdict = if m.max_rel_err < MODEL_TOLERANCE { "ok" } else { "FAIL" };
        writeln!(
            s,
            "{:<14} samples={:<5} max_rel_err={:.3e} (worst {}) {verdict}",
            "end_to_end", m.samples, m.max_rel_err, m.worst
        )
        .expect("string write");
        let failures = self.failures();
        if failures.is_empty() {
            s.push_str("PASS\n");
        } else {
            writeln!(s, "FAIL: {}", failures.join("; ")).expect("string write");
        }
        s
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

type Build = Box<dyn Fn(&[Var<f64>]) -> Result<Var<f64>>>;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Uniform values with `|x| ≥ 0.05`, keeping kinks out of the stencil.
fn off_kink(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.05..1.0);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// A `[1, c, h, w]` map whose channels at every pixel are spread over
/// about two units, so the normalization's curvature stays moderate.
fn spread_channels(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor<f64> {
    let mut t = Tensor::zeros(&[1, c, h, w]);
    for p in 0..h * w {
        let base = rng.random_range(-1.0..1.0);
        let mut levels: Vec<f64> = (0..c).map(|i| 2.0 * i as f64 / (c - 1) as f64 - 1.0).collect();
        levels.shuffle(rng);
        for (ch, l) in levels.into_iter().enumerate() {
            t.data_mut()[ch * h * w + p] = base + l + rng.random_range(-0.2..0.2);
        }
    }
    t
}

fn dim(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> usize {
    rng.random_range(lo..=hi)
}

/// Inputs and the function under test for one random instance of `op`.
fn case(op: &str, rng: &mut ChaCha8Rng) -> (Vec<Tensor<f64>>, Build) {
    let (a, b) = (dim(rng, 1, 3), dim(rng, 2, 4));
    let (h, w) = (dim(rng, 3, 5), dim(rng, 3, 5));
    let map = [1, a, h, w];
    match op {
        "abs" => (vec![off_kink(rng, &[a, b])], Box::new(|v| Ok(v[0].abs()))),
        "relu" => (vec![off_kink(rng, &[a, b])], Box::new(|v| Ok(v[0].relu()))),
        "sigmoid" => (vec![uniform(rng, &[a, b])], Box::new(|v| Ok(v[0].sigmoid()))),
        "silu" => (vec![uniform(rng, &[a, b])], Box::new(|v| Ok(v[0].silu()))),
        "square" => (vec![uniform(rng, &[a, b])], Box::new(|v| Ok(v[0].square()))),
        "scale" => {
            let c = rng.random_range(-2.0..2.0);
            (vec![uniform(rng, &[a, b])], Box::new(move |v| Ok(v[0].scale(c))))
        }
        "add_scalar" => {
            let c = rng.random_range(-2.0..2.0);
            (vec![uniform(rng, &[a, b])], Box::new(move |v| Ok(v[0].add_scalar(c))))
        }
        "add" | "sub" | "mul" => {
            // Alternate between equal shapes and a broadcast scalar operand.
            let scalar = rng.random_bool(0.5);
            let rhs = if scalar { vec![1] } else { vec![a, b] };
            let inputs = vec![uniform(rng, &[a, b]), uniform(rng, &rhs)];
            let f: Build = match op {
                "add" => Box::new(|v| v[0].add(&v[1])),
                "sub" => Box::new(|v| v[1].sub(&v[0])),
                _ => Box::new(|v| v[0].mul(&v[1])),
            };
            (inputs, f)
        }
        "sum" => (vec![uniform(rng, &[a, b])], Box::new(|v| Ok(v[0].sum_all()))),
        "mean" => {
            let axis = rng.random_range(0..3);
            (vec![uniform(rng, &[a, b, 3])], Box::new(move |v| v[0].mean(axis)))
        }
        "reshape" => (
            vec![uniform(rng, &[a, b, 2])],
            Box::new(move |v| v[0].reshape(&[2 * b, a])),
        ),
        "permute" => {
            let mut perm = vec![0, 1, 2, 3];
            for i in (1..4).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            (
                vec![uniform(rng, &[a, b, 2, 3])],
                Box::new(move |v| v[0].permute(&perm)),
            )
        }
        "concat" => {
            let axis = rng.random_range(0..2);
            let other = if axis == 0 { [2, b] } else { [a, 2] };
            (
                vec![uniform(rng, &[a, b]), uniform(rng, &other)],
                Box::new(move |v| Var::concat(&[v[0].clone(), v[1].clone()], axis)),
            )
        }
        "index_select" => {
            let idx: Vec<usize> = (0..5).map(|_| rng.random_range(0..b)).collect();
            (vec![uniform(rng, &[b, a])], Box::new(move |v| v[0].index_select(&idx)))
        }
        "scale_along" | "shift_along" => {
            let axis = rng.random_range(0..3);
            let shape = [a, b, 2];
            let scale = op == "scale_along";
            (
                vec![uniform(rng, &shape), uniform(rng, &[shape[axis]])],
                Box::new(move |v| {
                    if scale {
                        v[0].scale_along(&v[1], axis)
                    } else {
                        v[0].shift_along(&v[1], axis)
                    }
                }),
            )
        }
        "add_trailing" => (
            vec![uniform(rng, &[a, b, 3]), uniform(rng, &[b, 3])],
            Box::new(|v| v[0].add_trailing(&v[1])),
        ),
        "softmax" => {
            let axis = rng.random_range(0..2);
            let x = uniform(rng, &[a, b]).map(|t| 3.0 * t);
            (vec![x], Box::new(move |v| v[0].softmax(axis)))
        }
        "l2_normalize" => {
            let axis = rng.random_range(0..2);
            (
                vec![uniform(rng, &[a + 1, b])],
                Box::new(move |v| v[0].l2_normalize(axis, 1e-8)),
            )
        }
        "matmul" => {
            let k = dim(rng, 1, 4);
            if rng.random_bool(0.5) {
                (
                    vec![uniform(rng, &[a, k]), uniform(rng, &[k, b])],
                    Box::new(|v| v[0].matmul(&v[1])),
                )
            } else {
                (
                    vec![uniform(rng, &[2, a, k]), uniform(rng, &[2, k, b])],
                    Box::new(|v| v[0].bmm(&v[1])),
                )
            }
        }
        "conv2d" => {
            let k = [1, 3, 5][rng.random_range(0..3)];
            let depthwise = rng.random_bool(0.5);
            let (cout, groups) = if depthwise { (a, a) } else { (b, 1) };
            let mode = if rng.random_bool(0.5) {
                PadMode::Zero
            } else {
                PadMode::Reflect
            };
            let inputs = vec![
                uniform(rng, &[1, a, 5, 5]),
                uniform(rng, &[cout, a / groups, k, k]),
                uniform(rng, &[cout]),
            ];
            (
                inputs,
                Box::new(move |v| conv2d(&v[0], &v[1], Some(&v[2]), 1, mode, groups)),
            )
        }
        "layer_norm" => (
            vec![
                spread_channels(rng, b + 1, h, w),
                uniform(rng, &[b + 1]),
                uniform(rng, &[b + 1]),
            ],
            Box::new(|v| layer_norm_channels(&v[0], &v[1], &v[2], 1e-5)),
        ),
        "pad" => {
            let p: Vec<usize> = (0..4).map(|_| rng.random_range(0..3)).collect();
            let mode = if rng.random_bool(0.5) {
                PadMode::Zero
            } else {
                PadMode::Reflect
            };
            (
                vec![uniform(rng, &map)],
                Box::new(move |v| pad(&v[0], p[0], p[1], p[2], p[3], mode)),
            )
        }
        "crop" => {
            let (t, l) = (rng.random_range(0..2), rng.random_range(0..2));
            (
                vec![uniform(rng, &map)],
                Box::new(move |v| crop(&v[0], t, l, h - 2, w - 2)),
            )
        }
        "decimate" => {
            let r = rng.random_range(2..=3);
            (vec![uniform(rng, &[1, a, 6, 6])], Box::new(move |v| decimate(&v[0], r)))
        }
        "resample" => {
            if rng.random_bool(0.5) {
                let (oh, ow) = (dim(rng, 2, 8), dim(rng, 2, 8));
                (
                    vec![uniform(rng, &map)],
                    Box::new(move |v| bicubic_resize(&v[0], oh, ow)),
                )
            } else {
                let k = dim(rng, 2, 5);
                (
                    vec![uniform(rng, &map)],
                    Box::new(move |v| gaussian_blur(&v[0], k, 1.0)),
                )
            }
        }
        other => unreachable!("no gradient case for {other}"),
    }
}

fn weighted_sum(out: &Var<f64>, weights: &Var<f64>) -> Result<f64> {
    Ok(out.mul(weights)?.sum_all().value().item())
}

/// Worst relative error of one instance over every input entry.
fn check_instance(inputs: &[Tensor<f64>], f: &Build, rng: &mut ChaCha8Rng) -> Result<f64> {
    let vars: Vec<Var<f64>> = inputs.iter().cloned().map(Var::param).collect();
    let out = f(&vars)?;
    let weights = Var::constant(uniform(rng, out.shape()));
    out.mul(&weights)?.sum_all().backward()?;
    let mut worst = 0.0f64;
    for (i, x) in inputs.iter().enumerate() {
        let g = vars[i].grad();
        for e in 0..x.numel() {
            let eval = |delta: f64| -> Result<f64> {
                let shifted: Vec<Var<f64>> = inputs
                    .iter()
                    .enumerate()
                    .map(|(j, t)| {
                        let mut t = t.clone();
                        if j == i {
                            t.data_mut()[e] += delta;
                        }
                        Var::constant(t)
                    })
                    .collect();
                weighted_sum(&f(&shifted)?, &weights)
            };
            let numeric = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
            let err = rel_err(g.data()[e], numeric);
            worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
        }
    }
    Ok(worst)
}

/// Checks every primitive on `instances` random inputs.
pub fn check_ops(seed: u64, instances: usize) -> Result<Vec<OpCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    OP_NAMES
        .iter()
        .map(|&op| {
            let mut worst = 0.0f64;
            for _ in 0..instances {
                let (inputs, f) = case(op, &mut rng);
                worst = worst.max(check_instance(&inputs, &f, &mut rng)?);
            }
            Ok(OpCheck {
                op,
                instances,
                max_rel_err: worst,
            })
        })
        .collect()
}

/// The end-to-end configuration: 16 channels, one block, two heads,
/// window 4, four bands at ×2 on an 8×8 low-resolution input.
pub fn gradcheck_model_config() -> ModelConfig {
    ModelConfig::tiny(4, 2)
}

/// L1-loss gradient of a randomized tiny network against central
/// differences over `samples` random parameter entries, with the PTSA masks
/// of the first pass replayed for every evaluation.
pub fn check_model(cfg: &ModelConfig, seed: u64, samples: usize) -> Result<ModelCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = That::<f64>::new(cfg.clone(), seed)?;
    // Move off the near-zero initialization so every path carries signal.
    model.visit_mut("", &mut |_, v| {
        let t = v.value().zip_map(&uniform(&mut rng, v.shape()), |w, n| w + 0.3 * n);
        *v = Var::param(t);
    });
    let (h, w) = (8, 8);
    let y = Var::constant(uniform(&mut rng, &[1, cfg.bands, h, w]).map(|t| 0.5 + 0.5 * t));
    let x = Var::constant(uniform(&mut rng, &[1, 1, h * cfg.scale, w * cfg.scale]).map(|t| 0.5 + 0.5 * t));
    let gt = Var::constant(uniform(&mut rng, &[1, cfg.bands, h * cfg.scale, w * cfg.scale]));

    let mut tape = MaskTape::new(MaskPolicy::KMeans);
    let loss = l1_loss(&that_forward(&y, &x, &model, &mut tape)?, &gt)?;
    loss.backward()?;
    let frozen = tape.frozen();

    let mut entries = Vec::new();
    model.visit("", &mut |name, v| entries.push((name.to_string(), v.grad())));
    let total: usize = entries.iter().map(|(_, g)| g.numel()).sum();

    let mut worst = (0.0f64, String::new());
    for _ in 0..samples {
        let mut pick = rng.random_range(0..total);
        let idx = entries.iter().position(|(_, g)| {
            let here = pick < g.numel();
            if !here {
                pick -= g.numel();
            }
            here
        });
        let idx = idx.expect("sample index within total");
        let (name, grad) = &entries[idx];
        let mut eval = |delta: f64| -> Result<f64> {
            let mut i = 0;
            model.visit_mut("", &mut |_, v| {
                if i == idx {
                    let mut t = v.value().clone();
                    t.data_mut()[pick] += delta;
                    *v = Var::param(t);
                }
                i += 1;
            });
            let out = that_forward(&y, &x, &model, &mut frozen.clone())?;
            Ok(l1_loss(&out, &gt)?.value().item())
        };
        let plus = eval(FD_STEP)?;
        let minus = eval(-2.0 * FD_STEP)?;
        eval(FD_STEP)?;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let err = rel_err(grad.data()[pick], numeric);
        let err = if err.is_nan() { f64::INFINITY } else { err };
        if err >= worst.0 {
            worst = (err, format!("{name}[{pick}]"));
        }
    }
    Ok(ModelCheck {
        samples,
        max_rel_err: worst.0,
        worst: worst.1,
    })
}

/// Full suite with the default sizes.
pub fn run_gradcheck(seed: u64) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        ops: check_ops(seed, OP_INSTANCES)?,
        model: check_model(&gradcheck_model_config(), seed, MODEL_SAMPLES)?,
    })
}

/// Error for a failed report, for callers that treat failure as fatal.
pub fn require_pass(report: &GradcheckReport) -> Result<()> {
    let failures = report.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "gradient check failed: {}",
            failures.join("; ")
        )))
    }
}
