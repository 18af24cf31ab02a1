//! Run configuration and the command implementations behind the `that`
//! binary. Commands return [`Result`]; the binary maps errors onto exit
//! codes with [`exit_code`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::attention::TokenAxis;
use crate::error::{Error, Result};
use crate::gradcheck::{self, GradcheckReport};
use crate::metrics::{evaluate, MetricsReport, BAND_PSNR_CSV_HEADER, METRICS_CSV_HEADER};
use crate::model::{count_params_flops, load_checkpoint, ModelConfig, That, UpsampleStage};
use crate::tensor::corrupt_adjoint;
use crate::training::{predict, train_loop, EpochLog, TrainConfig};
use crate::wald::{
    default_blur_kernel, load_cube, make_pairs, make_synthetic_scene, normalize_crop, save_cube, wald_degrade,
    write_pgm, HyperCube, PanImage, WaldConfig, WaldPair,
};

/// Everything a command may need, merged from a config file, `--set`
/// overrides and dedicated flags.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub wald: WaldConfig,
    /// Whether `blur_kernel` / `blur_sigma` were given; otherwise they follow
    /// the scale.
    pub blur_kernel_set: bool,
    pub blur_sigma_set: bool,
    /// Source cube (HSC1). Without it a synthetic scene is generated.
    pub input: Option<PathBuf>,
    pub synthetic_size: usize,
    pub synthetic_bands: usize,
    /// Training patch side (HR pixels); 0 means the whole crop.
    pub tile: usize,
    /// Trailing tiles held out for evaluation; 0 evaluates on the training set.
    pub eval_tiles: usize,
    pub dataset: String,
    /// LR extent used for FLOP counts; 0 means `crop / scale`.
    pub flops_lr_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        Self {
            wald: WaldConfig::for_scale(model.scale),
            model,
            train: TrainConfig::default(),
            blur_kernel_set: false,
            blur_sigma_set: false,
            input: None,
            synthetic_size: 256,
            synthetic_bands: 102,
            tile: 0,
            eval_tiles: 0,
            dataset: "synthetic".into(),
            flops_lr_size: 0,
        }
    }
}

/// Every accepted key, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "bands",
    "channels",
    "blocks",
    "heads",
    "window",
    "scale",
    "use_pci",
    "use_ptsa",
    "use_mvfn",
    "upsample_stage",
    "token_axis",
    "gamma",
    "tau_init",
    "kmeans_max_iters",
    "lr0",
    "decay_every",
    "decay_factor",
    "epochs",
    "batch",
    "beta1",
    "beta2",
    "adam_eps",
    "weight_decay",
    "eval_every",
    "seed",
    "blur_kernel",
    "blur_sigma",
    "crop",
    "visible_lo_nm",
    "visible_hi_nm",
    "input",
    "synthetic_size",
    "synthetic_bands",
    "tile",
    "eval_tiles",
    "dataset",
    "flops_lr_size",
];

fn parse_num<V: std::str::FromStr>(key: &str, value: &str) -> std::result::Result<V, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse {value:?}"))
}

fn parse_bool(key: &str, value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(format!("{key}: expected true or false, got {value:?}")),
    }
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let (m, t, w) = (&mut self.model, &mut self.train, &mut self.wald);
        match key {
            "bands" => m.bands = parse_num(key, value)?,
            "channels" => m.channels = parse_num(key, value)?,
            "blocks" => m.blocks = parse_num(key, value)?,
            "heads" => m.heads = parse_num(key, value)?,
            "window" => m.window = parse_num(key, value)?,
            "scale" => m.scale = parse_num(key, value)?,
            "use_pci" => m.use_pci = parse_bool(key, value)?,
            "use_ptsa" => m.use_ptsa = parse_bool(key, value)?,
            "use_mvfn" => m.use_mvfn = parse_bool(key, value)?,
            "upsample_stage" => {
                m.upsample_stage = UpsampleStage::parse(value)
                    .ok_or_else(|| format!("{key}: expected input or output, got {value:?}"))?
            }
            "token_axis" => {
                m.token_axis = TokenAxis::parse(value)
                    .ok_or_else(|| format!("{key}: expected channel or spatial_window, got {value:?}"))?
            }
            "gamma" => m.gamma = parse_num(key, value)?,
            "tau_init" => m.tau_init = parse_num(key, value)?,
            "kmeans_max_iters" => m.kmeans_max_iters = parse_num(key, value)?,
            "lr0" => t.lr0 = parse_num(key, value)?,
            "decay_every" => t.decay_every = parse_num(key, value)?,
            "decay_factor" => t.decay_factor = parse_num(key, value)?,
            "epochs" => t.epochs = parse_num(key, value)?,
            "batch" => t.batch = parse_num(key, value)?,
            "beta1" => t.beta1 = parse_num(key, value)?,
            "beta2" => t.beta2 = parse_num(key, value)?,
            "adam_eps" => t.eps = parse_num(key, value)?,
            "weight_decay" => t.weight_decay = parse_num(key, value)?,
            "eval_every" => t.eval_every = parse_num(key, value)?,
            "seed" => t.seed = parse_num(key, value)?,
            "blur_kernel" => {
                w.blur_kernel = parse_num(key, value)?;
                self.blur_kernel_set = true;
            }
            "blur_sigma" => {
                w.blur_sigma = parse_num(key, value)?;
                self.blur_sigma_set = true;
            }
            "crop" => w.crop = parse_num(key, value)?,
            "visible_lo_nm" => w.visible_range_nm.0 = parse_num(key, value)?,
            "visible_hi_nm" => w.visible_range_nm.1 = parse_num(key, value)?,
            "input" => self.input = (!value.is_empty()).then(|| PathBuf::from(value)),
            "synthetic_size" => self.synthetic_size = parse_num(key, value)?,
            "synthetic_bands" => self.synthetic_bands = parse_num(key, value)?,
            "tile" => self.tile = parse_num(key, value)?,
            "eval_tiles" => self.eval_tiles = parse_num(key, value)?,
            "dataset" => self.dataset = value.to_string(),
            "flops_lr_size" => self.flops_lr_size = parse_num(key, value)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Builds a configuration from file text and `key=value` overrides.
    /// Every problem (syntax, unknown key, bad value, violated invariant) is
    /// collected and returned as one error.
    pub fn from_sources(file: Option<(&str, &str)>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        let mut problems = Vec::new();
        if let Some((origin, text)) = file {
            for (n, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                match line.split_once('=') {
                    Some((k, v)) => {
                        if let Err(p) = cfg.set(k.trim(), v.trim()) {
                            problems.push(format!("{origin}:{}: {p}", n + 1));
                        }
                    }
                    None => problems.push(format!("{origin}:{}: expected key = value", n + 1)),
                }
            }
        }
        for o in overrides {
            match o.split_once('=') {
                Some((k, v)) => {
                    if let Err(p) = cfg.set(k.trim(), v.trim()) {
                        problems.push(format!("--set {o}: {p}"));
                    }
                }
                None => problems.push(format!("--set {o}: expected key=value")),
            }
        }
        cfg.sync_wald();
        problems.extend(cfg.problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Reads `path` (when given) and applies the overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_sources(Some((&p.display().to_string(), &text)), overrides)
            }
            None => Self::from_sources(None, overrides),
        }
    }

    /// Propagates the model scale into the degradation settings.
    fn sync_wald(&mut self) {
        self.wald.scale = self.model.scale;
        if !self.blur_kernel_set {
            self.wald.blur_kernel = default_blur_kernel(self.model.scale);
        }
        if !self.blur_sigma_set {
            self.wald.blur_sigma = self.model.scale as f64;
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = self.model.problems();
        p.extend(self.train.problems());
        p.extend(self.wald.problems().into_iter().filter(|s| !s.starts_with("scale")));
        if self.tile != 0 && !self.tile.is_multiple_of(self.model.scale) {
            p.push(format!(
                "tile {} is not divisible by scale {}",
                self.tile, self.model.scale
            ));
        }
        if self.synthetic_size < 8 || self.synthetic_bands < 1 {
            p.push("synthetic scenes need at least 8x8 pixels and one band".into());
        }
        p
    }
}

/// Exit status for an error: 2 configuration, 4 numerical, 3 otherwise
/// (data, format, I/O, shape contracts).
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        Error::Numerical(_) | Error::DegenerateSlice { .. } => 4,
        _ => 3,
    }
}

fn shape_line(name: &str, c: &HyperCube) -> String {
    let (lo, hi) = c.value_range();
    format!(
        "{name}: {}x{}x{} range [{lo:.6}, {hi:.6}]",
        c.height(),
        c.width(),
        c.bands()
    )
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// The normalized, cropped HR cube: the configured input or a synthetic
/// scene of `synthetic_size` pixels.
pub fn source_cube(cfg: &RunConfig) -> Result<HyperCube> {
    let raw = match &cfg.input {
        Some(p) => load_cube(p)?,
        None => make_synthetic_scene(
            cfg.train.seed,
            cfg.synthetic_size,
            cfg.synthetic_size,
            cfg.synthetic_bands,
        )?,
    };
    normalize_crop(&raw, cfg.wald.crop)
}

/// `degrade`: writes `Y.hsc`, `X.hsc` and `GT.hsc` into `out`.
pub fn cmd_degrade(cfg: &RunConfig, out: &Path) -> Result<String> {
    let gt = source_cube(cfg)?;
    let (y, x) = wald_degrade(&gt, &cfg.wald)?;
    ensure_dir(out)?;
    let x_cube = x.to_cube();
    save_cube(&y, &out.join("Y.hsc"))?;
    save_cube(&x_cube, &out.join("X.hsc"))?;
    save_cube(&gt, &out.join("GT.hsc"))?;
    Ok(format!(
        "scale x{} blur {}x{} sigma {}\n{}\n{}\n{}\n",
        cfg.wald.scale,
        cfg.wald.blur_kernel,
        cfg.wald.blur_kernel,
        cfg.wald.blur_sigma,
        shape_line("Y", &y),
        shape_line("X", &x_cube),
        shape_line("GT", &gt)
    ))
}

/// Training and evaluation pairs cut from the source cube.
pub fn training_pairs(cfg: &RunConfig) -> Result<(Vec<WaldPair>, Vec<WaldPair>)> {
    let gt = source_cube(cfg)?;
    let tile = if cfg.tile == 0 { cfg.wald.crop } else { cfg.tile };
    let mut pairs = make_pairs(&gt, tile, &cfg.wald)?;
    if cfg.eval_tiles == 0 {
        return Ok((pairs, Vec::new()));
    }
    if cfg.eval_tiles >= pairs.len() {
        return Err(Error::Config(vec![format!(
            "eval_tiles = {} leaves no training tile out of {}",
            cfg.eval_tiles,
            pairs.len()
        )]));
    }
    let eval = pairs.split_off(pairs.len() - cfg.eval_tiles);
    Ok((pairs, eval))
}

/// `train`: fits a fresh model and writes the log and checkpoints to `out`.
pub fn cmd_train(cfg: &RunConfig, out: &Path, mut progress: impl FnMut(&str)) -> Result<String> {
    let (train, eval) = training_pairs(cfg)?;
    let mut model_cfg = cfg.model.clone();
    model_cfg.bands = train[0].gt.bands();
    let mut model = That::<f32>::new(model_cfg, cfg.train.seed)?;
    ensure_dir(out)?;
    progress(&format!(
        "training on {} pair(s), evaluating on {} pair(s)",
        train.len(),
        if eval.is_empty() { train.len() } else { eval.len() }
    ));
    let summary = train_loop(&mut model, &train, &eval, &cfg.train, Some(out), |e: &EpochLog| {
        let mut line = format!("epoch {:>3} lr {:.3e} loss {:.6}", e.epoch, e.lr, e.loss);
        if let Some(m) = &e.eval {
            write!(line, " psnr {:.3} ssim {:.4} sam {:.3}", m.psnr_db, m.ssim, m.sam_deg).expect("string write");
        }
        progress(&line);
    })?;
    let mut s = String::new();
    if let Some((epoch, m)) = &summary.best {
        writeln!(s, "best epoch {epoch}: psnr {:.4} dB", m.psnr_db).expect("string write");
    }
    writeln!(s, "wrote {}", out.join("train_log.csv").display()).expect("string write");
    for p in [&summary.final_checkpoint, &summary.best_checkpoint]
        .into_iter()
        .flatten()
    {
        writeln!(s, "wrote {}", p.display()).expect("string write");
    }
    Ok(s)
}

fn report_files(report: &MetricsReport, cfg: &RunConfig, wl: Option<&[f64]>, out: &Path) -> Result<String> {
    ensure_dir(out)?;
    let row = report.csv_row(&cfg.dataset, cfg.model.scale);
    write_text(&out.join("metrics.csv"), &format!("{METRICS_CSV_HEADER}\n{row}\n"))?;
    write_text(
        &out.join("band_psnr.csv"),
        &format!("{BAND_PSNR_CSV_HEADER}\n{}", report.band_csv(wl)),
    )?;
    let mut s = format!(
        "psnr {:.4} dB\nssim {:.6}\nsam {:.4} deg\nergas {:.4}\nscc {:.6}\n",
        report.psnr_db, report.ssim, report.sam_deg, report.ergas, report.scc
    );
    if !report.ergas_excluded.is_empty() {
        writeln!(
            s,
            "ergas excluded bands {:?} (zero reference mean)",
            report.ergas_excluded
        )
        .expect("string write");
    }
    if !report.scc_degenerate.is_empty() {
        writeln!(s, "scc degenerate bands {:?}", report.scc_degenerate).expect("string write");
    }
    writeln!(s, "{METRICS_CSV_HEADER}\n{row}").expect("string write");
    writeln!(s, "wrote {}", out.join("metrics.csv").display()).expect("string write");
    Ok(s)
}

/// `eval`: scores either a precomputed prediction or a checkpoint run on
/// `data/Y.hsc` + `data/X.hsc`, against `data/GT.hsc`.
pub fn cmd_eval(
    cfg: &RunConfig,
    data: &Path,
    checkpoint: Option<&Path>,
    pred: Option<&Path>,
    out: &Path,
) -> Result<String> {
    let gt = load_cube(&data.join("GT.hsc"))?;
    let fused = match (pred, checkpoint) {
        (Some(p), _) => load_cube(p)?,
        (None, Some(ck)) => {
            let model = load_checkpoint(ck)?;
            let y = load_cube(&data.join("Y.hsc"))?;
            let x = PanImage::from_cube(&load_cube(&data.join("X.hsc"))?)?;
            predict(&model, &y, &x)?
        }
        (None, None) => {
            return Err(Error::Config(vec!["eval needs --checkpoint or --pred".into()]));
        }
    };
    let report = evaluate(&fused, &gt, cfg.model.scale)?;
    report_files(&report, cfg, gt.wavelengths_nm(), out)
}

/// Bands shown as PGM previews: first, middle and last.
pub fn preview_bands(bands: usize) -> Vec<usize> {
    let mut b = vec![0, bands / 2, bands - 1];
    b.dedup();
    b
}

/// `infer`: fuses `lr` and `pan` and writes `fused.hsc` plus previews.
pub fn cmd_infer(checkpoint: &Path, lr: &Path, pan: &Path, out: &Path) -> Result<String> {
    let model = load_checkpoint(checkpoint)?;
    let y = load_cube(lr)?;
    let x = PanImage::from_cube(&load_cube(pan)?)?;
    let fused = predict(&model, &y, &x)?;
    ensure_dir(out)?;
    let path = out.join("fused.hsc");
    save_cube(&fused, &path)?;
    let mut s = format!("{}\nwrote {}\n", shape_line("fused", &fused), path.display());
    for b in preview_bands(fused.bands()) {
        let p = out.join(format!("fused_band{b:03}.pgm"));
        write_pgm(&p, fused.height(), fused.width(), fused.band(b))?;
        writeln!(s, "wrote {}", p.display()).expect("string write");
    }
    let p = out.join("pan.pgm");
    write_pgm(&p, x.height(), x.width(), x.values().data())?;
    writeln!(s, "wrote {}", p.display()).expect("string write");
    Ok(s)
}

/// `gradcheck`: the full suite, optionally with one op's adjoint corrupted.
pub fn cmd_gradcheck(seed: u64, corrupt_op: Option<&str>) -> Result<GradcheckReport> {
    let corrupt = match corrupt_op {
        Some(name) => Some(gradcheck::op_name(name).ok_or_else(|| {
            Error::Config(vec![format!(
                "unknown op {name:?}; known ops: {}",
                gradcheck::OP_NAMES.join(", ")
            )])
        })?),
        None => None,
    };
    corrupt_adjoint(corrupt);
    let report = gradcheck::run_gradcheck(seed);
    corrupt_adjoint(None);
    report
}

/// `params`: parameter count and FLOPs for the configured model.
pub fn cmd_params(cfg: &RunConfig) -> String {
    let lr = if cfg.flops_lr_size == 0 {
        cfg.wald.crop / cfg.model.scale
    } else {
        cfg.flops_lr_size
    };
    let (params, macs) = count_params_flops(&cfg.model, lr, lr);
    format!(
        "params={:.4} M flops={:.4} G\ninput: LR {lr}x{lr}, HR {hr}x{hr}, {} bands; flops count multiply-accumulates of convolutions and matrix products\n",
        params as f64 / 1e6,
        macs as f64 / 1e9,
        cfg.model.bands,
        hr = lr * cfg.model.scale,
    )
}
