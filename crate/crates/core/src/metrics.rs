//! Full-reference fusion quality metrics, computed in double precision.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image_ops::gaussian_kernel_1d;
use crate::wald::HyperCube;

pub const PSNR_CAP_DB: f64 = 100.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SAM_MIN_NORM: f64 = 1e-8;
const ERGAS_MIN_MEAN: f64 = 1e-8;

pub const METRICS_CSV_HEADER: &str = "dataset,scale,psnr,ssim,sam,ergas,scc";
pub const BAND_PSNR_CSV_HEADER: &str = "band,wavelength_nm,psnr";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub sam_deg: f64,
    pub ergas: f64,
    pub scc: f64,
    pub psnr_per_band: Vec<f64>,
    /// Bands left out of ERGAS because their reference mean is ~0.
    pub ergas_excluded: Vec<usize>,
    /// Bands whose filtered images have zero variance; they count as 0 in SCC.
    pub scc_degenerate: Vec<usize>,
}

impl MetricsReport {
    pub fn csv_row(&self, dataset: &str, scale: usize) -> String {
        format!(
            "{dataset},{scale},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.psnr_db, self.ssim, self.sam_deg, self.ergas, self.scc
        )
    }

    /// Band-wise PSNR table with header.
    pub fn band_csv(&self, wavelengths_nm: Option<&[f64]>) -> String {
        let mut out = format!("{BAND_PSNR_CSV_HEADER}\n");
        for (b, p) in self.psnr_per_band.iter().enumerate() {
            let wl = wavelengths_nm.map(|w| format!("{:.3}", w[b])).unwrap_or_default();
            writeln!(out, "{b},{wl},{p:.6}").expect("string write");
        }
        out
    }
}

fn check_shapes(pred: &HyperCube, reference: &HyperCube) -> Result<()> {
    if pred.values().shape() != reference.values().shape() {
        return Err(Error::dim(format!(
            "prediction {}x{}x{} vs reference {}x{}x{}",
            pred.height(),
            pred.width(),
            pred.bands(),
            reference.height(),
            reference.width(),
            reference.bands()
        )));
    }
    Ok(())
}

fn bands_f64(c: &HyperCube) -> Vec<Vec<f64>> {
    (0..c.bands())
        .map(|b| c.band(b).iter().map(|&v| v as f64).collect())
        .collect()
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

fn psnr_of_mse(m: f64) -> f64 {
    if m == 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB)
    }
}

/// Band-mean PSNR (peak 1) and the per-band values.
pub fn psnr(pred: &HyperCube, reference: &HyperCube) -> Result<(f64, Vec<f64>)> {
    check_shapes(pred, reference)?;
    let (p, r) = (bands_f64(pred), bands_f64(reference));
    let per: Vec<f64> = p.iter().zip(&r).map(|(a, b)| psnr_of_mse(mse(a, b))).collect();
    Ok((per.iter().sum::<f64>() / per.len() as f64, per))
}

/// Valid-region separable filtering of an `h×w` plane with a 1-D kernel.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for j in 0..ow {
            rows[y * ow + j] = k.iter().enumerate().map(|(t, &kv)| kv * x[y * w + j + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = k.iter().enumerate().map(|(t, &kv)| kv * rows[(i + t) * ow + j]).sum();
        }
    }
    out
}

/// Mean SSIM with an 11×11 Gaussian window (σ 1.5) over valid positions,
/// averaged over bands.
pub fn ssim(pred: &HyperCube, reference: &HyperCube) -> Result<f64> {
    check_shapes(pred, reference)?;
    let (h, w) = (pred.height(), pred.width());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::dim(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let k = gaussian_kernel_1d(SSIM_WINDOW, SSIM_SIGMA);
    let (c1, c2) = (SSIM_K1 * SSIM_K1, SSIM_K2 * SSIM_K2);
    let (p, r) = (bands_f64(pred), bands_f64(reference));
    let mut total = 0.0;
    for (x, y) in p.iter().zip(&r) {
        let f = |v: &[f64]| filter_valid(v, h, w, &k);
        let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(s, t)| s * t).collect::<Vec<f64>>();
        let (mx, my) = (f(x), f(y));
        let (exx, eyy, exy) = (f(&prod(x, x)), f(&prod(y, y)), f(&prod(x, y)));
        let n = mx.len();
        let s: f64 = (0..n)
            .map(|i| {
                let (a, b) = (mx[i], my[i]);
                let (vx, vy, cxy) = (exx[i] - a * a, eyy[i] - b * b, exy[i] - a * b);
                ((2.0 * a * b + c1) * (2.0 * cxy + c2)) / ((a * a + b * b + c1) * (vx + vy + c2))
            })
            .sum();
        total += s / n as f64;
    }
    Ok(total / p.len() as f64)
}

/// Mean per-pixel spectral angle in degrees. Pixels where either spectrum
/// has norm below 1e-8 contribute 0.
///
/// The angle is evaluated as `2·atan2(‖p̂ − q̂‖, ‖p̂ + q̂‖)` on unit spectra,
/// which equals `arccos(⟨p̂, q̂⟩)` but stays accurate near 0° and 180°.
pub fn sam(pred: &HyperCube, reference: &HyperCube) -> Result<f64> {
    check_shapes(pred, reference)?;
    let n = pred.height() * pred.width();
    let (p, r) = (pred.values().data(), reference.values().data());
    let s = pred.bands();
    let mut total = 0.0;
    let mut a = vec![0.0; s];
    let mut c = vec![0.0; s];
    for px in 0..n {
        for b in 0..s {
            a[b] = p[b * n + px] as f64;
            c[b] = r[b * n + px] as f64;
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (np, nr) = (norm(&a), norm(&c));
        if np >= SAM_MIN_NORM && nr >= SAM_MIN_NORM {
            let (mut diff, mut sum) = (0.0, 0.0);
            for (x, y) in a.iter().zip(&c) {
                let (u, v) = (x / np, y / nr);
                diff += (u - v) * (u - v);
                sum += (u + v) * (u + v);
            }
            total += 2.0 * diff.sqrt().atan2(sum.sqrt()).to_degrees();
        }
    }
    Ok(total / n as f64)
}

/// `100/r · sqrt(mean_b RMSE_b² / μ_b²)` over bands whose reference mean
/// is at least 1e-8 in magnitude; the skipped bands are returned.
pub fn ergas(pred: &HyperCube, reference: &HyperCube, scale: usize) -> Result<(f64, Vec<usize>)> {
    check_shapes(pred, reference)?;
    if scale == 0 {
        return Err(Error::contract("ergas scale must be positive"));
    }
    let (p, r) = (bands_f64(pred), bands_f64(reference));
    let mut excluded = Vec::new();
    let mut terms = Vec::new();
    for (b, (x, y)) in p.iter().zip(&r).enumerate() {
        let mu = y.iter().sum::<f64>() / y.len() as f64;
        if mu.abs() < ERGAS_MIN_MEAN {
            excluded.push(b);
        } else {
            terms.push(mse(x, y) / (mu * mu));
        }
    }
    if terms.is_empty() {
        return Err(Error::DegenerateReference("every reference band has zero mean".into()));
    }
    let mean = terms.iter().sum::<f64>() / terms.len() as f64;
    Ok((100.0 / scale as f64 * mean.sqrt(), excluded))
}

/// 3×3 Laplacian response on the `(h−2)×(w−2)` interior.
fn laplacian_interior(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((h - 2) * (w - 2));
    for i in 1..h - 1 {
        for j in 1..w - 1 {
            let mut s = 9.0 * x[i * w + j];
            for di in 0..3 {
                for dj in 0..3 {
                    s -= x[(i + di - 1) * w + j + dj - 1];
                }
            }
            out.push(s);
        }
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean per-band correlation of Laplacian-filtered images; bands with a
/// flat filtered image count as 0 and are returned.
pub fn scc(pred: &HyperCube, reference: &HyperCube) -> Result<(f64, Vec<usize>)> {
    check_shapes(pred, reference)?;
    let (h, w) = (pred.height(), pred.width());
    if h < 3 || w < 3 {
        return Err(Error::dim(format!("scc needs at least 3x3 pixels, got {h}x{w}")));
    }
    let (p, r) = (bands_f64(pred), bands_f64(reference));
    let mut degenerate = Vec::new();
    let mut total = 0.0;
    for (b, (x, y)) in p.iter().zip(&r).enumerate() {
        match pearson(&laplacian_interior(x, h, w), &laplacian_interior(y, h, w)) {
            Some(c) => total += c,
            None => degenerate.push(b),
        }
    }
    Ok((total / p.len() as f64, degenerate))
}

pub fn evaluate(pred: &HyperCube, reference: &HyperCube, scale: usize) -> Result<MetricsReport> {
    let (psnr_db, psnr_per_band) = psnr(pred, reference)?;
    let (ergas, ergas_excluded) = ergas(pred, reference, scale)?;
    let (scc, scc_degenerate) = scc(pred, reference)?;
    Ok(MetricsReport {
        psnr_db,
        ssim: ssim(pred, reference)?,
        sam_deg: sam(pred, reference)?,
        ergas,
        scc,
        psnr_per_band,
        ergas_excluded,
        scc_degenerate,
    })
}
