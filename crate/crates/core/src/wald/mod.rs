//! Reduced-resolution pair synthesis and cube files.

mod io;
mod scene;

pub use io::{load_cube, read_cube, save_cube, write_cube, write_pgm};
pub use scene::{make_synthetic_scene, SCENE_MATERIALS};

use crate::error::{Error, Result};
use crate::image_ops::{decimate, gaussian_blur};
use crate::tensor::{Real, Tensor, Var};

/// `H×W×S` reflectance cube, stored band-major as `[S, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperCube {
    values: Tensor<f32>,
    wavelengths_nm: Option<Vec<f64>>,
}

impl HyperCube {
    /// `values` in band-major order (`[S, H, W]`).
    pub fn new(
        height: usize,
        width: usize,
        bands: usize,
        values: Vec<f32>,
        wavelengths_nm: Option<Vec<f64>>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::dim(format!(
                "cube extents must be positive, got {height}x{width}x{bands}"
            )));
        }
        let values = Tensor::new(&[bands, height, width], values)?;
        Self::from_tensor(values, wavelengths_nm)
    }

    pub fn from_tensor(values: Tensor<f32>, wavelengths_nm: Option<Vec<f64>>) -> Result<Self> {
        if values.rank() != 3 {
            return Err(Error::dim(format!(
                "cube tensor must be [S,H,W], got {:?}",
                values.shape()
            )));
        }
        if let Some(wl) = &wavelengths_nm {
            if wl.len() != values.shape()[0] {
                return Err(Error::dim(format!(
                    "{} wavelengths for {} bands",
                    wl.len(),
                    values.shape()[0]
                )));
            }
            if wl.windows(2).any(|p| !(p[1] > p[0])) {
                return Err(Error::contract("wavelengths must be strictly increasing"));
            }
        }
        Ok(Self { values, wavelengths_nm })
    }

    /// Cube from a `[1, S, H, W]` map.
    pub fn from_map<T: Real>(map: &Tensor<T>, wavelengths_nm: Option<Vec<f64>>) -> Result<Self> {
        match *map.shape() {
            [1, s, h, w] => Self::from_tensor(map.cast::<f32>().reshaped(&[s, h, w])?, wavelengths_nm),
            ref s => Err(Error::dim(format!("expected a [1,S,H,W] map, got {s:?}"))),
        }
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn bands(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn wavelengths_nm(&self) -> Option<&[f64]> {
        self.wavelengths_nm.as_deref()
    }

    pub fn values(&self) -> &Tensor<f32> {
        &self.values
    }

    pub fn get(&self, y: usize, x: usize, band: usize) -> f32 {
        self.values.data()[(band * self.height() + y) * self.width() + x]
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.height() * self.width();
        &self.values.data()[b * n..][..n]
    }

    /// `[1, S, H, W]` tensor in the requested precision.
    pub fn to_map<T: Real>(&self) -> Tensor<T> {
        self.values
            .cast::<T>()
            .reshaped(&[1, self.bands(), self.height(), self.width()])
            .expect("same size")
    }

    pub fn value_range(&self) -> (f32, f32) {
        self.values
            .data()
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Single-band `H×W` image.
#[derive(Clone, Debug, PartialEq)]
pub struct PanImage {
    values: Tensor<f32>,
}

impl PanImage {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self> {
        Ok(Self {
            values: Tensor::new(&[height, width], values)?,
        })
    }

    pub fn height(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn values(&self) -> &Tensor<f32> {
        &self.values
    }

    /// `[1, 1, H, W]` tensor.
    pub fn to_map<T: Real>(&self) -> Tensor<T> {
        self.values
            .cast::<T>()
            .reshaped(&[1, 1, self.height(), self.width()])
            .expect("same size")
    }

    /// The image as a one-band cube, e.g. for saving.
    pub fn to_cube(&self) -> HyperCube {
        HyperCube::from_tensor(
            self.values
                .clone()
                .reshaped(&[1, self.height(), self.width()])
                .expect("same size"),
            None,
        )
        .expect("valid extents")
    }

    pub fn from_cube(cube: &HyperCube) -> Result<Self> {
        if cube.bands() != 1 {
            return Err(Error::dim(format!("pan image needs 1 band, got {}", cube.bands())));
        }
        Self::new(cube.height(), cube.width(), cube.band(0).to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaldConfig {
    pub scale: usize,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    pub crop: usize,
    pub visible_range_nm: (f64, f64),
}

impl WaldConfig {
    /// Defaults for a scale: kernel 20 for ×2/×4, 4 for ×8, sigma = r.
    pub fn for_scale(scale: usize) -> Self {
        Self {
            scale,
            blur_kernel: default_blur_kernel(scale),
            blur_sigma: scale as f64,
            crop: 256,
            visible_range_nm: (430.0, 700.0),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if ![2, 4, 8].contains(&self.scale) {
            p.push(format!("scale must be 2, 4 or 8, got {}", self.scale));
        } else if !self.crop.is_multiple_of(self.scale) {
            p.push(format!("crop {} is not divisible by scale {}", self.crop, self.scale));
        }
        if self.blur_kernel < 1 {
            p.push("blur_kernel must be at least 1".into());
        }
        if !(self.blur_sigma > 0.0 && self.blur_sigma.is_finite()) {
            p.push(format!("blur_sigma must be positive, got {}", self.blur_sigma));
        }
        if self.crop < 1 {
            p.push("crop must be positive".into());
        }
        if !(self.visible_range_nm.0 <= self.visible_range_nm.1) {
            p.push("visible range must have lo <= hi".into());
        }
        p
    }
}

pub fn default_blur_kernel(scale: usize) -> usize {
    if scale == 8 {
        4
    } else {
        20
    }
}

/// Global min-max normalization to `[0, 1]` followed by a central
/// `crop×crop` window. A constant cube maps to zeros.
pub fn normalize_crop(cube: &HyperCube, crop: usize) -> Result<HyperCube> {
    let (h, w) = (cube.height(), cube.width());
    if h < crop || w < crop || crop == 0 {
        return Err(Error::dim(format!("cannot crop {crop}x{crop} from a {h}x{w} cube")));
    }
    let (lo, hi) = cube.value_range();
    let (lo, span) = (lo as f64, hi as f64 - lo as f64);
    let (top, left) = ((h - crop) / 2, (w - crop) / 2);
    let s = cube.bands();
    let mut out = Vec::with_capacity(s * crop * crop);
    for b in 0..s {
        let band = cube.band(b);
        for y in top..top + crop {
            out.extend(band[y * w + left..][..crop].iter().map(|&v| {
                if span > 0.0 {
                    ((v as f64 - lo) / span) as f32
                } else {
                    0.0
                }
            }));
        }
    }
    HyperCube::new(crop, crop, s, out, cube.wavelengths_nm.clone())
}

/// Mean of the bands inside `visible_range_nm`, or of the first `⌈S/2⌉`
/// bands when wavelengths are unknown.
pub fn synth_pan(cube: &HyperCube, visible_range_nm: (f64, f64)) -> Result<PanImage> {
    let chosen: Vec<usize> = match cube.wavelengths_nm() {
        Some(wl) => (0..cube.bands())
            .filter(|&b| (visible_range_nm.0..=visible_range_nm.1).contains(&wl[b]))
            .collect(),
        None => (0..cube.bands().div_ceil(2)).collect(),
    };
    if chosen.is_empty() {
        return Err(Error::EmptySelection(format!(
            "no band lies within {}-{} nm",
            visible_range_nm.0, visible_range_nm.1
        )));
    }
    let n = cube.height() * cube.width();
    let mut acc = vec![0.0f64; n];
    for &b in &chosen {
        for (a, &v) in acc.iter_mut().zip(cube.band(b)) {
            *a += v as f64;
        }
    }
    let k = chosen.len() as f64;
    PanImage::new(
        cube.height(),
        cube.width(),
        acc.into_iter().map(|v| (v / k) as f32).collect(),
    )
}

/// `Y = decimate(blur(hr), r)` and `X = synth_pan(hr)`.
pub fn wald_degrade(hr: &HyperCube, cfg: &WaldConfig) -> Result<(HyperCube, PanImage)> {
    let problems: Vec<String> = cfg.problems().into_iter().filter(|p| !p.starts_with("crop")).collect();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let (h, w) = (hr.height(), hr.width());
    if h % cfg.scale != 0 || w % cfg.scale != 0 {
        return Err(Error::dim(format!(
            "{h}x{w} cube is not divisible by scale {}",
            cfg.scale
        )));
    }
    let map = Var::constant(hr.to_map::<f64>());
    let blurred = gaussian_blur(&map, cfg.blur_kernel, cfg.blur_sigma)?;
    let y = decimate(&blurred, cfg.scale)?;
    let y = HyperCube::from_map(y.value(), hr.wavelengths_nm.clone())?;
    Ok((y, synth_pan(hr, cfg.visible_range_nm)?))
}

/// A reduced-resolution training or evaluation example.
#[derive(Clone, Debug)]
pub struct WaldPair {
    pub lr: HyperCube,
    pub pan: PanImage,
    pub gt: HyperCube,
}

/// Non-overlapping `tile×tile` windows of a cube in row-major order.
pub fn tiles(cube: &HyperCube, tile: usize) -> Result<Vec<HyperCube>> {
    let (h, w, s) = (cube.height(), cube.width(), cube.bands());
    if tile == 0 || tile > h || tile > w {
        return Err(Error::dim(format!("tile {tile} does not fit a {h}x{w} cube")));
    }
    let mut out = Vec::new();
    for ty in 0..h / tile {
        for tx in 0..w / tile {
            let mut v = Vec::with_capacity(s * tile * tile);
            for b in 0..s {
                let band = cube.band(b);
                for y in ty * tile..(ty + 1) * tile {
                    v.extend_from_slice(&band[y * w + tx * tile..][..tile]);
                }
            }
            out.push(HyperCube::new(tile, tile, s, v, cube.wavelengths_nm.clone())?);
        }
    }
    Ok(out)
}

/// Degrades the whole cube once, then cuts aligned `tile×tile` ground
/// truth windows with their `tile/r` LR and `tile` pan counterparts.
pub fn make_pairs(hr: &HyperCube, tile: usize, cfg: &WaldConfig) -> Result<Vec<WaldPair>> {
    if !tile.is_multiple_of(cfg.scale) {
        return Err(Error::dim(format!(
            "tile {tile} is not divisible by scale {}",
            cfg.scale
        )));
    }
    let (lr, pan) = wald_degrade(hr, cfg)?;
    let gts = tiles(hr, tile)?;
    let lrs = tiles(&lr, tile / cfg.scale)?;
    let pans = tiles(&pan.to_cube(), tile)?;
    gts.into_iter()
        .zip(lrs)
        .zip(pans)
        .map(|((gt, lr), pan)| {
            Ok(WaldPair {
                lr,
                pan: PanImage::from_cube(&pan)?,
                gt,
            })
        })
        .collect()
}
