use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::HyperCube;
use crate::error::{Error, Result};

/// Number of endmember signatures mixed into a synthetic scene.
pub const SCENE_MATERIALS: usize = 5;

const NOISE_STD: f64 = 0.002;

/// Deterministic stand-in scene: smooth spectral signatures mixed by
/// abundance maps that combine low-frequency fields with sharp Voronoi
/// material regions. Wavelengths span 430–860 nm.
pub fn make_synthetic_scene(seed: u64, height: usize, width: usize, bands: usize) -> Result<HyperCube> {
    if height < 8 || width < 8 || bands == 0 {
        return Err(Error::dim(format!(
            "synthetic scene needs at least 8x8 pixels and one band, got {height}x{width}x{bands}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wavelengths: Vec<f64> = (0..bands)
        .map(|b| {
            if bands == 1 {
                430.0
            } else {
                430.0 + 430.0 * b as f64 / (bands - 1) as f64
            }
        })
        .collect();

    let signatures: Vec<Vec<f64>> = (0..SCENE_MATERIALS)
        .map(|_| {
            let base = rng.random_range(0.1..0.35);
            let bumps: Vec<(f64, f64, f64)> = (0..2)
                .map(|_| {
                    (
                        rng.random_range(0.1..0.45),
                        rng.random_range(430.0..860.0),
                        rng.random_range(30.0..150.0),
                    )
                })
                .collect();
            wavelengths
                .iter()
                .map(|&l| {
                    let v: f64 = base
                        + bumps
                            .iter()
                            .map(|&(a, c, s)| a * (-(l - c) * (l - c) / (2.0 * s * s)).exp())
                            .sum::<f64>();
                    v.min(0.95)
                })
                .collect()
        })
        .collect();

    // Low-frequency logit fields: a few plane waves per material.
    let waves: Vec<Vec<(f64, f64, f64, f64)>> = (0..SCENE_MATERIALS)
        .map(|_| {
            (0..3)
                .map(|_| {
                    (
                        rng.random_range(0.3..1.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(-3.0..3.0),
                        rng.random_range(0.0..std::f64::consts::TAU),
                    )
                })
                .collect()
        })
        .collect();
    let cells: Vec<(f64, f64, usize)> = (0..2 * SCENE_MATERIALS)
        .map(|i| {
            (
                rng.random_range(0.0..height as f64),
                rng.random_range(0.0..width as f64),
                i % SCENE_MATERIALS,
            )
        })
        .collect();

    let noise = Normal::new(0.0, NOISE_STD).expect("positive std");
    let n = height * width;
    let mut values = vec![0.0f32; bands * n];
    for y in 0..height {
        for x in 0..width {
            let (fy, fx) = (y as f64 / height as f64, x as f64 / width as f64);
            let label = cells
                .iter()
                .min_by(|a, b| {
                    let da = (a.0 - y as f64).powi(2) + (a.1 - x as f64).powi(2);
                    let db = (b.0 - y as f64).powi(2) + (b.1 - x as f64).powi(2);
                    da.total_cmp(&db)
                })
                .expect("cells")
                .2;
            let logits: Vec<f64> = (0..SCENE_MATERIALS)
                .map(|k| {
                    let field: f64 = waves[k]
                        .iter()
                        .map(|&(a, ky, kx, ph)| a * (std::f64::consts::TAU * (ky * fy + kx * fx) + ph).sin())
                        .sum();
                    1.5 * field + if k == label { 3.0 } else { 0.0 }
                })
                .collect();
            let mx = logits.iter().copied().fold(f64::MIN, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
            let z: f64 = e.iter().sum();
            for b in 0..bands {
                let v: f64 = (0..SCENE_MATERIALS).map(|k| e[k] / z * signatures[k][b]).sum();
                let v = v + noise.sample(&mut rng);
                values[b * n + y * width + x] = v.clamp(0.0, 1.0) as f32;
            }
        }
    }
    HyperCube::new(height, width, bands, values, Some(wavelengths))
}
