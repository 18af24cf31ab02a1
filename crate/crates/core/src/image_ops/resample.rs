use std::rc::Rc;

use super::{dims4, reflect_index, require_odd};
use crate::error::{Error, Result};
use crate::tensor::{split_axis, Real, Tensor, Var};

/// Sparse linear map along one axis: output index `j` is the weighted sum
/// of input samples `taps[j]`.
#[derive(Clone, Debug)]
pub struct Taps {
    pub in_len: usize,
    pub taps: Vec<Vec<(usize, f64)>>,
}

impl Taps {
    pub fn out_len(&self) -> usize {
        self.taps.len()
    }

    /// Box mean of width `k` with mirror-reflected borders.
    pub fn box_mean(n: usize, k: usize) -> Self {
        let half = (k / 2) as isize;
        let w = 1.0 / k as f64;
        let taps = (0..n as isize)
            .map(|i| (i - half..=i + half).map(|s| (reflect_index(s, n), w)).collect())
            .collect();
        Self { in_len: n, taps }
    }

    /// Normalized sampled Gaussian centered at `(k-1)/2`, reflect borders.
    /// For even `k` the centre falls between samples, which shifts the
    /// output by half a pixel.
    pub fn gaussian(n: usize, k: usize, sigma: f64) -> Self {
        let g = gaussian_kernel_1d(k, sigma);
        let before = ((k - 1) / 2) as isize;
        let taps = (0..n as isize)
            .map(|p| {
                g.iter()
                    .enumerate()
                    .map(|(i, &w)| (reflect_index(p - before + i as isize, n), w))
                    .collect()
            })
            .collect();
        Self { in_len: n, taps }
    }

    /// Cubic convolution (a = -0.5) with half-pixel centres and clamped
    /// edge samples.
    pub fn bicubic(n: usize, out: usize) -> Self {
        let scale = n as f64 / out as f64;
        let taps = (0..out)
            .map(|j| {
                let src = (j as f64 + 0.5) * scale - 0.5;
                let base = src.floor();
                let t = src - base;
                (-1..=2)
                    .map(|o: i64| {
                        let idx = (base as i64 + o).clamp(0, n as i64 - 1) as usize;
                        (idx, cubic_weight(t - o as f64))
                    })
                    .filter(|&(_, w)| w != 0.0)
                    .collect()
            })
            .collect();
        Self { in_len: n, taps }
    }
}

/// Cubic convolution kernel with `a = -0.5`.
pub fn cubic_weight(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        (A + 2.0) * x * x * x - (A + 3.0) * x * x + 1.0
    } else if x < 2.0 {
        A * x * x * x - 5.0 * A * x * x + 8.0 * A * x - 4.0 * A
    } else {
        0.0
    }
}

pub fn gaussian_kernel_1d(k: usize, sigma: f64) -> Vec<f64> {
    let c = (k as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..k)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Sampled `k×k` Gaussian, row-major, normalized to sum 1.
pub fn gaussian_kernel(k: usize, sigma: f64) -> Vec<f64> {
    let c = (k as f64 - 1.0) / 2.0;
    let raw: Vec<f64> = (0..k * k)
        .map(|idx| {
            let (i, j) = ((idx / k) as f64 - c, (idx % k) as f64 - c);
            (-(i * i + j * j) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

/// Applies `taps` along `axis`. The adjoint is the transposed scatter.
pub fn resample_axis<T: Real>(x: &Var<T>, axis: usize, taps: Rc<Taps>) -> Result<Var<T>> {
    let shape = x.shape().to_vec();
    if axis >= shape.len() || shape[axis] != taps.in_len {
        return Err(Error::dim(format!(
            "resample: axis {axis} of {shape:?} does not have {} samples",
            taps.in_len
        )));
    }
    let (outer, len, inner) = split_axis(&shape, axis);
    let out_len = taps.out_len();
    let weights: Rc<Vec<Vec<(usize, T)>>> = Rc::new(
        taps.taps
            .iter()
            .map(|t| t.iter().map(|&(i, w)| (i, T::of(w))).collect())
            .collect(),
    );
    let xd = x.value().data();
    let mut out = vec![T::zero(); outer * out_len * inner];
    for o in 0..outer {
        let src = &xd[o * len * inner..][..len * inner];
        let dst = &mut out[o * out_len * inner..][..out_len * inner];
        for (j, tj) in weights.iter().enumerate() {
            let drow = &mut dst[j * inner..][..inner];
            for &(i, w) in tj {
                for (d, &s) in drow.iter_mut().zip(&src[i * inner..][..inner]) {
                    *d += w * s;
                }
            }
        }
    }
    let mut out_shape = shape.clone();
    out_shape[axis] = out_len;
    Ok(Var::from_op(
        "resample",
        Tensor::from_parts(out_shape, out),
        vec![x.clone()],
        Box::new(move |g, _| {
            let gd = g.data();
            let mut gx = vec![T::zero(); outer * len * inner];
            for o in 0..outer {
                let src = &gd[o * out_len * inner..][..out_len * inner];
                let dst = &mut gx[o * len * inner..][..len * inner];
                for (j, tj) in weights.iter().enumerate() {
                    let grow = &src[j * inner..][..inner];
                    for &(i, w) in tj {
                        for (d, &s) in dst[i * inner..][..inner].iter_mut().zip(grow) {
                            *d += w * s;
                        }
                    }
                }
            }
            vec![Some(Tensor::from_parts(shape.clone(), gx))]
        }),
    ))
}

fn separable<T: Real>(x: &Var<T>, rows: Taps, cols: Taps) -> Result<Var<T>> {
    let y = resample_axis(x, 2, Rc::new(rows))?;
    resample_axis(&y, 3, Rc::new(cols))
}

pub fn bicubic_resize<T: Real>(x: &Var<T>, out_h: usize, out_w: usize) -> Result<Var<T>> {
    let (_, _, h, w) = dims4(x)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::dim("bicubic_resize: output extents must be positive"));
    }
    separable(x, Taps::bicubic(h, out_h), Taps::bicubic(w, out_w))
}

/// Per-channel `k×k` Gaussian smoothing with reflect borders.
pub fn gaussian_blur<T: Real>(x: &Var<T>, k: usize, sigma: f64) -> Result<Var<T>> {
    let (_, _, h, w) = dims4(x)?;
    if k == 0 || sigma <= 0.0 || !sigma.is_finite() {
        return Err(Error::contract(format!(
            "gaussian_blur: need k >= 1 and sigma > 0, got k={k} sigma={sigma}"
        )));
    }
    separable(x, Taps::gaussian(h, k, sigma), Taps::gaussian(w, k, sigma))
}

/// Same-size `k×k` mean filter (stride 1, reflect borders).
pub fn avg_pool_local<T: Real>(x: &Var<T>, k: usize) -> Result<Var<T>> {
    require_odd(k, "avg_pool_local")?;
    let (_, _, h, w) = dims4(x)?;
    separable(x, Taps::box_mean(h, k), Taps::box_mean(w, k))
}

/// `E[x²] − E[x]²` over each `k×k` window, clamped at zero.
pub fn local_variance<T: Real>(x: &Var<T>, k: usize) -> Result<Var<T>> {
    require_odd(k, "local_variance")?;
    let mean = avg_pool_local(x, k)?;
    let mean_sq = avg_pool_local(&x.square(), k)?;
    Ok(mean_sq.sub(&mean.square())?.relu())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cst(shape: &[usize], v: f64) -> Var<f64> {
        Var::constant(Tensor::full(shape, v))
    }

    #[test]
    fn avg_pool_examples() {
        let c = cst(&[1, 2, 5, 4], 0.3);
        let y = avg_pool_local(&c, 3).unwrap();
        assert!(y.value().max_abs_diff(c.value()) < 1e-15);

        let x = Var::constant(Tensor::from_fn(&[1, 1, 3, 3], |i| i as f64));
        assert_eq!(avg_pool_local(&x, 1).unwrap().value(), x.value());
        let y = avg_pool_local(&x, 3).unwrap();
        // centre window is the whole 3x3 ramp: mean of 0..=8
        assert!((y.value().get(&[0, 0, 1, 1]) - 4.0).abs() < 1e-12);
        assert!(matches!(avg_pool_local(&x, 2), Err(Error::Contract(_))));
    }

    #[test]
    fn local_variance_examples() {
        let c = cst(&[1, 1, 6, 6], 0.8);
        let v = local_variance(&c, 3).unwrap();
        assert!(v.value().data().iter().all(|&x: &f64| x.abs() < 1e-12));

        // window of four zeros and five ones around the centre
        let vals: [f64; 9] = [0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let x = Var::constant(Tensor::new(&[1, 1, 3, 3], vals.to_vec()).unwrap());
        let v = local_variance(&x, 3).unwrap();
        assert!((v.value().get(&[0, 0, 1, 1]) - 20.0 / 81.0).abs() < 1e-12);

        let scaled = Var::constant(x.value().map(|t| 3.0 * t));
        let vs = local_variance(&scaled, 3).unwrap();
        for (a, b) in vs.value().data().iter().zip(v.value().data()) {
            let (a, b): (f64, f64) = (*a, *b);
            assert!((a - 9.0 * b).abs() < 1e-12);
        }
        assert!(local_variance(&x, 4).is_err());
    }

    #[test]
    fn bicubic_identity_and_constants() {
        let x = Var::constant(Tensor::from_fn(&[1, 2, 5, 7], |i| (i as f64 * 0.37).cos()));
        let same = bicubic_resize(&x, 5, 7).unwrap();
        assert!(same.value().max_abs_diff(x.value()) < 1e-12);
        let c = cst(&[1, 1, 4, 5], 0.42);
        for (h, w) in [(8, 10), (3, 2), (9, 13), (1, 1)] {
            let y = bicubic_resize(&c, h, w).unwrap();
            assert!(y.value().data().iter().all(|&v| (v - 0.42).abs() < 1e-12));
        }
    }

    #[test]
    fn cubic_kernel_partition_of_unity() {
        for i in 0..50 {
            let t = i as f64 / 50.0;
            let s: f64 = (-1..=2).map(|o| cubic_weight(t - o as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_kernel_sums_to_one() {
        let k = gaussian_kernel(20, 2.0);
        assert_eq!(k.len(), 400);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-7);
        let k1 = gaussian_kernel_1d(20, 2.0);
        for i in 0..20 {
            for j in 0..20 {
                assert!((k[i * 20 + j] - k1[i] * k1[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gaussian_blur_constant_and_impulse() {
        let c = cst(&[1, 3, 12, 12], 0.6);
        let y = gaussian_blur(&c, 20, 2.0).unwrap();
        assert!(y.value().max_abs_diff(c.value()) < 1e-12);

        // Impulse far from the borders reproduces the (symmetric) kernel.
        let (n, k) = (40usize, 5usize);
        let mut img = Tensor::zeros(&[1, 1, n, n]);
        let off = img.offset(&[0, 0, 20, 20]);
        img.data_mut()[off] = 1.0;
        let y = gaussian_blur(&Var::constant(img), k, 1.0).unwrap();
        let kern = gaussian_kernel(k, 1.0);
        for i in 0..k {
            for j in 0..k {
                let got = y.value().get(&[0, 0, 18 + i, 18 + j]);
                assert!((got - kern[i * k + j]).abs() < 1e-15);
            }
        }
    }
}
