use rayon::prelude::*;

use super::{dims4, pad, require_odd, PadMode};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// Grouped 2-D cross-correlation with "same" padding of `k / 2` on every
/// side. `groups == channels` gives a depthwise convolution.
pub fn conv2d<T: Real>(
    x: &Var<T>,
    weight: &Var<T>,
    bias: Option<&Var<T>>,
    stride: usize,
    padding: PadMode,
    groups: usize,
) -> Result<Var<T>> {
    let k = match *weight.shape() {
        [_, _, kh, kw] if kh == kw => kh,
        ref s => return Err(Error::dim(format!("conv weight must be [out,in/g,k,k], got {s:?}"))),
    };
    require_odd(k, "conv2d")?;
    let p = k / 2;
    if p == 0 {
        return conv2d_valid(x, weight, bias, stride, groups);
    }
    let padded = pad(x, p, p, p, p, padding)?;
    conv2d_valid(&padded, weight, bias, stride, groups)
}

/// Grouped cross-correlation without padding.
pub fn conv2d_valid<T: Real>(
    x: &Var<T>,
    weight: &Var<T>,
    bias: Option<&Var<T>>,
    stride: usize,
    groups: usize,
) -> Result<Var<T>> {
    let (n, cin, hp, wp) = dims4(x)?;
    let (cout, cig, k) = match *weight.shape() {
        [o, i, kh, kw] if kh == kw => (o, i, kh),
        ref s => return Err(Error::dim(format!("conv weight must be [out,in/g,k,k], got {s:?}"))),
    };
    if groups == 0 || cin % groups != 0 || cout % groups != 0 || cin / groups != cig {
        return Err(Error::dim(format!(
            "conv: {cin} input channels, {cout} outputs, weight expects {cig} per group, groups {groups}"
        )));
    }
    if stride == 0 {
        return Err(Error::contract("conv: stride must be positive"));
    }
    if let Some(b) = bias {
        if b.value().numel() != cout {
            return Err(Error::dim(format!(
                "conv bias has {} entries, need {cout}",
                b.value().numel()
            )));
        }
    }
    if hp < k || wp < k {
        return Err(Error::dim(format!("conv: {k}x{k} kernel larger than {hp}x{wp} input")));
    }
    let ho = (hp - k) / stride + 1;
    let wo = (wp - k) / stride + 1;
    let geo = Geometry {
        cin,
        hp,
        wp,
        cout,
        cig,
        k,
        s: stride,
        ho,
        wo,
        cog: cout / groups,
    };

    let xd = x.value().data();
    let wd = weight.value().data();
    let bd = bias.map(|b| b.value().data());
    let mut out = vec![T::zero(); n * cout * ho * wo];
    out.par_chunks_mut(ho * wo).enumerate().for_each(|(idx, plane)| {
        let (ni, o) = (idx / cout, idx % cout);
        if let Some(b) = bd {
            plane.fill(b[o]);
        }
        geo.forward_plane(xd, wd, ni, o, plane);
    });

    let mut parents = vec![x.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let (xc, wc) = (x.clone(), weight.clone());
    let x_shape = x.shape().to_vec();
    let w_shape = weight.shape().to_vec();
    Ok(Var::from_op(
        "conv2d",
        Tensor::from_parts(vec![n, cout, ho, wo], out),
        parents,
        Box::new(move |g, needs| {
            let gd = g.data();
            let gx = needs[0].then(|| {
                let wd = wc.value().data();
                let mut gx = vec![T::zero(); n * cin * hp * wp];
                gx.par_chunks_mut(hp * wp).enumerate().for_each(|(idx, plane)| {
                    geo.input_grad_plane(gd, wd, idx / cin, idx % cin, plane);
                });
                Tensor::from_parts(x_shape.clone(), gx)
            });
            let gw = needs[1].then(|| {
                let xd = xc.value().data();
                let mut gw = vec![T::zero(); cout * cig * k * k];
                gw.par_chunks_mut(cig * k * k).enumerate().for_each(|(o, wslice)| {
                    for ni in 0..n {
                        geo.weight_grad(gd, xd, ni, o, wslice);
                    }
                });
                Tensor::from_parts(w_shape.clone(), gw)
            });
            let mut grads = vec![gx, gw];
            if needs.len() == 3 {
                grads.push(needs[2].then(|| {
                    let mut gb = vec![T::zero(); cout];
                    for (idx, plane) in gd.chunks(ho * wo).enumerate() {
                        gb[idx % cout] += plane.iter().copied().sum::<T>();
                    }
                    Tensor::from_parts(vec![cout], gb)
                }));
            }
            grads
        }),
    ))
}

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    hp: usize,
    wp: usize,
    cout: usize,
    cig: usize,
    k: usize,
    s: usize,
    ho: usize,
    wo: usize,
    cog: usize,
}

impl Geometry {
    fn forward_plane<T: Real>(&self, xd: &[T], wd: &[T], ni: usize, o: usize, plane: &mut [T]) {
        let Geometry {
            cin,
            hp,
            wp,
            cig,
            k,
            s,
            ho,
            wo,
            cog,
            ..
        } = *self;
        let g = o / cog;
        for c in 0..cig {
            let ci = g * cig + c;
            let src = &xd[(ni * cin + ci) * hp * wp..][..hp * wp];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wd[((o * cig + c) * k + ky) * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for y in 0..ho {
                        let row = &src[(y * s + ky) * wp + kx..];
                        let dst = &mut plane[y * wo..][..wo];
                        if s == 1 {
                            for (d, &v) in dst.iter_mut().zip(&row[..wo]) {
                                *d += wv * v;
                            }
                        } else {
                            for (xo, d) in dst.iter_mut().enumerate() {
                                *d += wv * row[xo * s];
                            }
                        }
                    }
                }
            }
        }
    }

    fn input_grad_plane<T: Real>(&self, gd: &[T], wd: &[T], ni: usize, ci: usize, plane: &mut [T]) {
        let Geometry {
            wp,
            cout,
            cig,
            k,
            s,
            ho,
            wo,
            cog,
            ..
        } = *self;
        let g = ci / cig;
        let c = ci % cig;
        for o in g * cog..(g + 1) * cog {
            let go = &gd[(ni * cout + o) * ho * wo..][..ho * wo];
            for ky in 0..k {
                for kx in 0..k {
                    let wv = wd[((o * cig + c) * k + ky) * k + kx];
                    if wv == T::zero() {
                        continue;
                    }
                    for y in 0..ho {
                        let src = &go[y * wo..][..wo];
                        let base = (y * s + ky) * wp + kx;
                        if s == 1 {
                            for (d, &v) in plane[base..base + wo].iter_mut().zip(src) {
                                *d += wv * v;
                            }
                        } else {
                            for (xo, &v) in src.iter().enumerate() {
                                plane[base + xo * s] += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }

    fn weight_grad<T: Real>(&self, gd: &[T], xd: &[T], ni: usize, o: usize, wslice: &mut [T]) {
        let Geometry {
            cin,
            hp,
            wp,
            cout,
            cig,
            k,
            s,
            ho,
            wo,
            cog,
        } = *self;
        let g = o / cog;
        let go = &gd[(ni * cout + o) * ho * wo..][..ho * wo];
        for c in 0..cig {
            let ci = g * cig + c;
            let src = &xd[(ni * cin + ci) * hp * wp..][..hp * wp];
            for ky in 0..k {
                for kx in 0..k {
                    let mut acc = T::zero();
                    for y in 0..ho {
                        let grow = &go[y * wo..][..wo];
                        let row = &src[(y * s + ky) * wp + kx..];
                        if s == 1 {
                            for (&a, &b) in grow.iter().zip(&row[..wo]) {
                                acc += a * b;
                            }
                        } else {
                            for (xo, &a) in grow.iter().enumerate() {
                                acc += a * row[xo * s];
                            }
                        }
                    }
                    wslice[(c * k + ky) * k + kx] += acc;
                }
            }
        }
    }
}
