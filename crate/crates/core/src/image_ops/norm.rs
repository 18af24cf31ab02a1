use super::dims4;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// Layer normalization over the channel axis at every pixel, followed by a
/// per-channel affine map.
pub fn layer_norm_channels<T: Real>(x: &Var<T>, gamma: &Var<T>, beta: &Var<T>, eps: T) -> Result<Var<T>> {
    let (n, c, h, w) = dims4(x)?;
    if gamma.value().numel() != c || beta.value().numel() != c {
        return Err(Error::dim(format!("layer norm affine must have {c} entries")));
    }
    let hw = h * w;
    let xd = x.value().data();
    let gd = gamma.value().data();
    let bd = beta.value().data();
    let inv_c = T::one() / T::of(c as f64);
    let mut xhat = vec![T::zero(); xd.len()];
    let mut inv_std = vec![T::zero(); n * hw];
    let mut out = vec![T::zero(); xd.len()];
    for ni in 0..n {
        let base = ni * c * hw;
        for p in 0..hw {
            let at = |ch: usize| base + ch * hw + p;
            let mean = (0..c).map(|ch| xd[at(ch)]).sum::<T>() * inv_c;
            let var = (0..c)
                .map(|ch| {
                    let d = xd[at(ch)] - mean;
                    d * d
                })
                .sum::<T>()
                * inv_c;
            let is = T::one() / (var + eps).sqrt();
            inv_std[ni * hw + p] = is;
            for ch in 0..c {
                let xh = (xd[at(ch)] - mean) * is;
                xhat[at(ch)] = xh;
                out[at(ch)] = gd[ch] * xh + bd[ch];
            }
        }
    }
    let shape = x.shape().to_vec();
    let gc = gamma.clone();
    Ok(Var::from_op(
        "layer_norm",
        Tensor::from_parts(shape.clone(), out),
        vec![x.clone(), gamma.clone(), beta.clone()],
        Box::new(move |g, needs| {
            let god = g.data();
            let gam = gc.value().data();
            let gx = needs[0].then(|| {
                let mut gx = vec![T::zero(); god.len()];
                for ni in 0..n {
                    let base = ni * c * hw;
                    for p in 0..hw {
                        let at = |ch: usize| base + ch * hw + p;
                        let mut s1 = T::zero();
                        let mut s2 = T::zero();
                        for ch in 0..c {
                            let dxh = god[at(ch)] * gam[ch];
                            s1 += dxh;
                            s2 += dxh * xhat[at(ch)];
                        }
                        let is = inv_std[ni * hw + p];
                        for ch in 0..c {
                            let dxh = god[at(ch)] * gam[ch];
                            gx[at(ch)] = is * (dxh - inv_c * s1 - xhat[at(ch)] * inv_c * s2);
                        }
                    }
                }
                Tensor::from_parts(shape.clone(), gx)
            });
            let gg = needs[1].then(|| {
                let mut acc = vec![T::zero(); c];
                for (i, (&gv, &xh)) in god.iter().zip(&xhat).enumerate() {
                    acc[(i / hw) % c] += gv * xh;
                }
                Tensor::from_parts(vec![c], acc)
            });
            let gb = needs[2].then(|| {
                let mut acc = vec![T::zero(); c];
                for (i, &gv) in god.iter().enumerate() {
                    acc[(i / hw) % c] += gv;
                }
                Tensor::from_parts(vec![c], acc)
            });
            vec![gx, gg, gb]
        }),
    ))
}
