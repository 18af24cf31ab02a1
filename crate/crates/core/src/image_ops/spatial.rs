use std::rc::Rc;

use super::{dims4, reflect_index, PadMode};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// `y[.., i, j] = x[.., rows[i], cols[j]]`, or zero where either map is
/// `None`. The adjoint scatter-adds. Padding, cropping and decimation are
/// all instances of this gather.
pub fn spatial_gather<T: Real>(
    x: &Var<T>,
    rows: Vec<Option<usize>>,
    cols: Vec<Option<usize>>,
    name: &'static str,
) -> Result<Var<T>> {
    let (n, c, h, w) = dims4(x)?;
    if rows.iter().flatten().any(|&r| r >= h) || cols.iter().flatten().any(|&q| q >= w) {
        return Err(Error::contract(format!("{name}: gather index outside {h}x{w}")));
    }
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::dim(format!("{name}: empty output")));
    }
    let (ho, wo) = (rows.len(), cols.len());
    let xd = x.value().data();
    let mut out = vec![T::zero(); n * c * ho * wo];
    for (src, dst) in xd.chunks(h * w).zip(out.chunks_mut(ho * wo)) {
        for (i, r) in rows.iter().enumerate() {
            let Some(r) = r else { continue };
            let srow = &src[r * w..][..w];
            for (d, q) in dst[i * wo..][..wo].iter_mut().zip(&cols) {
                if let Some(q) = q {
                    *d = srow[*q];
                }
            }
        }
    }
    let (rows, cols) = (Rc::new(rows), Rc::new(cols));
    let x_shape = x.shape().to_vec();
    Ok(Var::from_op(
        name,
        Tensor::from_parts(vec![n, c, ho, wo], out),
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut gx = vec![T::zero(); n * c * h * w];
            for (src, dst) in g.data().chunks(ho * wo).zip(gx.chunks_mut(h * w)) {
                for (i, r) in rows.iter().enumerate() {
                    let Some(r) = r else { continue };
                    for (&v, q) in src[i * wo..][..wo].iter().zip(cols.iter()) {
                        if let Some(q) = q {
                            dst[r * w + q] += v;
                        }
                    }
                }
            }
            vec![Some(Tensor::from_parts(x_shape.clone(), gx))]
        }),
    ))
}

fn pad_map(n: usize, before: usize, after: usize, mode: PadMode) -> Vec<Option<usize>> {
    (0..n + before + after)
        .map(|i| {
            let src = i as isize - before as isize;
            if (0..n as isize).contains(&src) {
                Some(src as usize)
            } else {
                match mode {
                    PadMode::Zero => None,
                    PadMode::Reflect => Some(reflect_index(src, n)),
                }
            }
        })
        .collect()
}

pub fn pad<T: Real>(x: &Var<T>, top: usize, bottom: usize, left: usize, right: usize, mode: PadMode) -> Result<Var<T>> {
    let (_, _, h, w) = dims4(x)?;
    spatial_gather(x, pad_map(h, top, bottom, mode), pad_map(w, left, right, mode), "pad")
}

pub fn crop<T: Real>(x: &Var<T>, top: usize, left: usize, h: usize, w: usize) -> Result<Var<T>> {
    let (_, _, hi, wi) = dims4(x)?;
    if top + h > hi || left + w > wi {
        return Err(Error::dim(format!("crop {h}x{w} at ({top},{left}) exceeds {hi}x{wi}")));
    }
    spatial_gather(
        x,
        (top..top + h).map(Some).collect(),
        (left..left + w).map(Some).collect(),
        "crop",
    )
}

/// Keeps samples at indices `0, r, 2r, …` on both spatial axes.
pub fn decimate<T: Real>(x: &Var<T>, r: usize) -> Result<Var<T>> {
    let (_, _, h, w) = dims4(x)?;
    if r == 0 || h % r != 0 || w % r != 0 {
        return Err(Error::dim(format!("decimate: {h}x{w} not divisible by {r}")));
    }
    spatial_gather(
        x,
        (0..h / r).map(|i| Some(i * r)).collect(),
        (0..w / r).map(|j| Some(j * r)).collect(),
        "decimate",
    )
}

/// Depth-to-space: `[b, c·r², h, w] -> [b, c, h·r, w·r]`.
pub fn pixel_shuffle<T: Real>(x: &Var<T>, r: usize) -> Result<Var<T>> {
    let (b, cr, h, w) = dims4(x)?;
    if r == 0 || cr % (r * r) != 0 {
        return Err(Error::dim(format!(
            "pixel_shuffle: {cr} channels not divisible by {r}²"
        )));
    }
    let c = cr / (r * r);
    x.reshape(&[b, c, r, r, h, w])?
        .permute(&[0, 1, 4, 2, 5, 3])?
        .reshape(&[b, c, h * r, w * r])
}

/// Space-to-depth, the exact inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle<T: Real>(x: &Var<T>, r: usize) -> Result<Var<T>> {
    let (b, c, hr, wr) = dims4(x)?;
    if r == 0 || hr % r != 0 || wr % r != 0 {
        return Err(Error::dim(format!("pixel_unshuffle: {hr}x{wr} not divisible by {r}")));
    }
    let (h, w) = (hr / r, wr / r);
    x.reshape(&[b, c, h, r, w, r])?
        .permute(&[0, 1, 3, 5, 2, 4])?
        .reshape(&[b, c * r * r, h, w])
}
