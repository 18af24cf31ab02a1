//! Image-structured operations on `[batch, channels, height, width]` maps.
//!
//! Everything here is differentiable. Data-pipeline operations (blur,
//! decimation, resizing) run on constant inputs and then record nothing.

mod conv;
mod norm;
mod resample;
mod spatial;

pub use conv::{conv2d, conv2d_valid};
pub use norm::layer_norm_channels;
pub use resample::{
    avg_pool_local, bicubic_resize, cubic_weight, gaussian_blur, gaussian_kernel, gaussian_kernel_1d, local_variance,
    resample_axis, Taps,
};
pub use spatial::{crop, decimate, pad, pixel_shuffle, pixel_unshuffle, spatial_gather};

use crate::error::{Error, Result};
use crate::tensor::{Real, Var};

/// A [`Var`] interpreted as `[batch, channels, height, width]`.
pub type FeatureMap<T> = Var<T>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    /// Mirror without repeating the edge sample (`x[-1] = x[1]`).
    Reflect,
}

/// Extents of a rank-4 feature map.
pub fn dims4<T: Real>(x: &Var<T>) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [b, c, h, w] => Ok((b, c, h, w)),
        ref s => Err(Error::dim(format!("expected a [b,c,h,w] feature map, got {s:?}"))),
    }
}

/// Maps any integer coordinate into `0..n` by mirror reflection about the
/// edge samples. Offsets larger than the extent fold repeatedly.
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

pub(crate) fn require_odd(k: usize, what: &str) -> Result<()> {
    if k.is_multiple_of(2) {
        return Err(Error::contract(format!("{what}: window {k} must be odd")));
    }
    Ok(())
}
