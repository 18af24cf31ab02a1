use crate::tensor::{Real, Tensor};

/// Binary keep-mask with the shape of an attention score tensor. The last
/// axis indexes keys; every row keeps at least one entry, and kept scores
/// are never below dropped scores in the same row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PivotalMask {
    shape: Vec<usize>,
    keep: Vec<bool>,
}

impl PivotalMask {
    pub fn all_ones(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            keep: vec![true; shape.iter().product()],
        }
    }

    /// Builds a mask from explicit bits; `None` when a row would be empty.
    pub fn from_bits(shape: &[usize], keep: Vec<bool>) -> Option<Self> {
        let row = *shape.last()?;
        if keep.len() != shape.iter().product::<usize>() || keep.chunks(row).any(|r| !r.contains(&true)) {
            return None;
        }
        Some(Self {
            shape: shape.to_vec(),
            keep,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.keep
    }

    pub fn row_len(&self) -> usize {
        *self.shape.last().unwrap_or(&1)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[bool]> {
        self.keep.chunks(self.row_len())
    }

    /// Fraction of entries kept.
    pub fn density(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }
}

/// Optimal two-cluster split of one row: the cut between consecutive
/// distinct sorted values with the lowest within-cluster SSE. Entries at or
/// above the cut are kept. A constant row keeps everything.
///
/// Maximizing the between-cluster term `S₁²·n/(n₁·n₂)` over centred values
/// is equivalent to minimizing the SSE and avoids cancellation.
pub fn kmeans_row<T: Real>(row: &[T]) -> Vec<bool> {
    let n = row.len();
    let mut sorted: Vec<f64> = row.iter().map(|x| x.f64()).collect();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / n as f64;
    let mut best: Option<(f64, f64)> = None;
    let mut s1 = 0.0;
    for i in 1..n {
        s1 += sorted[i - 1] - mean;
        if sorted[i] > sorted[i - 1] {
            let score = s1 * s1 * n as f64 / (i * (n - i)) as f64;
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, sorted[i]));
            }
        }
    }
    match best {
        Some((_, cut)) => row.iter().map(|x| x.f64() >= cut).collect(),
        None => vec![true; n],
    }
}

/// Two-cluster Lloyd iteration with centroids started at the row minimum
/// and maximum; the cluster with the larger centroid is kept. Converges to
/// a local fixpoint that is not always the optimal split.
pub fn lloyd_row<T: Real>(row: &[T], max_iters: usize) -> Vec<bool> {
    let lo0 = row.iter().copied().fold(T::infinity(), T::min);
    let hi0 = row.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi0 > lo0) {
        return vec![true; row.len()];
    }
    let (mut lo, mut hi) = (lo0.f64(), hi0.f64());
    let mut high: Vec<bool> = row.iter().map(|&x| x.f64() > (lo + hi) / 2.0).collect();
    for _ in 0..max_iters {
        let (mut sl, mut nl, mut sh, mut nh) = (0.0, 0usize, 0.0, 0usize);
        for (&x, &h) in row.iter().zip(&high) {
            if h {
                sh += x.f64();
                nh += 1;
            } else {
                sl += x.f64();
                nl += 1;
            }
        }
        // Both clusters stay non-empty: the minimum is always nearer the
        // low centroid and the maximum nearer the high one.
        lo = sl / nl as f64;
        hi = sh / nh as f64;
        let next: Vec<bool> = row.iter().map(|&x| x.f64() > (lo + hi) / 2.0).collect();
        if next == high {
            break;
        }
        high = next;
    }
    high
}

/// Per-row pivotal mask of a score tensor `[..., T, T]`.
pub fn kmeans_mask<T: Real>(scores: &Tensor<T>) -> PivotalMask {
    row_mask(scores, kmeans_row)
}

/// Like [`kmeans_mask`] but with min/max-initialized Lloyd iterations.
pub fn lloyd_mask<T: Real>(scores: &Tensor<T>, max_iters: usize) -> PivotalMask {
    row_mask(scores, |r| lloyd_row(r, max_iters))
}

fn row_mask<T: Real>(scores: &Tensor<T>, f: impl Fn(&[T]) -> Vec<bool>) -> PivotalMask {
    let row = *scores.shape().last().expect("non-empty shape");
    let keep = scores.data().chunks(row).flat_map(f).collect();
    PivotalMask {
        shape: scores.shape().to_vec(),
        keep,
    }
}
