use rayon::prelude::*;

use super::array::{Real, Tensor};
use super::var::Var;
use crate::error::{Error, Result};

/// `c += a · b` with `a: m×k`, `b: k×n`.
pub(crate) fn gemm_nn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let row = &mut c[i * n..][..n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == T::zero() {
                continue;
            }
            for (cv, &bv) in row.iter_mut().zip(&b[p * n..][..n]) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c += a · bᵀ` with `a: m×k`, `b: n×k`.
pub(crate) fn gemm_nt<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ar = &a[i * k..][..k];
        for j in 0..n {
            let br = &b[j * k..][..k];
            let mut s = T::zero();
            for (&x, &y) in ar.iter().zip(br) {
                s += x * y;
            }
            c[i * n + j] += s;
        }
    }
}

/// `c += aᵀ · b` with `a: k×m`, `b: k×n`.
pub(crate) fn gemm_tn<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let br = &b[p * n..][..n];
        for i in 0..m {
            let api = a[p * m + i];
            if api == T::zero() {
                continue;
            }
            for (cv, &bv) in c[i * n..][..n].iter_mut().zip(br) {
                *cv += api * bv;
            }
        }
    }
}

impl<T: Real> Var<T> {
    /// Matrix product of `m×k` and `k×n` operands.
    pub fn matmul(&self, other: &Var<T>) -> Result<Var<T>> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 {
            return Err(Error::dim(format!(
                "matmul needs rank-2 operands, got {sa:?} and {sb:?}"
            )));
        }
        let a3 = self.reshape(&[1, sa[0], sa[1]])?;
        let b3 = other.reshape(&[1, sb[0], sb[1]])?;
        let (m, n) = (sa[0], sb[1]);
        a3.bmm(&b3)?.reshape(&[m, n])
    }

    /// Batched matrix product: `[B, m, k] · [B, k, n] -> [B, m, n]`.
    pub fn bmm(&self, other: &Var<T>) -> Result<Var<T>> {
        let (sa, sb) = (self.shape().to_vec(), other.shape().to_vec());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] || sa[2] != sb[1] {
            return Err(Error::dim(format!("bmm operands {sa:?} and {sb:?} are incompatible")));
        }
        let (batch, m, k, n) = (sa[0], sa[1], sa[2], sb[2]);
        let mut out = vec![T::zero(); batch * m * n];
        let (ad, bd) = (self.value().data(), other.value().data());
        out.par_chunks_mut(m * n).enumerate().for_each(|(bi, c)| {
            gemm_nn(&ad[bi * m * k..][..m * k], &bd[bi * k * n..][..k * n], c, m, k, n);
        });
        let (ac, bc) = (self.clone(), other.clone());
        Ok(Var::from_op(
            "matmul",
            Tensor::from_parts(vec![batch, m, n], out),
            vec![self.clone(), other.clone()],
            Box::new(move |g, needs| {
                let gd = g.data();
                let ga = needs[0].then(|| {
                    let bd = bc.value().data();
                    let mut ga = vec![T::zero(); batch * m * k];
                    ga.par_chunks_mut(m * k).enumerate().for_each(|(bi, c)| {
                        gemm_nt(&gd[bi * m * n..][..m * n], &bd[bi * k * n..][..k * n], c, m, n, k);
                    });
                    Tensor::from_parts(sa.clone(), ga)
                });
                let gb = needs[1].then(|| {
                    let ad = ac.value().data();
                    let mut gb = vec![T::zero(); batch * k * n];
                    gb.par_chunks_mut(k * n).enumerate().for_each(|(bi, c)| {
                        gemm_tn(&ad[bi * m * k..][..m * k], &gd[bi * m * n..][..m * n], c, k, m, n);
                    });
                    Tensor::from_parts(sb.clone(), gb)
                });
                vec![ga, gb]
            }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(shape: &[usize], data: Vec<f64>) -> Var<f64> {
        Var::constant(Tensor::new(shape, data).unwrap())
    }

    #[test]
    fn matmul_examples() {
        let eye = c(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]);
        let b = c(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(eye.matmul(&b).unwrap().value(), b.value());

        let a = c(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let ones = c(&[2, 1], vec![1.0, 1.0]);
        assert_eq!(a.matmul(&ones).unwrap().value().data(), &[3.0, 7.0]);

        let z = c(&[2, 3], vec![0.0; 6]);
        let any = c(&[3, 4], (0..12).map(|i| i as f64 - 3.5).collect());
        let out = z.matmul(&any).unwrap();
        assert_eq!(out.shape(), &[2, 4]);
        assert!(out.value().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let a = c(&[2, 3], vec![0.0; 6]);
        assert!(matches!(a.matmul(&a), Err(Error::Dimension(_))));
    }

    #[test]
    fn transposed_kernels_agree_with_plain_product() {
        let a: Vec<f64> = (0..6).map(|i| i as f64 * 0.5 - 1.0).collect(); // 2x3
        let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect(); // 3x4
        let mut c1 = vec![0.0; 8];
        gemm_nn(&a, &b, &mut c1, 2, 3, 4);
        // bᵀ stored as 4x3
        let bt: Vec<f64> = (0..12).map(|idx| b[(idx % 3) * 4 + idx / 3]).collect();
        let mut c2 = vec![0.0; 8];
        gemm_nt(&a, &bt, &mut c2, 2, 3, 4);
        // aᵀ stored as 3x2
        let at: Vec<f64> = (0..6).map(|idx| a[(idx % 2) * 3 + idx / 2]).collect();
        let mut c3 = vec![0.0; 8];
        gemm_tn(&at, &b, &mut c3, 2, 3, 4);
        for i in 0..8 {
            assert!((c1[i] - c2[i]).abs() < 1e-12);
            assert!((c1[i] - c3[i]).abs() < 1e-12);
        }
    }
}
