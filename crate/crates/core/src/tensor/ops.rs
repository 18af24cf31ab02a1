use super::array::{split_axis, Real, Tensor};
use super::var::Var;
use crate::error::{Error, Result};

fn check_axis(shape: &[usize], axis: usize, what: &str) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::contract(format!(
            "{what}: axis {axis} out of range for shape {shape:?}"
        )));
    }
    Ok(())
}

/// Reduces a broadcast gradient back onto a scalar operand.
fn reduce_to<T: Real>(g: Tensor<T>, shape: &[usize]) -> Tensor<T> {
    if g.shape() == shape {
        g
    } else {
        Tensor::from_parts(shape.to_vec(), vec![g.sum()])
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

fn binary<T: Real>(a: &Var<T>, b: &Var<T>, kind: Binary) -> Result<Var<T>> {
    let (sa, sb) = (a.shape().to_vec(), b.shape().to_vec());
    let na = a.value().numel();
    let nb = b.value().numel();
    let out_shape = if sa == sb || nb == 1 {
        sa.clone()
    } else if na == 1 {
        sb.clone()
    } else {
        return Err(Error::dim(format!("elementwise operands {sa:?} and {sb:?} differ")));
    };
    let n: usize = out_shape.iter().product();
    let (da, db) = (a.value().data(), b.value().data());
    let at = |i: usize| if na == 1 { da[0] } else { da[i] };
    let bt = |i: usize| if nb == 1 { db[0] } else { db[i] };
    let f: fn(T, T) -> T = match kind {
        Binary::Add => |x, y| x + y,
        Binary::Sub => |x, y| x - y,
        Binary::Mul => |x, y| x * y,
    };
    let data: Vec<T> = (0..n).map(|i| f(at(i), bt(i))).collect();
    let name = match kind {
        Binary::Add => "add",
        Binary::Sub => "sub",
        Binary::Mul => "mul",
    };
    let (ac, bc) = (a.clone(), b.clone());
    Ok(Var::from_op(
        name,
        Tensor::from_parts(out_shape.clone(), data),
        vec![a.clone(), b.clone()],
        Box::new(move |g, needs| {
            let ga = needs[0].then(|| {
                let full = match kind {
                    Binary::Add | Binary::Sub => g.clone(),
                    Binary::Mul => {
                        let bv = bc.value();
                        if bv.numel() == 1 {
                            let s = bv.item();
                            g.map(|x| x * s)
                        } else {
                            g.zip_map(bv, |x, y| x * y)
                        }
                    }
                };
                reduce_to(full, ac.shape())
            });
            let gb = needs[1].then(|| {
                let full = match kind {
                    Binary::Add => g.clone(),
                    Binary::Sub => g.map(|x| -x),
                    Binary::Mul => {
                        let av = ac.value();
                        if av.numel() == 1 {
                            let s = av.item();
                            g.map(|x| x * s)
                        } else {
                            g.zip_map(av, |x, y| x * y)
                        }
                    }
                };
                reduce_to(full, bc.shape())
            });
            vec![ga, gb]
        }),
    ))
}

/// Pointwise map with derivative expressed through input and output values.
fn unary<T: Real>(x: &Var<T>, name: &'static str, f: impl Fn(T) -> T, df: fn(T, T) -> T) -> Var<T> {
    let out = x.value().map(f);
    let xc = x.clone();
    let yc = out.clone();
    Var::from_op(
        name,
        out,
        vec![x.clone()],
        Box::new(move |g, _| {
            let xv = xc.value().data();
            let yv = yc.data();
            let data = g
                .data()
                .iter()
                .enumerate()
                .map(|(i, &gi)| gi * df(xv[i], yv[i]))
                .collect();
            vec![Some(Tensor::from_parts(g.shape().to_vec(), data))]
        }),
    )
}

fn sigmoid_scalar<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Var<T> {
    pub fn add(&self, other: &Var<T>) -> Result<Var<T>> {
        binary(self, other, Binary::Add)
    }

    pub fn sub(&self, other: &Var<T>) -> Result<Var<T>> {
        binary(self, other, Binary::Sub)
    }

    pub fn mul(&self, other: &Var<T>) -> Result<Var<T>> {
        binary(self, other, Binary::Mul)
    }

    /// Multiplies by a constant scalar.
    pub fn scale(&self, c: T) -> Var<T> {
        let out = self.value().map(|x| x * c);
        Var::from_op(
            "scale",
            out,
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(g.map(|x| x * c))]),
        )
    }

    pub fn add_scalar(&self, c: T) -> Var<T> {
        let out = self.value().map(|x| x + c);
        Var::from_op(
            "add_scalar",
            out,
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.clone())]),
        )
    }

    pub fn square(&self) -> Var<T> {
        unary(self, "square", |x| x * x, |x, _| x + x)
    }

    /// Subgradient 0 at the kink.
    pub fn relu(&self) -> Var<T> {
        unary(
            self,
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _| if x > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn sigmoid(&self) -> Var<T> {
        unary(self, "sigmoid", sigmoid_scalar, |_, y| y * (T::one() - y))
    }

    pub fn silu(&self) -> Var<T> {
        unary(
            self,
            "silu",
            |x| x * sigmoid_scalar(x),
            |x, _| {
                let s = sigmoid_scalar(x);
                s * (T::one() + x * (T::one() - s))
            },
        )
    }

    /// Subgradient 0 at ties.
    pub fn abs(&self) -> Var<T> {
        unary(
            self,
            "abs",
            |x| x.abs(),
            |x, _| {
                if x > T::zero() {
                    T::one()
                } else if x < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn sum_all(&self) -> Var<T> {
        let shape = self.shape().to_vec();
        Var::from_op(
            "sum",
            Tensor::scalar(self.value().sum()),
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(Tensor::full(&shape, g.item()))]),
        )
    }

    pub fn mean_all(&self) -> Var<T> {
        let n = T::of(self.value().numel() as f64);
        self.sum_all().scale(T::one() / n)
    }

    /// Mean along `axis`; the axis is removed from the shape.
    pub fn mean(&self, axis: usize) -> Result<Var<T>> {
        check_axis(self.shape(), axis, "mean")?;
        let shape = self.shape().to_vec();
        let (outer, len, inner) = split_axis(&shape, axis);
        let x = self.value().data();
        let inv = T::one() / T::of(len as f64);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for l in 0..len {
                let src = &x[(o * len + l) * inner..][..inner];
                let dst = &mut out[o * inner..][..inner];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
        out.iter_mut().for_each(|v| *v *= inv);
        let mut out_shape = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Ok(Var::from_op(
            "mean",
            Tensor::from_parts(out_shape, out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let gd = g.data();
                let mut gx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for l in 0..len {
                        let dst = &mut gx[(o * len + l) * inner..][..inner];
                        for (d, &s) in dst.iter_mut().zip(&gd[o * inner..][..inner]) {
                            *d = s * inv;
                        }
                    }
                }
                vec![Some(Tensor::from_parts(shape.clone(), gx))]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var<T>> {
        let out = self.value().clone().reshaped(shape)?;
        let orig = self.shape().to_vec();
        Ok(Var::from_op(
            "reshape",
            out,
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(g.clone().reshaped(&orig).expect("same size"))]),
        ))
    }

    /// General axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Var<T>> {
        let rank = self.shape().len();
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..rank).collect::<Vec<_>>() {
            return Err(Error::contract(format!("permutation {perm:?} invalid for rank {rank}")));
        }
        let out = permute_tensor(self.value(), perm);
        let mut inverse = vec![0; rank];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        Ok(Var::from_op(
            "permute",
            out,
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(permute_tensor(g, &inverse))]),
        ))
    }

    pub fn transpose(&self, a: usize, b: usize) -> Result<Var<T>> {
        let rank = self.shape().len();
        if a >= rank || b >= rank {
            return Err(Error::contract(format!(
                "transpose axes ({a},{b}) out of range for rank {rank}"
            )));
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(a, b);
        self.permute(&perm)
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(parts: &[Var<T>], axis: usize) -> Result<Var<T>> {
        let first = parts.first().ok_or_else(|| Error::contract("concat of zero tensors"))?;
        check_axis(first.shape(), axis, "concat")?;
        let base = first.shape().to_vec();
        for p in parts {
            let s = p.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(i, (a, b))| i != axis && a != b) {
                return Err(Error::dim(format!(
                    "concat along {axis}: {:?} incompatible with {base:?}",
                    s
                )));
            }
        }
        let lens: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = lens.iter().sum();
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out_shape = base.clone();
        out_shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &len) in parts.iter().zip(&lens) {
                out.extend_from_slice(&p.value().data()[o * len * inner..][..len * inner]);
            }
        }
        let shapes: Vec<Vec<usize>> = parts.iter().map(|p| p.shape().to_vec()).collect();
        Ok(Var::from_op(
            "concat",
            Tensor::from_parts(out_shape, out),
            parts.to_vec(),
            Box::new(move |g, needs| {
                let gd = g.data();
                let mut grads: Vec<Vec<T>> = lens
                    .iter()
                    .zip(needs)
                    .map(|(&l, &n)| {
                        if n {
                            Vec::with_capacity(outer * l * inner)
                        } else {
                            Vec::new()
                        }
                    })
                    .collect();
                for o in 0..outer {
                    let mut start = o * total * inner;
                    for (i, &len) in lens.iter().enumerate() {
                        if needs[i] {
                            grads[i].extend_from_slice(&gd[start..start + len * inner]);
                        }
                        start += len * inner;
                    }
                }
                grads
                    .into_iter()
                    .zip(&shapes)
                    .zip(needs)
                    .map(|((d, s), &n)| n.then(|| Tensor::from_parts(s.clone(), d)))
                    .collect()
            }),
        ))
    }

    /// Selects rows of a table along axis 0; gradients scatter-add back.
    pub fn index_select(&self, indices: &[usize]) -> Result<Var<T>> {
        let shape = self.shape().to_vec();
        let rows = shape[0];
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::contract(format!("index {bad} out of range for {rows} rows")));
        }
        let width: usize = shape[1..].iter().product();
        let x = self.value().data();
        let mut out = Vec::with_capacity(indices.len() * width);
        for &i in indices {
            out.extend_from_slice(&x[i * width..][..width]);
        }
        let mut out_shape = shape.clone();
        out_shape[0] = indices.len();
        let idx = indices.to_vec();
        Ok(Var::from_op(
            "index_select",
            Tensor::from_parts(out_shape, out),
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![T::zero(); rows * width];
                for (k, &i) in idx.iter().enumerate() {
                    for (d, &s) in gx[i * width..][..width].iter_mut().zip(&g.data()[k * width..][..width]) {
                        *d += s;
                    }
                }
                vec![Some(Tensor::from_parts(shape.clone(), gx))]
            }),
        ))
    }

    /// `x[.., i, ..] * s[i]` along `axis`, with `s` of length `shape[axis]`.
    pub fn scale_along(&self, s: &Var<T>, axis: usize) -> Result<Var<T>> {
        self.along(s, axis, true)
    }

    /// `x[.., i, ..] + b[i]` along `axis`.
    pub fn shift_along(&self, b: &Var<T>, axis: usize) -> Result<Var<T>> {
        self.along(b, axis, false)
    }

    fn along(&self, s: &Var<T>, axis: usize, multiply: bool) -> Result<Var<T>> {
        check_axis(self.shape(), axis, "scale_along")?;
        let shape = self.shape().to_vec();
        let (outer, len, inner) = split_axis(&shape, axis);
        if s.value().numel() != len {
            return Err(Error::dim(format!(
                "per-axis operand has {} entries, axis {axis} of {shape:?} has {len}",
                s.value().numel()
            )));
        }
        let x = self.value().data();
        let sv = s.value().data();
        let mut out = Vec::with_capacity(x.len());
        for o in 0..outer {
            for (l, &c) in sv.iter().enumerate() {
                let src = &x[(o * len + l) * inner..][..inner];
                if multiply {
                    out.extend(src.iter().map(|&v| v * c));
                } else {
                    out.extend(src.iter().map(|&v| v + c));
                }
            }
        }
        let (xc, sc) = (self.clone(), s.clone());
        let s_shape = s.shape().to_vec();
        Ok(Var::from_op(
            if multiply { "scale_along" } else { "shift_along" },
            Tensor::from_parts(shape.clone(), out),
            vec![self.clone(), s.clone()],
            Box::new(move |g, needs| {
                let gd = g.data();
                let sv = sc.value().data();
                let gx = needs[0].then(|| {
                    if !multiply {
                        return g.clone();
                    }
                    let mut d = Vec::with_capacity(gd.len());
                    for o in 0..outer {
                        for (l, &c) in sv.iter().enumerate() {
                            d.extend(gd[(o * len + l) * inner..][..inner].iter().map(|&v| v * c));
                        }
                    }
                    Tensor::from_parts(shape.clone(), d)
                });
                let gs = needs[1].then(|| {
                    let xd = xc.value().data();
                    let mut acc = vec![T::zero(); len];
                    for o in 0..outer {
                        for (l, a) in acc.iter_mut().enumerate() {
                            let base = (o * len + l) * inner;
                            let gs = &gd[base..][..inner];
                            if multiply {
                                *a += gs.iter().zip(&xd[base..][..inner]).map(|(&p, &q)| p * q).sum::<T>();
                            } else {
                                *a += gs.iter().copied().sum::<T>();
                            }
                        }
                    }
                    Tensor::from_parts(s_shape.clone(), acc)
                });
                vec![gx, gs]
            }),
        ))
    }

    /// Adds `y` whose shape equals the trailing axes of `self`, repeated
    /// over the leading axes.
    pub fn add_trailing(&self, y: &Var<T>) -> Result<Var<T>> {
        let xs = self.shape().to_vec();
        let ys = y.shape();
        if ys.len() > xs.len() || xs[xs.len() - ys.len()..] != *ys {
            return Err(Error::dim(format!("{ys:?} is not a trailing block of {xs:?}")));
        }
        let block = y.value().numel();
        let yv = y.value().data();
        let out: Vec<T> = self
            .value()
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + yv[i % block])
            .collect();
        let y_shape = ys.to_vec();
        Ok(Var::from_op(
            "add_trailing",
            Tensor::from_parts(xs, out),
            vec![self.clone(), y.clone()],
            Box::new(move |g, needs| {
                let gy = needs[1].then(|| {
                    let mut acc = vec![T::zero(); block];
                    for chunk in g.data().chunks(block) {
                        for (a, &v) in acc.iter_mut().zip(chunk) {
                            *a += v;
                        }
                    }
                    Tensor::from_parts(y_shape.clone(), acc)
                });
                vec![needs[0].then(|| g.clone()), gy]
            }),
        ))
    }

    /// Numerically stable softmax along `axis`.
    ///
    /// Fails when a slice is made entirely of masking sentinels, which
    /// signals an empty pivotal set upstream.
    pub fn softmax(&self, axis: usize) -> Result<Var<T>> {
        check_axis(self.shape(), axis, "softmax")?;
        let shape = self.shape().to_vec();
        let (outer, len, inner) = split_axis(&shape, axis);
        let x = self.value().data();
        let half_sentinel = T::NEG_LARGE * T::of(0.5);
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let mx = (0..len).map(|l| x[at(l)]).fold(T::neg_infinity(), T::max);
                if mx <= half_sentinel {
                    return Err(Error::DegenerateSlice { slice: o * inner + i });
                }
                let mut total = T::zero();
                for l in 0..len {
                    let e = (x[at(l)] - mx).exp();
                    out[at(l)] = e;
                    total += e;
                }
                for l in 0..len {
                    out[at(l)] = out[at(l)] / total;
                }
            }
        }
        let y = Tensor::from_parts(shape.clone(), out);
        let yc = y.clone();
        Ok(Var::from_op(
            "softmax",
            y,
            vec![self.clone()],
            Box::new(move |g, _| {
                let (gd, yd) = (g.data(), yc.data());
                let mut gx = vec![T::zero(); gd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let dot: T = (0..len).map(|l| gd[at(l)] * yd[at(l)]).sum();
                        for l in 0..len {
                            gx[at(l)] = yd[at(l)] * (gd[at(l)] - dot);
                        }
                    }
                }
                vec![Some(Tensor::from_parts(shape.clone(), gx))]
            }),
        ))
    }

    /// Divides each slice along `axis` by `max(‖slice‖, eps)`, so slices
    /// with norm above `eps` become unit length and zero slices stay zero.
    pub fn l2_normalize(&self, axis: usize, eps: T) -> Result<Var<T>> {
        check_axis(self.shape(), axis, "l2_normalize")?;
        let shape = self.shape().to_vec();
        let (outer, len, inner) = split_axis(&shape, axis);
        let x = self.value().data();
        let mut norms = vec![T::zero(); outer * inner];
        let mut out = vec![T::zero(); x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |l: usize| (o * len + l) * inner + i;
                let ss: T = (0..len).map(|l| x[at(l)] * x[at(l)]).sum();
                let n = ss.sqrt();
                norms[o * inner + i] = n;
                let d = n.max(eps);
                for l in 0..len {
                    out[at(l)] = x[at(l)] / d;
                }
            }
        }
        let y = Tensor::from_parts(shape.clone(), out);
        let yc = y.clone();
        Ok(Var::from_op(
            "l2_normalize",
            y,
            vec![self.clone()],
            Box::new(move |g, _| {
                let (gd, yd) = (g.data(), yc.data());
                let mut gx = vec![T::zero(); gd.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |l: usize| (o * len + l) * inner + i;
                        let n = norms[o * inner + i];
                        if n > eps {
                            let dot: T = (0..len).map(|l| gd[at(l)] * yd[at(l)]).sum();
                            for l in 0..len {
                                gx[at(l)] = (gd[at(l)] - yd[at(l)] * dot) / n;
                            }
                        } else {
                            for l in 0..len {
                                gx[at(l)] = gd[at(l)] / eps;
                            }
                        }
                    }
                }
                vec![Some(Tensor::from_parts(shape.clone(), gx))]
            }),
        ))
    }
}

pub(crate) fn permute_tensor<T: Real>(x: &Tensor<T>, perm: &[usize]) -> Tensor<T> {
    let in_shape = x.shape();
    let rank = in_shape.len();
    let mut in_strides = vec![1usize; rank];
    for a in (0..rank.saturating_sub(1)).rev() {
        in_strides[a] = in_strides[a + 1] * in_shape[a + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let src = x.data();
    let n = src.len();
    let mut out = Vec::with_capacity(n);
    if rank == 0 {
        return x.clone();
    }
    // Odometer over the output index; the innermost axis is copied in a run.
    let last = rank - 1;
    let run = out_shape[last];
    let run_stride = strides[last];
    let mut idx = vec![0usize; rank];
    let mut base = 0usize;
    while out.len() < n {
        if run_stride == 1 {
            out.extend_from_slice(&src[base..base + run]);
        } else {
            out.extend((0..run).map(|k| src[base + k * run_stride]));
        }
        let mut a = last;
        loop {
            if a == 0 {
                break;
            }
            a -= 1;
            idx[a] += 1;
            base += strides[a];
            if idx[a] < out_shape[a] {
                break;
            }
            base -= strides[a] * out_shape[a];
            idx[a] = 0;
        }
    }
    Tensor::from_parts(out_shape, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Var<f64> {
        Var::param(Tensor::new(shape, data.to_vec()).unwrap())
    }

    #[test]
    fn softmax_examples() {
        let s = t(&[2], &[0.0, 0.0]).softmax(0).unwrap();
        assert_eq!(s.value().data(), &[0.5, 0.5]);

        let s = Var::constant(Tensor::new(&[4], vec![0.9f32, 0.8, -1e9, -1e9]).unwrap())
            .softmax(0)
            .unwrap();
        let d = s.value().data();
        assert!((d[0] - 0.5250).abs() < 1e-4);
        assert!((d[1] - 0.4750).abs() < 1e-4);
        assert!(d[2] < 1e-12 && d[3] < 1e-12);

        let s = t(&[3], &[7.5, 7.5, 7.5]).softmax(0).unwrap();
        for &v in s.value().data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_rejects_fully_masked_slice() {
        let x = Var::constant(Tensor::new(&[2, 2], vec![0.0f32, 1.0, -1e9, -1e9]).unwrap());
        assert!(matches!(x.softmax(1), Err(Error::DegenerateSlice { slice: 1 })));
    }

    #[test]
    fn l2_normalize_examples() {
        let y = t(&[2], &[3.0, 4.0]).l2_normalize(0, 1e-8).unwrap();
        assert!((y.value().data()[0] - 0.6).abs() < 1e-12);
        assert!((y.value().data()[1] - 0.8).abs() < 1e-12);
        let y = t(&[2], &[0.6, 0.8]).l2_normalize(0, 1e-8).unwrap();
        assert!((y.value().data()[0] - 0.6).abs() < 1e-12);
        let y = t(&[2], &[0.0, 0.0]).l2_normalize(0, 1e-8).unwrap();
        assert_eq!(y.value().data(), &[0.0, 0.0]);
    }

    #[test]
    fn elementwise_examples() {
        assert_eq!(t(&[1], &[0.0]).silu().value().data(), &[0.0]);
        assert_eq!(t(&[2], &[-1.0, 2.0]).relu().value().data(), &[0.0, 2.0]);
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2, 5], &[1.0; 10]);
        assert_eq!(Var::concat(&[a, b], 1).unwrap().shape(), &[2, 8]);
    }

    #[test]
    fn mismatched_elementwise_is_dimension_error() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[3, 2], &[0.0; 6]);
        assert!(matches!(a.add(&b), Err(Error::Dimension(_))));
        // scalar operands broadcast
        let s = t(&[1], &[2.0]);
        assert_eq!(a.add(&s).unwrap().shape(), &[2, 3]);
    }

    #[test]
    fn backward_textbook_cases() {
        let x = t(&[3], &[1.0, -2.0, 0.5]);
        x.square().sum_all().backward().unwrap();
        assert_eq!(x.grad().data(), &[2.0, -4.0, 1.0]);

        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[3.0, -4.0]);
        a.mul(&b).unwrap().sum_all().backward().unwrap();
        assert_eq!(a.grad().data(), &[3.0, -4.0]);
        assert_eq!(b.grad().data(), &[1.0, 2.0]);
    }

    #[test]
    fn backward_needs_scalar_and_zero_fills_unreached() {
        let x = t(&[2], &[1.0, 2.0]);
        assert!(matches!(x.square().backward(), Err(Error::Contract(_))));
        let unused = t(&[2], &[5.0, 5.0]);
        x.sum_all().backward().unwrap();
        assert_eq!(unused.grad().data(), &[0.0, 0.0]);
    }

    #[test]
    fn permute_matches_index_arithmetic() {
        let x = Tensor::<f64>::from_fn(&[2, 3, 4], |i| i as f64);
        let y = permute_tensor(&x, &[2, 0, 1]);
        assert_eq!(y.shape(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(y.get(&[c, a, b]), x.get(&[a, b, c]));
                }
            }
        }
    }
}
