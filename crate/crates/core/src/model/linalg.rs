//! Row-major dense kernels. Weights are stored `[in, out]` so `y = x W + b`.

use super::Scalar;

/// `out[m, n] = a[m, k] * b[k, n] (+ bias[n])`.
pub fn matmul<T: Scalar>(a: &[T], b: &[T], bias: Option<&[T]>, m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for (arow, orow) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        match bias {
            Some(bias) => orow.copy_from_slice(bias),
            None => orow.fill(T::zero()),
        }
        for (&av, brow) in arow.iter().zip(b.chunks_exact(n)) {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[m, n] += a[m, k] * b[n, k]^T`.
pub fn matmul_bt_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for (arow, orow) in a.chunks_exact(k).zip(out.chunks_exact_mut(n)) {
        for (o, brow) in orow.iter_mut().zip(b.chunks_exact(k)) {
            *o += dot(arow, brow);
        }
    }
}

/// `out[k, n] += a[m, k]^T * b[m, n]`; the weight-gradient product.
pub fn matmul_at_acc<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    for (arow, brow) in a.chunks_exact(k).zip(b.chunks_exact(n)) {
        for (&av, orow) in arow.iter().zip(out.chunks_exact_mut(n)) {
            if av == T::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// Column sums of `a[m, n]` added into `out[n]`.
pub fn col_sum_acc<T: Scalar>(a: &[T], n: usize, out: &mut [T]) {
    for row in a.chunks_exact(n) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    // independent accumulators let the compiler vectorize without reassociating a single sum
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b[..a.len()].chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut s = ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
    for (&x, &y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

pub fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub const LN_EPS: f64 = 1e-5;

/// Per-row layer normalization; returns the normalized rows and inverse deviations.
pub fn layer_norm<T: Scalar>(x: &[T], g: &[T], b: &[T], d: usize, out: &mut [T], xhat: &mut [T], inv_std: &mut [T]) {
    let eps = T::of(LN_EPS);
    let inv_d = T::one() / T::of(d as f64);
    for (r, row) in x.chunks_exact(d).enumerate() {
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let is = T::one() / (var + eps).sqrt();
        inv_std[r] = is;
        let xh = &mut xhat[r * d..(r + 1) * d];
        let o = &mut out[r * d..(r + 1) * d];
        for i in 0..d {
            xh[i] = (row[i] - mean) * is;
            o[i] = xh[i] * g[i] + b[i];
        }
    }
}

/// Backward of [`layer_norm`]: accumulates `dg`, `db` and writes `dx`.
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    g: &[T],
    d: usize,
    dg: &mut [T],
    db: &mut [T],
    dx: &mut [T],
) {
    let inv_d = T::one() / T::of(d as f64);
    let mut dxh = vec![T::zero(); d];
    for (r, (dyr, xhr)) in dy.chunks_exact(d).zip(xhat.chunks_exact(d)).enumerate() {
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for i in 0..d {
            dg[i] += dyr[i] * xhr[i];
            db[i] += dyr[i];
            dxh[i] = dyr[i] * g[i];
            m1 += dxh[i];
            m2 += dxh[i] * xhr[i];
        }
        m1 *= inv_d;
        m2 *= inv_d;
        let dxr = &mut dx[r * d..(r + 1) * d];
        for i in 0..d {
            dxr[i] = inv_std[r] * (dxh[i] - m1 - xhr[i] * m2);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let du = c * (T::one() + T::of(3.0) * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

/// In-place row softmax over the first `valid` entries of each row; the rest are zeroed.
pub fn softmax_prefix<T: Scalar>(row: &mut [T], valid: impl Fn(usize) -> bool) {
    let mut max = T::neg_infinity();
    for (j, &v) in row.iter().enumerate() {
        if valid(j) && v > max {
            max = v;
        }
    }
    let mut sum = T::zero();
    for (j, v) in row.iter_mut().enumerate() {
        if valid(j) {
            *v = (*v - max).exp();
            sum += *v;
        } else {
            *v = T::zero();
        }
    }
    let inv = T::one() / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}
