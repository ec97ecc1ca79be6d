//! Inner loops shared by the tape and the incremental decoder. Each routine
//! uses a fixed summation order, so results do not depend on scheduling.

use super::Real;

/// Dot product with eight independent accumulators, reduced in a fixed order.
#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ra.iter().zip(rb) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha * x`
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * *xv;
    }
}

const MR: usize = 4;
const NR: usize = 16;

#[inline(always)]
fn gemm_nn_body<T: Real>(a: &[T], b: &[T], c: &mut [T], p: usize, q: usize, r: usize) {
    let p_main = p - p % MR;
    let r_main = r - r % NR;
    for i0 in (0..p_main).step_by(MR) {
        for j0 in (0..r_main).step_by(NR) {
            let mut acc = [[T::zero(); NR]; MR];
            for k in 0..q {
                let brow: &[T; NR] = b[k * r + j0..k * r + j0 + NR].try_into().unwrap();
                for (ii, accrow) in acc.iter_mut().enumerate() {
                    let aik = a[(i0 + ii) * q + k];
                    for jj in 0..NR {
                        accrow[jj] += aik * brow[jj];
                    }
                }
            }
            for (ii, accrow) in acc.iter().enumerate() {
                let crow = &mut c[(i0 + ii) * r + j0..(i0 + ii) * r + j0 + NR];
                for jj in 0..NR {
                    crow[jj] += accrow[jj];
                }
            }
        }
        if r_main < r {
            for i in i0..i0 + MR {
                let crow = &mut c[i * r + r_main..(i + 1) * r];
                for k in 0..q {
                    axpy(a[i * q + k], &b[k * r + r_main..(k + 1) * r], crow);
                }
            }
        }
    }
    for i in p_main..p {
        let crow = &mut c[i * r..(i + 1) * r];
        for k in 0..q {
            axpy(a[i * q + k], &b[k * r..(k + 1) * r], crow);
        }
    }
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn gemm_nn_avx2<T: Real>(a: &[T], b: &[T], c: &mut [T], p: usize, q: usize, r: usize) {
    gemm_nn_body(a, b, c, p, q, r)
}

#[cfg(target_arch = "x86_64")]
fn has_avx2() -> bool {
    use std::sync::OnceLock;
    static AVX2: OnceLock<bool> = OnceLock::new();
    *AVX2.get_or_init(|| std::arch::is_x86_feature_detected!("avx2"))
}

/// `c[p×r] += a[p×q] · b[q×r]`
///
/// The AVX2 path only widens vectors; FMA is not enabled, so both paths
/// round identically.
pub fn gemm_nn<T: Real>(a: &[T], b: &[T], c: &mut [T], p: usize, q: usize, r: usize) {
    assert!(a.len() >= p * q && b.len() >= q * r && c.len() >= p * r);
    #[cfg(target_arch = "x86_64")]
    if has_avx2() {
        // SAFETY: the CPU supports AVX2 (checked above).
        unsafe { gemm_nn_avx2(a, b, c, p, q, r) };
        return;
    }
    gemm_nn_body(a, b, c, p, q, r)
}

/// Row-major transpose of an `m×n` matrix.
pub fn transpose<T: Real>(x: &[T], m: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = x[i * n + j];
        }
    }
    out
}

/// `c[p×q] += a[p×r] · b[q×r]ᵀ`
pub fn gemm_nt<T: Real>(a: &[T], b: &[T], c: &mut [T], p: usize, q: usize, r: usize) {
    let bt = transpose(&b[..q * r], q, r);
    gemm_nn(a, &bt, c, p, r, q);
}

/// `c[q×r] += a[p×q]ᵀ · b[p×r]`
pub fn gemm_tn<T: Real>(a: &[T], b: &[T], c: &mut [T], p: usize, q: usize, r: usize) {
    let at = transpose(&a[..p * q], p, q);
    gemm_nn(&at, b, c, q, p, r);
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Inner tanh of the GELU approximation.
#[inline]
pub fn gelu_tanh<T: Real>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let u = c * (x + a * x * x * x);
    // tanh(u) = 1 - 2 / (exp(2u) + 1), saturating cleanly at both ends
    let two = T::from_f64(2.0);
    T::one() - two / ((two * u).exp() + T::one())
}

/// Tanh-approximated GELU.
#[inline]
pub fn gelu<T: Real>(x: T) -> T {
    T::from_f64(0.5) * x * (T::one() + gelu_tanh(x))
}

/// Derivative of [`gelu`] given the cached inner tanh `t`.
#[inline]
pub fn gelu_grad_from_tanh<T: Real>(x: T, t: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let du = c * (T::one() + T::from_f64(3.0) * a * x * x);
    half * (T::one() + t) + half * x * (T::one() - t * t) * du
}

#[inline]
pub fn gelu_grad<T: Real>(x: T) -> T {
    gelu_grad_from_tanh(x, gelu_tanh(x))
}

/// In-place softmax of one row; entries past `valid` are set to zero.
pub fn softmax_row<T: Real>(row: &mut [T], valid: usize) {
    let max = row[..valid].iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row[..valid].iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = T::one() / sum;
    for v in row[..valid].iter_mut() {
        *v *= inv;
    }
    for v in row[valid..].iter_mut() {
        *v = T::zero();
    }
}

/// Layer normalization of one row without affine terms; returns 1/std.
pub fn normalize_row<T: Real>(x: &[T], out: &mut [T], eps: T) -> T {
    let n = T::from_f64(x.len() as f64);
    let mean = x.iter().copied().sum::<T>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let rstd = T::one() / (var + eps).sqrt();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - mean) * rstd;
    }
    rstd
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_handles_remainders() {
        let a: Vec<f64> = (0..19).map(f64::from).collect();
        let b = vec![1.0; 19];
        assert_eq!(dot(&a, &b), 171.0);
    }

    fn naive(a: &[f64], b: &[f64], p: usize, q: usize, r: usize) -> Vec<f64> {
        let mut c = vec![0.0; p * r];
        for i in 0..p {
            for j in 0..r {
                for k in 0..q {
                    c[i * r + j] += a[i * q + k] * b[k * r + j];
                }
            }
        }
        c
    }

    #[test]
    fn blocked_gemms_match_naive_on_ragged_shapes() {
        for &(p, q, r) in &[(1, 1, 1), (5, 7, 3), (9, 5, 33), (4, 16, 16), (13, 3, 17)] {
            let a: Vec<f64> = (0..p * q).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
            let b: Vec<f64> = (0..q * r).map(|i| ((i * 13 % 7) as f64) - 3.0).collect();
            let want = naive(&a, &b, p, q, r);
            let mut c = vec![0.0; p * r];
            gemm_nn(&a, &b, &mut c, p, q, r);
            assert_eq!(c, want, "nn {p}x{q}x{r}");
            let bt = transpose(&b, q, r);
            let mut c = vec![0.0; p * r];
            gemm_nt(&a, &bt, &mut c, p, r, q);
            assert_eq!(c, want, "nt {p}x{q}x{r}");
            let at = transpose(&a, p, q);
            let mut c = vec![0.0; p * r];
            gemm_tn(&at, &b, &mut c, q, p, r);
            assert_eq!(c, want, "tn {p}x{q}x{r}");
        }
    }

    #[test]
    fn gelu_grad_matches_difference_quotient() {
        for &x in &[-3.0f64, -0.7, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_grad(x)).abs() < 1e-8, "x={x}");
        }
    }
}
