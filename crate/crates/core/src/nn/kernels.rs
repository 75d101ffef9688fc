//! Dense matrix kernels used by the convolutions. All matrices are row-major
//! and every routine accumulates into `c`.

use super::Scalar;

const COL_BLOCK: usize = 512;

/// `c[m x n] += a[m x k] * b[k x n]`
pub fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + COL_BLOCK).min(n);
        for i in 0..m {
            let c_row = &mut c[i * n + j0..i * n + j1];
            for p in 0..k {
                let av = a[i * k + p];
                if av == T::ZERO {
                    continue;
                }
                let b_row = &b[p * n + j0..p * n + j1];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
        j0 = j1;
    }
}

/// `c[m x n] += a[m x k] * b[n x k]^T`
pub fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            c[i * n + j] += dot(a_row, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c[m x n] += a[k x m]^T * b[k x n]`
pub fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    let mut j0 = 0;
    while j0 < n {
        let j1 = (j0 + COL_BLOCK).min(n);
        for p in 0..k {
            let b_row = &b[p * n + j0..p * n + j1];
            for i in 0..m {
                let av = a[p * m + i];
                if av == T::ZERO {
                    continue;
                }
                let c_row = &mut c[i * n + j0..i * n + j1];
                for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
        j0 = j1;
    }
}

/// Dot product with eight independent partial sums so the loop vectorizes.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::ZERO; 8];
    let chunks = a.len() / 8;
    for (ca, cb) in a.chunks_exact(8).zip(b.chunks_exact(8)) {
        for l in 0..8 {
            acc[l] += ca[l] * cb[l];
        }
    }
    let mut tail = T::ZERO;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Unfolds one `(c, h, w)` image into `(c * k * k) x (ho * wo)` columns.
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [T],
) {
    let hw_out = ho * wo;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * hw_out..][..hw_out];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    let dst = &mut row[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= h as isize {
                        dst.fill(T::ZERO);
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        *d = if ix < 0 || ix >= w as isize {
                            T::ZERO
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back into an image, accumulating.
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    x: &mut [T],
) {
    let hw_out = ho * wo;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * hw_out..][..hw_out];
                for oy in 0..ho {
                    let iy = (oy * stride + ky) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..wo {
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += row[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, a: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = a[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn gemm_variants_agree_with_naive() {
        let (m, k, n) = (5, 7, 600);
        let a: Vec<f64> = (0..m * k).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let b: Vec<f64> = (0..k * n).map(|i| ((i * 13) % 7) as f64 - 3.0).collect();
        let want = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        gemm_nn(m, k, n, &a, &b, &mut c);
        assert_eq!(c, want);

        let bt = transpose(k, n, &b);
        let mut c = vec![0.0; m * n];
        gemm_nt(m, k, n, &a, &bt, &mut c);
        assert_eq!(c, want);

        let at = transpose(m, k, &a);
        let mut c = vec![0.0; m * n];
        gemm_tn(m, k, n, &at, &b, &mut c);
        assert_eq!(c, want);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w, k, s, p) = (2, 5, 4, 3, 2, 1);
        let ho = (h + 2 * p - k) / s + 1;
        let wo = (w + 2 * p - k) / s + 1;
        let x: Vec<f64> = (0..c * h * w).map(|i| libm::sin(i as f64 * 0.37)).collect();
        let y: Vec<f64> = (0..c * k * k * ho * wo)
            .map(|i| libm::cos(i as f64 * 0.11))
            .collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, k, s, p, ho, wo, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, c, h, w, k, s, p, ho, wo, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
