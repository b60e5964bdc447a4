//! Raw compute kernels shared by forward evaluation and VJPs.
//!
//! Everything is row-major and single-threaded; the inner loops are written
//! so the compiler can vectorize over the trailing dimension.

use super::real::Real;

/// c[m,n] += a[m,k] @ b[k,n]
pub fn matmul_acc<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * *bv;
            }
        }
    }
}

/// c[m,n] = a[m,k] @ b[k,n]
pub fn matmul<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut c = vec![F::zero(); m * n];
    matmul_acc(a, b, &mut c, m, k, n);
    c
}

/// c[m,n] = a[m,k] @ b[n,k]^T
pub fn matmul_nt<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![F::zero(); m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for (av, bv) in arow.iter().zip(brow.iter()) {
                acc += *av * *bv;
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// c[k,n] += a[m,k]^T @ b[m,n]
pub fn matmul_tn_acc<F: Real>(a: &[F], b: &[F], c: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let crow = &mut c[p * n..(p + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow.iter()) {
                *cv += av * *bv;
            }
        }
    }
}

pub fn transpose<F: Real>(a: &[F], rows: usize, cols: usize) -> Vec<F> {
    let mut out = vec![F::zero(); rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

/// Geometry of a 2-D convolution over a `[C,H,W]` input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvDims {
    pub fn new(
        c_in: usize,
        h: usize,
        w: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        pad: usize,
    ) -> Self {
        assert!(stride == 1 || stride == 2, "conv2d supports stride 1 or 2");
        let h_out = (h + 2 * pad - kh) / stride + 1;
        let w_out = (w + 2 * pad - kw) / stride + 1;
        ConvDims {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            pad,
            h_out,
            w_out,
        }
    }

    pub fn patch_len(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    pub fn out_positions(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// im2col: input `[C,H,W]` -> patches `[h_out*w_out, C*kh*kw]` (zero padded).
pub fn im2col<F: Real>(input: &[F], d: &ConvDims) -> Vec<F> {
    let mut cols = vec![F::zero(); d.out_positions() * d.patch_len()];
    let kw = d.kw;
    for oy in 0..d.h_out {
        for ox in 0..d.w_out {
            let base = (oy * d.w_out + ox) * d.patch_len();
            let iy0 = (oy * d.stride) as isize - d.pad as isize;
            let ix0 = (ox * d.stride) as isize - d.pad as isize;
            for c in 0..d.c_in {
                let chan = &input[c * d.h * d.w..(c + 1) * d.h * d.w];
                let pbase = base + c * d.kh * kw;
                for ky in 0..d.kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    let row = &chan[iy as usize * d.w..(iy as usize + 1) * d.w];
                    for kx in 0..kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        cols[pbase + ky * kw + kx] = row[ix as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter patch gradients back onto the input.
pub fn col2im_acc<F: Real>(d_cols: &[F], d: &ConvDims, d_input: &mut [F]) {
    let kw = d.kw;
    for oy in 0..d.h_out {
        for ox in 0..d.w_out {
            let base = (oy * d.w_out + ox) * d.patch_len();
            let iy0 = (oy * d.stride) as isize - d.pad as isize;
            let ix0 = (ox * d.stride) as isize - d.pad as isize;
            for c in 0..d.c_in {
                let pbase = base + c * d.kh * kw;
                for ky in 0..d.kh {
                    let iy = iy0 + ky as isize;
                    if iy < 0 || iy >= d.h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = ix0 + kx as isize;
                        if ix < 0 || ix >= d.w as isize {
                            continue;
                        }
                        d_input[c * d.h * d.w + iy as usize * d.w + ix as usize] +=
                            d_cols[pbase + ky * kw + kx];
                    }
                }
            }
        }
    }
}

/// Row/column maxima with first-occurrence argmax (deterministic tie-break).
/// Returns (out, row_argmax\[c,i\], col_argmax\[c,j\]) where
/// out\[c,i,j\] = rowmax\[c,i\] + colmax\[c,j\].
pub fn center_pool<F: Real>(
    input: &[F],
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<F>, Vec<usize>, Vec<usize>) {
    let mut out = vec![F::zero(); c * h * w];
    let mut row_arg = vec![0usize; c * h];
    let mut col_arg = vec![0usize; c * w];
    let mut row_max = vec![F::zero(); c * h];
    let mut col_max = vec![F::zero(); c * w];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for i in 0..h {
            let mut best = plane[i * w];
            let mut arg = 0usize;
            for j in 1..w {
                if plane[i * w + j] > best {
                    best = plane[i * w + j];
                    arg = j;
                }
            }
            row_max[ch * h + i] = best;
            row_arg[ch * h + i] = arg;
        }
        for j in 0..w {
            let mut best = plane[j];
            let mut arg = 0usize;
            for i in 1..h {
                if plane[i * w + j] > best {
                    best = plane[i * w + j];
                    arg = i;
                }
            }
            col_max[ch * w + j] = best;
            col_arg[ch * w + j] = arg;
        }
        for i in 0..h {
            for j in 0..w {
                out[ch * h * w + i * w + j] = row_max[ch * h + i] + col_max[ch * w + j];
            }
        }
    }
    (out, row_arg, col_arg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1,2;3,4] @ [5;6] = [17;39]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0];
        let c = matmul(&a, &b, 2, 2, 1);
        assert_eq!(c, vec![17.0, 39.0]);
    }

    #[test]
    fn matmul_nt_matches_matmul() {
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [7.0f64, 8.0, 9.0, 1.0, 2.0, 3.0]; // 2x3, used as B^T
        let c = matmul_nt(&a, &b, 2, 3, 2);
        let bt = transpose(&b, 2, 3);
        let c2 = matmul(&a, &bt, 2, 3, 2);
        assert_eq!(c, c2);
    }

    #[test]
    fn im2col_identity_kernel() {
        // 1x1 kernel, stride 1, no pad: patches equal the input.
        let input = [1.0f64, 2.0, 3.0, 4.0];
        let d = ConvDims::new(1, 2, 2, 1, 1, 1, 1, 0);
        let cols = im2col(&input, &d);
        assert_eq!(cols, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn center_pool_hand_case() {
        // [[1,2],[3,4]] -> [[5,6],[7,8]]
        let input = [1.0f64, 2.0, 3.0, 4.0];
        let (out, _, _) = center_pool(&input, 1, 2, 2);
        assert_eq!(out, vec![5.0, 6.0, 7.0, 8.0]);
    }
}
