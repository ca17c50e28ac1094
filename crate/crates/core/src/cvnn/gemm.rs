//! Complex matrix products over split real/imaginary storage, plus the
//! im2col/col2im gathers used by the convolution layers.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2};

/// Read-only view of a row-major complex matrix, optionally transposed and/or
/// conjugated.
#[derive(Clone, Copy)]
pub(crate) struct CMat<'a> {
    pub re: &'a [f64],
    pub im: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub transposed: bool,
    pub conj: bool,
}

impl<'a> CMat<'a> {
    pub fn new(re: &'a [f64], im: &'a [f64], rows: usize, cols: usize) -> Self {
        debug_assert_eq!(re.len(), rows * cols);
        debug_assert_eq!(im.len(), rows * cols);
        CMat { re, im, rows, cols, transposed: false, conj: false }
    }

    pub fn t(mut self) -> Self {
        self.transposed = !self.transposed;
        self
    }

    pub fn conj(mut self) -> Self {
        self.conj = !self.conj;
        self
    }

    fn shape(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn view(&self, data: &'a [f64]) -> ArrayView2<'a, f64> {
        let v = ArrayView2::from_shape((self.rows, self.cols), data).expect("matrix view");
        if self.transposed {
            v.reversed_axes()
        } else {
            v
        }
    }
}

/// `C ← α·op(A)·op(B) + β·C` with `C` of shape `m×n`.
pub(crate) fn cgemm(
    alpha: f64,
    a: CMat<'_>,
    b: CMat<'_>,
    beta: f64,
    c_re: &mut [f64],
    c_im: &mut [f64],
) {
    let (m, ka) = a.shape();
    let (kb, n) = b.shape();
    assert_eq!(ka, kb, "inner dimensions differ");
    let sa = if a.conj { -1.0 } else { 1.0 };
    let sb = if b.conj { -1.0 } else { 1.0 };
    let (ar, ai) = (a.view(a.re), a.view(a.im));
    let (br, bi) = (b.view(b.re), b.view(b.im));
    {
        let mut cr = ArrayViewMut2::from_shape((m, n), c_re).expect("output view");
        general_mat_mul(alpha, &ar, &br, beta, &mut cr);
        general_mat_mul(-alpha * sa * sb, &ai, &bi, 1.0, &mut cr);
    }
    let mut ci = ArrayViewMut2::from_shape((m, n), c_im).expect("output view");
    general_mat_mul(alpha * sb, &ar, &bi, beta, &mut ci);
    general_mat_mul(alpha * sa, &ai, &br, 1.0, &mut ci);
}

/// Gathers `k×k` patches of a `(batch, ch, h, w)` plane into a
/// `(ch·k·k, batch·ho·wo)` matrix, `ho = h - k + 1`.
pub(crate) fn im2col(
    src: &[f64],
    batch: usize,
    ch: usize,
    h: usize,
    w: usize,
    k: usize,
) -> Vec<f64> {
    let (ho, wo) = (h + 1 - k, w + 1 - k);
    let ncols = batch * ho * wo;
    let mut out = vec![0.0; ch * k * k * ncols];
    for c in 0..ch {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut out[row * ncols..(row + 1) * ncols];
                for b in 0..batch {
                    let plane = &src[(b * ch + c) * h * w..(b * ch + c + 1) * h * w];
                    for oy in 0..ho {
                        let s = (oy + ky) * w + kx;
                        let d = (b * ho + oy) * wo;
                        dst[d..d + wo].copy_from_slice(&plane[s..s + wo]);
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back into a
/// `(batch, ch, h, w)` plane.
pub(crate) fn col2im(
    cols: &[f64],
    batch: usize,
    ch: usize,
    h: usize,
    w: usize,
    k: usize,
) -> Vec<f64> {
    let (ho, wo) = (h + 1 - k, w + 1 - k);
    let ncols = batch * ho * wo;
    let mut out = vec![0.0; batch * ch * h * w];
    for c in 0..ch {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for b in 0..batch {
                    let plane = &mut out[(b * ch + c) * h * w..(b * ch + c + 1) * h * w];
                    for oy in 0..ho {
                        let d = (oy + ky) * w + kx;
                        let s = (b * ho + oy) * wo;
                        plane[d..d + wo].iter_mut().zip(&src[s..s + wo]).for_each(|(p, v)| *p += v);
                    }
                }
            }
        }
    }
    out
}

/// `(batch, ch, rest)` → `(ch, batch·rest)`.
pub(crate) fn batch_to_channel_major(src: &[f64], batch: usize, ch: usize, rest: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for b in 0..batch {
        for c in 0..ch {
            let s = (b * ch + c) * rest;
            let d = c * batch * rest + b * rest;
            out[d..d + rest].copy_from_slice(&src[s..s + rest]);
        }
    }
    out
}

/// `(ch, batch·rest)` → `(batch, ch, rest)`.
pub(crate) fn channel_to_batch_major(src: &[f64], batch: usize, ch: usize, rest: usize) -> Vec<f64> {
    let mut out = vec![0.0; src.len()];
    for c in 0..ch {
        for b in 0..batch {
            let s = c * batch * rest + b * rest;
            let d = (b * ch + c) * rest;
            out[d..d + rest].copy_from_slice(&src[s..s + rest]);
        }
    }
    out
}
