//! Complex batch normalization.
//!
//! Each channel's `(ℜz, ℑz)` pair is centered and whitened with the inverse
//! square root of its 2×2 covariance, then mapped through a trainable
//! symmetric 2×2 matrix `γ` and complex shift `β`.

use super::tensor::CTensor;
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub(crate) channels: usize,
    pub(crate) eps: f64,
    pub(crate) gamma_rr: Vec<f64>,
    pub(crate) gamma_ri: Vec<f64>,
    pub(crate) gamma_ii: Vec<f64>,
    pub(crate) beta_re: Vec<f64>,
    pub(crate) beta_im: Vec<f64>,
    pub(crate) running: ChannelStats,
}

/// Per-channel mean and (unregularized) covariance of `(ℜz, ℑz)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStats {
    pub mean_re: Vec<f64>,
    pub mean_im: Vec<f64>,
    pub var_rr: Vec<f64>,
    pub var_ri: Vec<f64>,
    pub var_ii: Vec<f64>,
}

impl ChannelStats {
    fn identity(channels: usize) -> Self {
        ChannelStats {
            mean_re: vec![0.0; channels],
            mean_im: vec![0.0; channels],
            var_rr: vec![1.0; channels],
            var_ri: vec![0.0; channels],
            var_ii: vec![1.0; channels],
        }
    }

    pub(crate) fn zeros(channels: usize) -> Self {
        ChannelStats {
            mean_re: vec![0.0; channels],
            mean_im: vec![0.0; channels],
            var_rr: vec![0.0; channels],
            var_ri: vec![0.0; channels],
            var_ii: vec![0.0; channels],
        }
    }

    fn fields(&self) -> [&Vec<f64>; 5] {
        [&self.mean_re, &self.mean_im, &self.var_rr, &self.var_ri, &self.var_ii]
    }

    fn fields_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [&mut self.mean_re, &mut self.mean_im, &mut self.var_rr, &mut self.var_ri, &mut self.var_ii]
    }

    /// `self ← keep·self + (1 − keep)·other`
    pub(crate) fn blend(&mut self, other: &ChannelStats, keep: f64) {
        for (dst, src) in self.fields_mut().into_iter().zip(other.fields()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d = keep * *d + (1.0 - keep) * s);
        }
    }

    pub(crate) fn add_scaled(&mut self, other: &ChannelStats, scale: f64) {
        for (dst, src) in self.fields_mut().into_iter().zip(other.fields()) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += scale * s);
        }
    }

    pub(crate) fn as_blocks(&self) -> Vec<&[f64]> {
        self.fields().into_iter().map(Vec::as_slice).collect()
    }

    pub(crate) fn as_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.fields_mut().into_iter().map(Vec::as_mut_slice).collect()
    }
}

/// Closed-form inverse square root of a symmetric positive-definite 2×2
/// matrix `[[a, b], [b, c]]`, with intermediate terms kept for backward.
#[derive(Debug, Clone, Copy)]
struct Whitening {
    a: f64,
    b: f64,
    c: f64,
    s: f64,
    t: f64,
    rr: f64,
    ri: f64,
    ii: f64,
}

impl Whitening {
    fn new(a: f64, b: f64, c: f64) -> Self {
        let s = (a * c - b * b).max(0.0).sqrt();
        let t = (a + c + 2.0 * s).sqrt();
        let q = 1.0 / (s * t);
        Whitening { a, b, c, s, t, rr: (c + s) * q, ri: -b * q, ii: (a + s) * q }
    }

    /// Pulls `∂L/∂W` (for the symmetric entries rr, ri, ii) back to
    /// `∂L/∂(a, b, c)`.
    fn pullback(&self, d_rr: f64, d_ri: f64, d_ii: f64) -> (f64, f64, f64) {
        let Whitening { a, b, c, s, t, .. } = *self;
        let q = 1.0 / (s * t);
        let ds = [c / (2.0 * s), -b / s, a / (2.0 * s)];
        let dt = [(1.0 + 2.0 * ds[0]) / (2.0 * t), ds[1] / t, (1.0 + 2.0 * ds[2]) / (2.0 * t)];
        let dq: Vec<f64> = (0..3).map(|v| -q * (ds[v] / s + dt[v] / t)).collect();
        // Direct partials of the numerators (c + s), −b, (a + s).
        let dnum_rr = [ds[0], ds[1], 1.0 + ds[2]];
        let dnum_ri = [0.0, -1.0, 0.0];
        let dnum_ii = [1.0 + ds[0], ds[1], ds[2]];
        let mut out = [0.0; 3];
        for v in 0..3 {
            let w_rr = dnum_rr[v] * q + (c + s) * dq[v];
            let w_ri = dnum_ri[v] * q - b * dq[v];
            let w_ii = dnum_ii[v] * q + (a + s) * dq[v];
            out[v] = d_rr * w_rr + d_ri * w_ri + d_ii * w_ii;
        }
        (out[0], out[1], out[2])
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache {
    xc_re: Vec<f64>,
    xc_im: Vec<f64>,
    xt_re: Vec<f64>,
    xt_im: Vec<f64>,
    whitening: Vec<Whitening>,
    pub(crate) stats: ChannelStats,
    shape: Vec<usize>,
}

fn layout(shape: &[usize], channels: usize) -> Result<(usize, usize)> {
    if shape.len() < 2 || shape[1] != channels {
        return Err(Error::invalid(format!(
            "batch norm over {channels} channels cannot take input {shape:?}"
        )));
    }
    Ok((shape[0], shape[2..].iter().product()))
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        let g = std::f64::consts::FRAC_1_SQRT_2;
        BatchNorm {
            channels,
            eps: BN_EPS,
            gamma_rr: vec![g; channels],
            gamma_ri: vec![0.0; channels],
            gamma_ii: vec![g; channels],
            beta_re: vec![0.0; channels],
            beta_im: vec![0.0; channels],
            running: ChannelStats::identity(channels),
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn set_gamma(&mut self, rr: f64, ri: f64, ii: f64) {
        self.gamma_rr.iter_mut().for_each(|v| *v = rr);
        self.gamma_ri.iter_mut().for_each(|v| *v = ri);
        self.gamma_ii.iter_mut().for_each(|v| *v = ii);
    }

    pub fn set_beta(&mut self, re: f64, im: f64) {
        self.beta_re.iter_mut().for_each(|v| *v = re);
        self.beta_im.iter_mut().for_each(|v| *v = im);
    }

    pub fn running_stats(&self) -> &ChannelStats {
        &self.running
    }

    fn channel_indices(batch: usize, channels: usize, rest: usize, c: usize) -> impl Iterator<Item = usize> {
        (0..batch).flat_map(move |b| {
            let start = (b * channels + c) * rest;
            start..start + rest
        })
    }

    /// Normalizes with batch statistics.
    pub(crate) fn forward_train(&self, x: &CTensor) -> Result<(CTensor, BnCache)> {
        let (batch, rest) = layout(x.shape(), self.channels)?;
        if batch < 2 {
            return Err(Error::invalid("batch norm needs at least two samples in train mode"));
        }
        let n = (batch * rest) as f64;
        let len = x.len();
        let mut cache = BnCache {
            xc_re: vec![0.0; len],
            xc_im: vec![0.0; len],
            xt_re: vec![0.0; len],
            xt_im: vec![0.0; len],
            whitening: Vec::with_capacity(self.channels),
            stats: ChannelStats::zeros(self.channels),
            shape: x.shape().to_vec(),
        };
        let mut out = CTensor::zeros(x.shape());
        for c in 0..self.channels {
            let idx = || Self::channel_indices(batch, self.channels, rest, c);
            let (mut mr, mut mi) = (0.0, 0.0);
            for k in idx() {
                mr += x.re()[k];
                mi += x.im()[k];
            }
            mr /= n;
            mi /= n;
            let (mut vrr, mut vri, mut vii) = (0.0, 0.0, 0.0);
            for k in idx() {
                let (r, i) = (x.re()[k] - mr, x.im()[k] - mi);
                cache.xc_re[k] = r;
                cache.xc_im[k] = i;
                vrr += r * r;
                vri += r * i;
                vii += i * i;
            }
            vrr /= n;
            vri /= n;
            vii /= n;
            cache.stats.mean_re[c] = mr;
            cache.stats.mean_im[c] = mi;
            cache.stats.var_rr[c] = vrr;
            cache.stats.var_ri[c] = vri;
            cache.stats.var_ii[c] = vii;
            let w = Whitening::new(vrr + self.eps, vri, vii + self.eps);
            let (out_re, out_im) = out.parts_mut();
            for k in idx() {
                let (r, i) = (cache.xc_re[k], cache.xc_im[k]);
                let (tr, ti) = (w.rr * r + w.ri * i, w.ri * r + w.ii * i);
                cache.xt_re[k] = tr;
                cache.xt_im[k] = ti;
                out_re[k] = self.gamma_rr[c] * tr + self.gamma_ri[c] * ti + self.beta_re[c];
                out_im[k] = self.gamma_ri[c] * tr + self.gamma_ii[c] * ti + self.beta_im[c];
            }
            cache.whitening.push(w);
        }
        Ok((out, cache))
    }

    /// Normalizes with the running statistics.
    pub(crate) fn forward_infer(&self, x: &CTensor) -> Result<CTensor> {
        let (batch, rest) = layout(x.shape(), self.channels)?;
        let mut out = CTensor::zeros(x.shape());
        let s = &self.running;
        for c in 0..self.channels {
            let w = Whitening::new(s.var_rr[c] + self.eps, s.var_ri[c], s.var_ii[c] + self.eps);
            let (out_re, out_im) = out.parts_mut();
            for k in Self::channel_indices(batch, self.channels, rest, c) {
                let (r, i) = (x.re()[k] - s.mean_re[c], x.im()[k] - s.mean_im[c]);
                let (tr, ti) = (w.rr * r + w.ri * i, w.ri * r + w.ii * i);
                out_re[k] = self.gamma_rr[c] * tr + self.gamma_ri[c] * ti + self.beta_re[c];
                out_im[k] = self.gamma_ri[c] * tr + self.gamma_ii[c] * ti + self.beta_im[c];
            }
        }
        Ok(out)
    }

    pub(crate) fn backward(&self, cache: &BnCache, g: &CTensor) -> Result<(Vec<Vec<f64>>, CTensor)> {
        if g.shape() != cache.shape.as_slice() {
            return Err(Error::invalid("batch norm upstream gradient has the wrong shape"));
        }
        let (batch, rest) = layout(&cache.shape, self.channels)?;
        let n = (batch * rest) as f64;
        let ch = self.channels;
        let mut grads = vec![vec![0.0; ch]; 5];
        let mut dx = CTensor::zeros(&cache.shape);
        for c in 0..ch {
            let idx = || Self::channel_indices(batch, ch, rest, c);
            let (grr, gri, gii) = (self.gamma_rr[c], self.gamma_ri[c], self.gamma_ii[c]);
            let w = cache.whitening[c];
            let (mut d_wrr, mut d_wri, mut d_wii) = (0.0, 0.0, 0.0);
            for k in idx() {
                let (gr, gi) = (g.re()[k], g.im()[k]);
                let (tr, ti) = (cache.xt_re[k], cache.xt_im[k]);
                grads[0][c] += gr * tr;
                grads[1][c] += gr * ti + gi * tr;
                grads[2][c] += gi * ti;
                grads[3][c] += gr;
                grads[4][c] += gi;
                let (big_r, big_i) = (grr * gr + gri * gi, gri * gr + gii * gi);
                let (xr, xi) = (cache.xc_re[k], cache.xc_im[k]);
                d_wrr += big_r * xr;
                d_wri += big_r * xi + big_i * xr;
                d_wii += big_i * xi;
            }
            let (d_a, d_b, d_c) = w.pullback(d_wrr, d_wri, d_wii);
            let (mut sum_r, mut sum_i) = (0.0, 0.0);
            let (dxr, dxi) = dx.parts_mut();
            for k in idx() {
                let (gr, gi) = (g.re()[k], g.im()[k]);
                let (big_r, big_i) = (grr * gr + gri * gi, gri * gr + gii * gi);
                let (xr, xi) = (cache.xc_re[k], cache.xc_im[k]);
                let r = w.rr * big_r + w.ri * big_i + (2.0 * xr * d_a + xi * d_b) / n;
                let i = w.ri * big_r + w.ii * big_i + (2.0 * xi * d_c + xr * d_b) / n;
                dxr[k] = r;
                dxi[k] = i;
                sum_r += r;
                sum_i += i;
            }
            let (mr, mi) = (sum_r / n, sum_i / n);
            for k in idx() {
                dxr[k] -= mr;
                dxi[k] -= mi;
            }
        }
        Ok((grads, dx))
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        vec![&self.gamma_rr, &self.gamma_ri, &self.gamma_ii, &self.beta_re, &self.beta_im]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.gamma_rr,
            &mut self.gamma_ri,
            &mut self.gamma_ii,
            &mut self.beta_re,
            &mut self.beta_im,
        ]
    }
}
