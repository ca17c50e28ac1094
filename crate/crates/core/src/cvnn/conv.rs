use rand::Rng;

use super::gemm::{batch_to_channel_major, cgemm, channel_to_batch_major, col2im, im2col, CMat};
use super::init::glorot;
use super::tensor::CTensor;
use crate::error::{Error, Result};

/// Complex 2-D convolution, stride 1, no padding.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub(crate) in_ch: usize,
    pub(crate) out_ch: usize,
    pub(crate) kernel: usize,
    /// `(out_ch, in_ch, k, k)`
    pub(crate) weight: CTensor,
    pub(crate) bias: CTensor,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvCache {
    cols_re: Vec<f64>,
    cols_im: Vec<f64>,
    in_shape: [usize; 4],
}

fn spatial_shape(x: &CTensor, ch: usize, kernel: usize) -> Result<[usize; 4]> {
    match *x.shape() {
        [b, c, h, w] if c == ch && h >= kernel && w >= kernel => Ok([b, c, h, w]),
        _ => Err(Error::invalid(format!(
            "expected (batch, {ch}, h ≥ {kernel}, w ≥ {kernel}) input, got {:?}",
            x.shape()
        ))),
    }
}

fn channel_sums(g: &[f64], batch: usize, ch: usize, rest: usize) -> Vec<f64> {
    let mut out = vec![0.0; ch];
    for b in 0..batch {
        for (c, o) in out.iter_mut().enumerate() {
            *o += g[(b * ch + c) * rest..(b * ch + c + 1) * rest].iter().sum::<f64>();
        }
    }
    out
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let kk = kernel * kernel;
        let weight = glorot(&[out_ch, in_ch, kernel, kernel], in_ch * kk, out_ch * kk, rng);
        Conv2d { in_ch, out_ch, kernel, weight, bias: CTensor::zeros(&[out_ch]) }
    }

    pub fn from_weights(weight: CTensor, bias: CTensor) -> Result<Self> {
        match *weight.shape() {
            [o, i, k, k2] if k == k2 && k > 0 && bias.shape() == [o] => {
                Ok(Conv2d { in_ch: i, out_ch: o, kernel: k, weight, bias })
            }
            _ => Err(Error::invalid("conv weight must be (out, in, k, k) with bias (out)")),
        }
    }

    pub fn weight(&self) -> &CTensor {
        &self.weight
    }

    pub fn bias(&self) -> &CTensor {
        &self.bias
    }

    pub fn output_shape(&self, in_shape: &[usize]) -> Vec<usize> {
        vec![in_shape[0], self.out_ch, in_shape[2] + 1 - self.kernel, in_shape[3] + 1 - self.kernel]
    }

    pub(crate) fn forward(&self, x: &CTensor) -> Result<(CTensor, ConvCache)> {
        let [b, c, h, w] = spatial_shape(x, self.in_ch, self.kernel)?;
        let k = self.kernel;
        let (ho, wo) = (h + 1 - k, w + 1 - k);
        let n = b * ho * wo;
        let cols_re = im2col(x.re(), b, c, h, w, k);
        let cols_im = im2col(x.im(), b, c, h, w, k);
        let kdim = c * k * k;
        let mut yr = vec![0.0; self.out_ch * n];
        let mut yi = vec![0.0; self.out_ch * n];
        cgemm(
            1.0,
            CMat::new(self.weight.re(), self.weight.im(), self.out_ch, kdim),
            CMat::new(&cols_re, &cols_im, kdim, n),
            0.0,
            &mut yr,
            &mut yi,
        );
        let rest = ho * wo;
        for co in 0..self.out_ch {
            let (br, bi) = (self.bias.re()[co], self.bias.im()[co]);
            yr[co * n..(co + 1) * n].iter_mut().for_each(|v| *v += br);
            yi[co * n..(co + 1) * n].iter_mut().for_each(|v| *v += bi);
        }
        let out = CTensor::from_parts(
            &[b, self.out_ch, ho, wo],
            channel_to_batch_major(&yr, b, self.out_ch, rest),
            channel_to_batch_major(&yi, b, self.out_ch, rest),
        )?;
        Ok((out, ConvCache { cols_re, cols_im, in_shape: [b, c, h, w] }))
    }

    pub(crate) fn backward(&self, cache: &ConvCache, g: &CTensor) -> Result<(Vec<Vec<f64>>, CTensor)> {
        let [b, c, h, w] = cache.in_shape;
        let k = self.kernel;
        let (ho, wo) = (h + 1 - k, w + 1 - k);
        if g.shape() != [b, self.out_ch, ho, wo] {
            return Err(Error::invalid("conv upstream gradient has the wrong shape"));
        }
        let rest = ho * wo;
        let n = b * rest;
        let kdim = c * k * k;
        let gr = batch_to_channel_major(g.re(), b, self.out_ch, rest);
        let gi = batch_to_channel_major(g.im(), b, self.out_ch, rest);
        let gmat = CMat::new(&gr, &gi, self.out_ch, n);

        let mut dw_re = vec![0.0; self.out_ch * kdim];
        let mut dw_im = vec![0.0; self.out_ch * kdim];
        cgemm(1.0, gmat, CMat::new(&cache.cols_re, &cache.cols_im, kdim, n).t().conj(), 0.0, &mut dw_re, &mut dw_im);

        let mut dc_re = vec![0.0; kdim * n];
        let mut dc_im = vec![0.0; kdim * n];
        cgemm(
            1.0,
            CMat::new(self.weight.re(), self.weight.im(), self.out_ch, kdim).t().conj(),
            gmat,
            0.0,
            &mut dc_re,
            &mut dc_im,
        );
        let dx = CTensor::from_parts(
            &cache.in_shape,
            col2im(&dc_re, b, c, h, w, k),
            col2im(&dc_im, b, c, h, w, k),
        )?;
        let db_re = channel_sums(g.re(), b, self.out_ch, rest);
        let db_im = channel_sums(g.im(), b, self.out_ch, rest);
        Ok((vec![dw_re, dw_im, db_re, db_im], dx))
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        vec![self.weight.re(), self.weight.im(), self.bias.re(), self.bias.im()]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let (wr, wi) = self.weight.parts_mut();
        let (br, bi) = self.bias.parts_mut();
        vec![wr, wi, br, bi]
    }
}

/// Transposed counterpart of [`Conv2d`] used by the generator: every input
/// pixel spreads a `k×k` patch, growing each spatial side by `k - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub(crate) in_ch: usize,
    pub(crate) out_ch: usize,
    pub(crate) kernel: usize,
    /// `(in_ch, out_ch, k, k)`
    pub(crate) weight: CTensor,
    pub(crate) bias: CTensor,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvTransposeCache {
    x_re: Vec<f64>,
    x_im: Vec<f64>,
    in_shape: [usize; 4],
}

impl ConvTranspose2d {
    pub fn new<R: Rng + ?Sized>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let kk = kernel * kernel;
        let weight = glorot(&[in_ch, out_ch, kernel, kernel], in_ch * kk, out_ch * kk, rng);
        ConvTranspose2d { in_ch, out_ch, kernel, weight, bias: CTensor::zeros(&[out_ch]) }
    }

    pub fn output_shape(&self, in_shape: &[usize]) -> Vec<usize> {
        vec![in_shape[0], self.out_ch, in_shape[2] + self.kernel - 1, in_shape[3] + self.kernel - 1]
    }

    pub(crate) fn forward(&self, x: &CTensor) -> Result<(CTensor, ConvTransposeCache)> {
        let [b, c, h, w] = spatial_shape(x, self.in_ch, 1)?;
        let k = self.kernel;
        let rest = h * w;
        let n = b * rest;
        let m = self.out_ch * k * k;
        let x_re = batch_to_channel_major(x.re(), b, c, rest);
        let x_im = batch_to_channel_major(x.im(), b, c, rest);
        let mut tr = vec![0.0; m * n];
        let mut ti = vec![0.0; m * n];
        cgemm(
            1.0,
            CMat::new(self.weight.re(), self.weight.im(), c, m).t(),
            CMat::new(&x_re, &x_im, c, n),
            0.0,
            &mut tr,
            &mut ti,
        );
        let (ho, wo) = (h + k - 1, w + k - 1);
        let mut yr = col2im(&tr, b, self.out_ch, ho, wo, k);
        let mut yi = col2im(&ti, b, self.out_ch, ho, wo, k);
        let plane = ho * wo;
        for bb in 0..b {
            for co in 0..self.out_ch {
                let s = (bb * self.out_ch + co) * plane;
                let (br, bi) = (self.bias.re()[co], self.bias.im()[co]);
                yr[s..s + plane].iter_mut().for_each(|v| *v += br);
                yi[s..s + plane].iter_mut().for_each(|v| *v += bi);
            }
        }
        let out = CTensor::from_parts(&[b, self.out_ch, ho, wo], yr, yi)?;
        Ok((out, ConvTransposeCache { x_re, x_im, in_shape: [b, c, h, w] }))
    }

    pub(crate) fn backward(
        &self,
        cache: &ConvTransposeCache,
        g: &CTensor,
    ) -> Result<(Vec<Vec<f64>>, CTensor)> {
        let [b, c, h, w] = cache.in_shape;
        let k = self.kernel;
        let (ho, wo) = (h + k - 1, w + k - 1);
        if g.shape() != [b, self.out_ch, ho, wo] {
            return Err(Error::invalid("transposed conv upstream gradient has the wrong shape"));
        }
        let rest = h * w;
        let n = b * rest;
        let m = self.out_ch * k * k;
        let dt_re = im2col(g.re(), b, self.out_ch, ho, wo, k);
        let dt_im = im2col(g.im(), b, self.out_ch, ho, wo, k);
        let dt = CMat::new(&dt_re, &dt_im, m, n);

        let mut dw_re = vec![0.0; c * m];
        let mut dw_im = vec![0.0; c * m];
        cgemm(1.0, CMat::new(&cache.x_re, &cache.x_im, c, n).conj(), dt.t(), 0.0, &mut dw_re, &mut dw_im);

        let mut dx_re = vec![0.0; c * n];
        let mut dx_im = vec![0.0; c * n];
        cgemm(
            1.0,
            CMat::new(self.weight.re(), self.weight.im(), c, m).conj(),
            dt,
            0.0,
            &mut dx_re,
            &mut dx_im,
        );
        let dx = CTensor::from_parts(
            &cache.in_shape,
            channel_to_batch_major(&dx_re, b, c, rest),
            channel_to_batch_major(&dx_im, b, c, rest),
        )?;
        let db_re = channel_sums(g.re(), b, self.out_ch, ho * wo);
        let db_im = channel_sums(g.im(), b, self.out_ch, ho * wo);
        Ok((vec![dw_re, dw_im, db_re, db_im], dx))
    }

    pub(crate) fn params(&self) -> Vec<&[f64]> {
        vec![self.weight.re(), self.weight.im(), self.bias.re(), self.bias.im()]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let (wr, wi) = self.weight.parts_mut();
        let (br, bi) = self.bias.parts_mut();
        vec![wr, wi, br, bi]
    }
}
