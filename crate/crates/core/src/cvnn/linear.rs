use rand::Rng;

use super::gemm::{cgemm, CMat};
use super::init::glorot;
use super::tensor::CTensor;
use crate::error::{Error, Result};

/// Complex fully-connected layer `y = W·x + b` applied per batch row.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub(crate) in_features: usize,
    pub(crate) out_features: usize,
    /// `(out, in)`
    pub(crate) weight: CTensor,
    pub(crate) bias: CTensor,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(in_features: usize, out_features: usize, rng: &mut R) -> Self {
        Linear {
            in_features,
            out_features,
            weight: glorot(&[out_features, in_features], in_features, out_features, rng),
            bias: CTensor::zeros(&[out_features]),
        }
    }

    pub fn from_weights(weight: CTensor, bias: CTensor) -> Result<Self> {
        match *weight.shape() {
            [o, i] if bias.shape() == [o] => {
                Ok(Linear { in_features: i, out_features: o, weight, bias })
            }
            _ => Err(Error::invalid("linear weight must be (out, in) with bias (out)")),
        }
    }

    pub fn weight(&self) -> &CTensor {
        &self.weight
    }

    pub fn bias(&self) -> &CTensor {
        &self.bias
    }

    pub(crate) fn forward(&self, x: &CTensor) -> Result<CTensor> {
        let b = match *x.shape() {
            [b, f] if f == self.in_features => b,
            _ => {
                return Err(Error::invalid(format!(
                    "expected (batch, {}) input, got {:?}",
                    self.in_features,
                    x.shape()
                )))
            }
        };
        let o = self.out_features;
        let mut yr = Vec::with_capacity(b * o);
        let mut yi = Vec::with_capacity(b * o);
        for _ in 0..b {
            yr.extend_from_slice(self.bias.re());
            yi.extend_from_slice(self.bias.im());
        }
        cgemm(
            1.0,
            CMat::new(x.re(), x.im(), b, self.in_features),
            CMat::new(self.weight.re(), self.weight.im(), o, self.in_features).t(),
            1.0,
            &mut yr,
            &mut yi,
        );
        CTensor::from_parts(&[b, o], yr, yi)
    }

    pub(crate) fn backward(&self, input: &CTensor, g: &CTensor) -> Result<(Vec<Vec<f64>>, CTensor)> {
        let b = input.batch();
        let (i, o) = (self.in_features, self.out_features);
        if g.shape() != [b, o] {
            return Err(Error::invalid("linear upstream gradient has the wrong shape"));
        }
        let gmat = CMat::new(g.re(), g.im(), b, o);
        let mut dw_re = vec![0.0; o * i];
        let mut dw_im = vec![0.0; o * i];
        cgemm(1.0, gmat.t(), CMat::new(input.re(), input.im(), b, i).conj(), 0.0, &mut dw_re, &mut dw_im);
        let mut dx_re = vec![0.0; b * i];
        let mut dx_im = vec![0.0; b * i];
        cgemm(1.0, gmat, CMat::new(self.weight.re(), self.weight.im(), o, i).conj(), 0.0, &mut dx_re, &mut dx_im);
        let mut db_re = vec![0.0; o];
        let mut db_im = vec![0.0; o];
        for row in 0..b {
            for k in 0..o {
                db_re[k] += g.re()[row * o + k];
                db_im[k] += g.im()[row * o + k];
            }
        }
        let dx = CTensor::from_parts(&[b, i], dx_re, dx_im)?;
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

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> CTensor {
        let n: usize = shape.iter().product();
        let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let im = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        CTensor::from_parts(shape, re, im).unwrap()
    }

    fn diagonal(n: usize, z: Complex64) -> Linear {
        let mut w = CTensor::zeros(&[n, n]);
        for k in 0..n {
            w.set(k * n + k, z);
        }
        Linear::from_weights(w, CTensor::zeros(&[n])).unwrap()
    }

    #[test]
    fn identity_weight_passes_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&[3, 4], &mut rng);
        assert_eq!(diagonal(4, Complex64::new(1.0, 0.0)).forward(&x).unwrap(), x);
    }

    #[test]
    fn diagonal_i_rotates() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&[2, 3], &mut rng);
        let y = diagonal(3, Complex64::new(0.0, 1.0)).forward(&x).unwrap();
        for k in 0..x.len() {
            assert_eq!(y.get(k), x.get(k) * Complex64::new(0.0, 1.0));
        }
    }

    #[test]
    fn matches_explicit_complex_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layer = Linear { bias: random(&[5], &mut rng), ..Linear::new(7, 5, &mut rng) };
        let x = random(&[4, 7], &mut rng);
        let y = layer.forward(&x).unwrap();
        let (w, xs) = (layer.weight.to_complex(), x.to_complex());
        let mut worst: f64 = 0.0;
        for b in 0..4 {
            for o in 0..5 {
                let mut acc = layer.bias.get(o);
                for i in 0..7 {
                    acc += w[o * 7 + i] * xs[b * 7 + i];
                }
                worst = worst.max((acc - y.get(b * 5 + o)).norm());
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn rejects_wrong_feature_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = Linear::new(3, 2, &mut rng);
        assert!(layer.forward(&random(&[1, 4], &mut rng)).is_err());
    }
}
