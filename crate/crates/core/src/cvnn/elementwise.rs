use super::tensor::CTensor;
use crate::error::{Error, Result};

/// `ReLU(ℜz) + i·ReLU(ℑz)`.
pub fn crelu(x: &CTensor) -> CTensor {
    let re = x.re().iter().map(|&v| v.max(0.0)).collect();
    let im = x.im().iter().map(|&v| v.max(0.0)).collect();
    CTensor::from_parts(x.shape(), re, im).expect("same shape")
}

pub(crate) fn crelu_backward(input: &CTensor, g: &CTensor) -> Result<CTensor> {
    if input.shape() != g.shape() {
        return Err(Error::invalid("CReLU upstream gradient has the wrong shape"));
    }
    let pass = |x: &[f64], g: &[f64]| -> Vec<f64> {
        x.iter().zip(g).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect()
    };
    CTensor::from_parts(input.shape(), pass(input.re(), g.re()), pass(input.im(), g.im()))
}

/// `|z|`, returned as a tensor with zero imaginary part.
pub fn modulus(x: &CTensor) -> CTensor {
    let re = x.re().iter().zip(x.im()).map(|(&r, &i)| r.hypot(i)).collect();
    CTensor::from_parts(x.shape(), re, vec![0.0; x.len()]).expect("same shape")
}

pub(crate) fn modulus_backward(input: &CTensor, g: &CTensor) -> Result<CTensor> {
    if input.shape() != g.shape() {
        return Err(Error::invalid("modulus upstream gradient has the wrong shape"));
    }
    let n = input.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for k in 0..n {
        let (zr, zi) = (input.re()[k], input.im()[k]);
        let m = zr.hypot(zi);
        // Subgradient 0 at the origin.
        if m > 0.0 {
            re[k] = g.re()[k] * zr / m;
            im[k] = g.re()[k] * zi / m;
        }
    }
    CTensor::from_parts(input.shape(), re, im)
}
