use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::CTensor;

/// Complex Glorot initialization: real and imaginary parts are i.i.d.
/// Gaussian with variance `1 / (2·(fan_in + fan_out))`.
pub(crate) fn glorot<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> CTensor {
    let n: usize = shape.iter().product();
    let std = (1.0 / (2.0 * (fan_in + fan_out) as f64)).sqrt();
    let normal = Normal::new(0.0, std).expect("finite standard deviation");
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for _ in 0..n {
        re.push(normal.sample(rng));
        im.push(normal.sample(rng));
    }
    CTensor::from_parts(shape, re, im).expect("shape matches element count")
}
