//! Central finite-difference checks of the analytic reverse pass.

use rand::Rng;

use super::network::Network;
use super::tensor::CTensor;
use crate::error::Result;

/// Worst relative error seen in one check.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradCheck {
    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel_error: self.max_rel_error.max(other.max_rel_error),
            checked: self.checked + other.checked,
        }
    }
}

/// `|a − n| / max(|a|, |n|, floor)`; the floor keeps near-zero entries from
/// turning rounding noise into large ratios.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Random linear probe `L(y) = Σ aₖℜyₖ + bₖℑyₖ`, so `∂L/∂y = a + ib`.
fn probe<R: Rng + ?Sized>(shape: &[usize], rng: &mut R) -> CTensor {
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    CTensor::from_parts(shape, re, im).expect("shape matches")
}

fn dot(a: &CTensor, b: &CTensor) -> f64 {
    a.re().iter().zip(b.re()).chain(a.im().iter().zip(b.im())).map(|(x, y)| x * y).sum()
}

/// Compares analytic gradients of a random linear probe of the training
/// forward pass against central differences with step `h`, on `samples`
/// random parameter coordinates and `samples` random input coordinates.
pub fn check_network<R: Rng + ?Sized>(
    net: &Network,
    x: &CTensor,
    h: f64,
    samples: usize,
    floor: f64,
    rng: &mut R,
) -> Result<GradCheck> {
    let (y, tape) = net.forward_train(x)?;
    let w = probe(y.shape(), rng);
    let back = net.backward(&tape, &w)?;
    let loss = |n: &Network, x: &CTensor| -> Result<f64> { Ok(dot(&n.forward_train(x)?.0, &w)) };

    let mut out = GradCheck::default();
    let mut probe_net = net.clone();
    let sizes: Vec<usize> = net.params().iter().map(|b| b.len()).collect();
    let total: usize = sizes.iter().sum();
    for _ in 0..samples.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut block = 0;
        while flat >= sizes[block] {
            flat -= sizes[block];
            block += 1;
        }
        let orig = net.params()[block][flat];
        probe_net.params_mut()[block][flat] = orig + h;
        let up = loss(&probe_net, x)?;
        probe_net.params_mut()[block][flat] = orig - h;
        let down = loss(&probe_net, x)?;
        probe_net.params_mut()[block][flat] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = relative_error(back.grads.blocks[block][flat], numeric, floor);
        out.max_rel_error = out.max_rel_error.max(err);
        out.checked += 1;
    }

    let mut xp = x.clone();
    for _ in 0..samples.min(2 * x.len()) {
        let k = rng.random_range(0..x.len());
        let imag = rng.random_bool(0.5);
        let (part, analytic) = if imag {
            (xp.im_mut(), back.input_grad.im()[k])
        } else {
            (xp.re_mut(), back.input_grad.re()[k])
        };
        let orig = part[k];
        part[k] = orig + h;
        let up = loss(net, &xp)?;
        let part = if imag { xp.im_mut() } else { xp.re_mut() };
        part[k] = orig - h;
        let down = loss(net, &xp)?;
        let part = if imag { xp.im_mut() } else { xp.re_mut() };
        part[k] = orig;
        let numeric = (up - down) / (2.0 * h);
        out.max_rel_error = out.max_rel_error.max(relative_error(analytic, numeric, floor));
        out.checked += 1;
    }
    Ok(out)
}
