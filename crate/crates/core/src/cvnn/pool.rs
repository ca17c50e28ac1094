use super::tensor::CTensor;
use crate::error::{Error, Result};

fn pooled_dims(shape: &[usize], window: usize) -> Result<[usize; 4]> {
    match *shape {
        [b, c, h, w] if window > 0 && h % window == 0 && w % window == 0 => Ok([b, c, h, w]),
        _ => Err(Error::invalid(format!(
            "spatial dims of {shape:?} are not divisible by pooling window {window}"
        ))),
    }
}

/// Passes through the element of largest modulus in every `window×window`
/// block; ties go to the first element in row-major order. Also returns the
/// flat source index of each output element.
pub(crate) fn max_pool_forward(x: &CTensor, window: usize) -> Result<(CTensor, Vec<usize>)> {
    let [b, c, h, w] = pooled_dims(x.shape(), window)?;
    let (ho, wo) = (h / window, w / window);
    let n = b * c * ho * wo;
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    let mut argmax = Vec::with_capacity(n);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = usize::MAX;
                let mut best_mag = f64::NEG_INFINITY;
                for dy in 0..window {
                    for dx in 0..window {
                        let idx = base + (oy * window + dy) * w + ox * window + dx;
                        let mag = x.re()[idx].powi(2) + x.im()[idx].powi(2);
                        if mag > best_mag {
                            best_mag = mag;
                            best = idx;
                        }
                    }
                }
                re.push(x.re()[best]);
                im.push(x.im()[best]);
                argmax.push(best);
            }
        }
    }
    Ok((CTensor::from_parts(&[b, c, ho, wo], re, im)?, argmax))
}

pub fn max_pool(x: &CTensor, window: usize) -> Result<CTensor> {
    max_pool_forward(x, window).map(|(y, _)| y)
}

pub(crate) fn max_pool_backward(in_shape: &[usize], argmax: &[usize], g: &CTensor) -> Result<CTensor> {
    if g.len() != argmax.len() {
        return Err(Error::invalid("pooling upstream gradient has the wrong shape"));
    }
    let mut dx = CTensor::zeros(in_shape);
    let (dr, di) = dx.parts_mut();
    for (k, &src) in argmax.iter().enumerate() {
        dr[src] += g.re()[k];
        di[src] += g.im()[k];
    }
    Ok(dx)
}

/// Nearest-neighbour upsampling, the generator's mirror of [`max_pool`].
pub fn upsample(x: &CTensor, factor: usize) -> Result<CTensor> {
    let [b, c, h, w] = match *x.shape() {
        [b, c, h, w] if factor > 0 => [b, c, h, w],
        _ => return Err(Error::invalid(format!("cannot upsample {:?}", x.shape()))),
    };
    let (ho, wo) = (h * factor, w * factor);
    let mut y = CTensor::zeros(&[b, c, ho, wo]);
    let (yr, yi) = y.parts_mut();
    for plane in 0..b * c {
        for oy in 0..ho {
            for ox in 0..wo {
                let src = plane * h * w + (oy / factor) * w + ox / factor;
                let dst = plane * ho * wo + oy * wo + ox;
                yr[dst] = x.re()[src];
                yi[dst] = x.im()[src];
            }
        }
    }
    Ok(y)
}

pub(crate) fn upsample_backward(in_shape: &[usize], factor: usize, g: &CTensor) -> Result<CTensor> {
    let [b, c, h, w] = match *in_shape {
        [b, c, h, w] => [b, c, h, w],
        _ => return Err(Error::invalid("upsample input must be 4-D")),
    };
    let (ho, wo) = (h * factor, w * factor);
    if g.shape() != [b, c, ho, wo] {
        return Err(Error::invalid("upsample upstream gradient has the wrong shape"));
    }
    let mut dx = CTensor::zeros(in_shape);
    let (dr, di) = dx.parts_mut();
    for plane in 0..b * c {
        for oy in 0..ho {
            for ox in 0..wo {
                let dst = plane * h * w + (oy / factor) * w + ox / factor;
                let src = plane * ho * wo + oy * wo + ox;
                dr[dst] += g.re()[src];
                di[dst] += g.im()[src];
            }
        }
    }
    Ok(dx)
}
