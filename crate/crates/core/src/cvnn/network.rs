//! Sequential complex network with an explicit tape for reverse mode.

use super::batch_norm::{BatchNorm, BnCache, ChannelStats};
use super::conv::{Conv2d, ConvCache, ConvTranspose2d, ConvTransposeCache};
use super::elementwise::{crelu, crelu_backward, modulus, modulus_backward};
use super::linear::Linear;
use super::pool::{max_pool_backward, max_pool_forward, upsample, upsample_backward};
use super::tensor::CTensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    ConvTranspose2d(ConvTranspose2d),
    Linear(Linear),
    CRelu,
    BatchNorm(BatchNorm),
    /// Keeps the element of largest modulus in each `window × window` tile.
    MaxPool { window: usize },
    /// Nearest-neighbour upsampling.
    Upsample { factor: usize },
    /// Per-sample reshape; the batch axis is kept.
    Reshape { shape: Vec<usize> },
    Modulus,
}

#[derive(Debug, Clone)]
enum Saved {
    Conv(ConvCache),
    ConvT(ConvTransposeCache),
    Input(CTensor),
    Bn(BnCache),
    Pool { in_shape: Vec<usize>, argmax: Vec<usize> },
    Shape(Vec<usize>),
}

/// Intermediate values recorded by [`Network::forward_train`], consumed by
/// [`Network::backward`].
#[derive(Debug, Clone, Default)]
pub struct Tape {
    saved: Vec<Saved>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.saved.is_empty()
    }

    fn bn_stats(&self) -> impl Iterator<Item = &ChannelStats> {
        self.saved.iter().filter_map(|s| match s {
            Saved::Bn(c) => Some(&c.stats),
            _ => None,
        })
    }
}

/// Parameter gradients, one block per entry of [`Network::params`].
/// Each block holds `∂L/∂ℜθ` or `∂L/∂ℑθ` for a split real/imaginary array.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub blocks: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Network) -> Self {
        Grads { blocks: net.params().iter().map(|b| vec![0.0; b.len()]).collect() }
    }

    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.blocks.iter_mut().flatten().for_each(|v| *v *= s);
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug)]
pub struct Backward {
    pub grads: Grads,
    pub input_grad: CTensor,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Self {
        Network { layers }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Inference forward pass; batch norm uses running statistics.
    pub fn forward(&self, x: &CTensor) -> Result<CTensor> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match layer {
                Layer::Conv2d(l) => l.forward(&cur)?.0,
                Layer::ConvTranspose2d(l) => l.forward(&cur)?.0,
                Layer::Linear(l) => l.forward(&cur)?,
                Layer::CRelu => crelu(&cur),
                Layer::BatchNorm(l) => l.forward_infer(&cur)?,
                Layer::MaxPool { window } => max_pool_forward(&cur, *window)?.0,
                Layer::Upsample { factor } => upsample(&cur, *factor)?,
                Layer::Reshape { shape } => reshape_batch(cur, shape)?,
                Layer::Modulus => modulus(&cur),
            };
        }
        Ok(cur)
    }

    /// Training forward pass; batch norm uses batch statistics. Running
    /// statistics are not touched, see [`Network::absorb_batch_stats`].
    pub fn forward_train(&self, x: &CTensor) -> Result<(CTensor, Tape)> {
        let mut cur = x.clone();
        let mut saved = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (next, s) = match layer {
                Layer::Conv2d(l) => {
                    let (y, c) = l.forward(&cur)?;
                    (y, Saved::Conv(c))
                }
                Layer::ConvTranspose2d(l) => {
                    let (y, c) = l.forward(&cur)?;
                    (y, Saved::ConvT(c))
                }
                Layer::Linear(l) => (l.forward(&cur)?, Saved::Input(cur)),
                Layer::CRelu => (crelu(&cur), Saved::Input(cur)),
                Layer::BatchNorm(l) => {
                    let (y, c) = l.forward_train(&cur)?;
                    (y, Saved::Bn(c))
                }
                Layer::MaxPool { window } => {
                    let (y, argmax) = max_pool_forward(&cur, *window)?;
                    (y, Saved::Pool { in_shape: cur.shape().to_vec(), argmax })
                }
                Layer::Upsample { factor } => {
                    let shape = cur.shape().to_vec();
                    (upsample(&cur, *factor)?, Saved::Shape(shape))
                }
                Layer::Reshape { shape } => {
                    let old = cur.shape().to_vec();
                    (reshape_batch(cur, shape)?, Saved::Shape(old))
                }
                Layer::Modulus => (modulus(&cur), Saved::Input(cur)),
            };
            cur = next;
            saved.push(s);
        }
        Ok((cur, Tape { saved }))
    }

    /// Reverse pass for upstream gradient `g = ∂L/∂ℜy + i·∂L/∂ℑy`.
    pub fn backward(&self, tape: &Tape, g: &CTensor) -> Result<Backward> {
        if tape.saved.len() != self.layers.len() || (tape.is_empty() && !self.layers.is_empty()) {
            return Err(Error::InvalidState("backward needs the tape of a training forward pass".into()));
        }
        let mut blocks_rev: Vec<Vec<Vec<f64>>> = Vec::with_capacity(self.layers.len());
        let mut cur = g.clone();
        for (layer, saved) in self.layers.iter().zip(&tape.saved).rev() {
            let (pg, next) = match (layer, saved) {
                (Layer::Conv2d(l), Saved::Conv(c)) => l.backward(c, &cur)?,
                (Layer::ConvTranspose2d(l), Saved::ConvT(c)) => l.backward(c, &cur)?,
                (Layer::Linear(l), Saved::Input(x)) => l.backward(x, &cur)?,
                (Layer::CRelu, Saved::Input(x)) => (vec![], crelu_backward(x, &cur)?),
                (Layer::BatchNorm(l), Saved::Bn(c)) => l.backward(c, &cur)?,
                (Layer::MaxPool { .. }, Saved::Pool { in_shape, argmax }) => {
                    (vec![], max_pool_backward(in_shape, argmax, &cur)?)
                }
                (Layer::Upsample { factor }, Saved::Shape(s)) => {
                    (vec![], upsample_backward(s, *factor, &cur)?)
                }
                (Layer::Reshape { .. }, Saved::Shape(s)) => (vec![], cur.reshape(s)?),
                (Layer::Modulus, Saved::Input(x)) => (vec![], modulus_backward(x, &cur)?),
                _ => return Err(Error::InvalidState("tape does not match the network".into())),
            };
            blocks_rev.push(pg);
            cur = next;
        }
        let blocks = blocks_rev.into_iter().rev().flatten().collect();
        Ok(Backward { grads: Grads { blocks }, input_grad: cur })
    }

    /// Trainable parameter blocks, in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv2d(l) => l.params(),
                Layer::ConvTranspose2d(l) => l.params(),
                Layer::Linear(l) => l.params(),
                Layer::BatchNorm(l) => l.params(),
                _ => vec![],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Conv2d(l) => l.params_mut(),
                Layer::ConvTranspose2d(l) => l.params_mut(),
                Layer::Linear(l) => l.params_mut(),
                Layer::BatchNorm(l) => l.params_mut(),
                _ => vec![],
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|b| b.len()).sum()
    }

    /// Batch-norm running statistics as flat blocks.
    pub fn running_stats(&self) -> Vec<&[f64]> {
        self.batch_norms().flat_map(|bn| bn.running.as_blocks()).collect()
    }

    pub fn running_stats_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .filter_map(|l| match l {
                Layer::BatchNorm(bn) => Some(bn),
                _ => None,
            })
            .flat_map(|bn| bn.running.as_blocks_mut())
            .collect()
    }

    fn batch_norms(&self) -> impl Iterator<Item = &BatchNorm> {
        self.layers.iter().filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }

    fn batch_norms_mut(&mut self) -> impl Iterator<Item = &mut BatchNorm> {
        self.layers.iter_mut().filter_map(|l| match l {
            Layer::BatchNorm(bn) => Some(bn),
            _ => None,
        })
    }

    /// Exponential moving average of running statistics towards the batch
    /// statistics recorded in `tape`: `running ← m·running + (1 − m)·batch`.
    pub fn absorb_batch_stats(&mut self, tape: &Tape, momentum: f64) {
        for (bn, stats) in self.batch_norms_mut().zip(tape.bn_stats()) {
            bn.running.blend(stats, momentum);
        }
    }
}

fn reshape_batch(x: CTensor, per_sample: &[usize]) -> Result<CTensor> {
    let mut shape = vec![x.batch()];
    shape.extend_from_slice(per_sample);
    x.reshape(&shape)
}

/// Pools batch statistics from several training-mode passes into
/// population statistics (moment matching, weighted by batch size).
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    // Per layer: Σn·mean and Σn·(cov + mean·meanᵀ).
    sums: Vec<ChannelStats>,
    count: f64,
}

impl StatsAccumulator {
    pub fn new(net: &Network) -> Self {
        StatsAccumulator {
            sums: net.batch_norms().map(|bn| ChannelStats::zeros(bn.channels())).collect(),
            count: 0.0,
        }
    }

    pub fn add(&mut self, tape: &Tape, batch: usize) {
        let n = batch as f64;
        for (acc, s) in self.sums.iter_mut().zip(tape.bn_stats()) {
            let mut raw = s.clone();
            for c in 0..raw.mean_re.len() {
                let (mr, mi) = (s.mean_re[c], s.mean_im[c]);
                raw.var_rr[c] += mr * mr;
                raw.var_ri[c] += mr * mi;
                raw.var_ii[c] += mi * mi;
            }
            acc.add_scaled(&raw, n);
        }
        self.count += n;
    }

    /// Overwrites the running statistics of `net`. No-op if nothing was added.
    pub fn apply(&self, net: &mut Network) {
        if self.count == 0.0 {
            return;
        }
        for (bn, acc) in net.batch_norms_mut().zip(&self.sums) {
            let r = &mut bn.running;
            for c in 0..acc.mean_re.len() {
                let (mr, mi) = (acc.mean_re[c] / self.count, acc.mean_im[c] / self.count);
                r.mean_re[c] = mr;
                r.mean_im[c] = mi;
                r.var_rr[c] = acc.var_rr[c] / self.count - mr * mr;
                r.var_ri[c] = acc.var_ri[c] / self.count - mr * mi;
                r.var_ii[c] = acc.var_ii[c] / self.count - mi * mi;
            }
        }
    }
}
