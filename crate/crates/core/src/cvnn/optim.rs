use serde::{Deserialize, Serialize};

use super::network::{Grads, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    RmsProp,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rmsprop" => Ok(OptimizerKind::RmsProp),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::invalid(format!("unknown optimizer '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// RMSProp squared-gradient decay; also Adam's second-moment β₂ is fixed
    /// at 0.999 and first-moment β₁ at 0.9.
    pub rho: f64,
    pub eps: f64,
    /// Elementwise gradient clip to `[-c, c]`.
    pub grad_clip: Option<f64>,
    /// Elementwise parameter clip to `[-c, c]` after each step.
    pub weight_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            kind: OptimizerKind::RmsProp,
            lr: 1e-4,
            rho: 0.9,
            eps: 1e-8,
            grad_clip: Some(1.0),
            weight_clip: None,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;

#[derive(Debug, Clone)]
pub struct Optimizer {
    config: OptimizerConfig,
    lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, net: &Network) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|b| vec![0.0; b.len()]).collect();
        Optimizer { config, lr: config.lr, first: zeros.clone(), second: zeros, steps: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step(&mut self, net: &mut Network, grads: &Grads) -> Result<()> {
        let mut params = net.params_mut();
        if params.len() != grads.blocks.len() || params.len() != self.second.len() {
            return Err(Error::invalid("gradient blocks do not match the network"));
        }
        self.steps += 1;
        let c = self.config;
        let bias1 = 1.0 - ADAM_BETA1.powi(self.steps.min(i32::MAX as u64) as i32);
        let bias2 = 1.0 - ADAM_BETA2.powi(self.steps.min(i32::MAX as u64) as i32);
        for (k, block) in params.iter_mut().enumerate() {
            let g = &grads.blocks[k];
            if g.len() != block.len() {
                return Err(Error::invalid("gradient block length mismatch"));
            }
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..block.len() {
                let mut gi = g[i];
                if let Some(clip) = c.grad_clip {
                    gi = gi.clamp(-clip, clip);
                }
                match c.kind {
                    OptimizerKind::RmsProp => {
                        v[i] = c.rho * v[i] + (1.0 - c.rho) * gi * gi;
                        block[i] -= self.lr * gi / (v[i].sqrt() + c.eps);
                    }
                    OptimizerKind::Adam => {
                        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
                        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
                        let mh = m[i] / bias1;
                        let vh = v[i] / bias2;
                        block[i] -= self.lr * mh / (vh.sqrt() + c.eps);
                    }
                }
                if let Some(w) = c.weight_clip {
                    block[i] = block[i].clamp(-w, w);
                }
            }
        }
        Ok(())
    }
}
