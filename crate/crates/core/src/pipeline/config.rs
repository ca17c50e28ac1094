//! Flat `key = value` training configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are
//! rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::cvnn::{OptimizerConfig, OptimizerKind};
use crate::error::{Error, Result};
use crate::model::{ArchitectureConfig, LossWeights};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub arch: ArchitectureConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Per-epoch multiplicative learning-rate decay.
    pub lr_decay: f64,
    pub optimizer: OptimizerKind,
    pub rms_decay: f64,
    pub weights: LossWeights,
    pub grad_clip: Option<f64>,
    /// Discriminator weight clip; off by default.
    pub d_weight_clip: Option<f64>,
    pub train_discriminator: bool,
    /// Recompute batch-norm running statistics over the training set after
    /// every epoch.
    pub bn_calibration: bool,
    pub seed: u64,
    pub train_data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

impl TrainConfig {
    pub fn for_qubits(n_qubits: usize) -> Result<Self> {
        Ok(TrainConfig {
            arch: ArchitectureConfig::preset(n_qubits)?,
            epochs: 50,
            batch_size: 256,
            learning_rate: 1e-4,
            lr_decay: 1.0,
            optimizer: OptimizerKind::RmsProp,
            rms_decay: 0.9,
            weights: LossWeights::default(),
            grad_clip: Some(1.0),
            d_weight_clip: None,
            train_discriminator: true,
            bn_calibration: true,
            seed: 0,
            train_data: None,
            checkpoint: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.weights.validate()?;
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch_size must be at least 2"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.learning_rate) || !positive(self.lr_decay) {
            return Err(Error::invalid("learning_rate and lr_decay must be positive"));
        }
        if !(self.rms_decay > 0.0 && self.rms_decay < 1.0) {
            return Err(Error::invalid("rms_decay must lie in (0, 1)"));
        }
        if self.grad_clip.is_some_and(|c| !positive(c)) || self.d_weight_clip.is_some_and(|c| !positive(c)) {
            return Err(Error::invalid("clip bounds must be positive"));
        }
        Ok(())
    }

    pub fn optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            kind: self.optimizer,
            lr: self.learning_rate,
            rho: self.rms_decay,
            eps: 1e-8,
            grad_clip: self.grad_clip,
            weight_clip: None,
        }
    }

    pub fn discriminator_optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig { weight_clip: self.d_weight_clip, ..self.optimizer_config() }
    }

    /// Parses the text form. `n_qubits` selects the architecture preset, which
    /// the other keys then override regardless of their order.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("line {}: expected key = value", lineno + 1)))?;
            pairs.push((lineno + 1, k.trim().to_string(), v.trim().to_string()));
        }
        let n_qubits = pairs
            .iter()
            .find(|(_, k, _)| k == "n_qubits")
            .map(|(l, _, v)| parse_num::<usize>(*l, "n_qubits", v))
            .transpose()?
            .unwrap_or(2);
        let mut cfg = TrainConfig::for_qubits(n_qubits)?;
        for (l, k, v) in &pairs {
            cfg.set(*l, k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        match key {
            "n_qubits" => {}
            "conv_channels" => {
                self.arch.conv_channels =
                    v.split(',').map(|c| parse_num(line, key, c.trim())).collect::<Result<_>>()?;
            }
            "kernel" => self.arch.kernel = parse_num(line, key, v)?,
            "pool_every" => self.arch.pool_every = parse_num(line, key, v)?,
            "pool_window" => self.arch.pool_window = parse_num(line, key, v)?,
            "fc_hidden" => self.arch.fc_hidden = parse_num(line, key, v)?,
            "latent_dim" => self.arch.latent_dim = parse_num(line, key, v)?,
            "input_scale" => self.arch.input_scale = parse_num(line, key, v)?,
            "epochs" => self.epochs = parse_num(line, key, v)?,
            "batch_size" => self.batch_size = parse_num(line, key, v)?,
            "learning_rate" | "lr" => self.learning_rate = parse_num(line, key, v)?,
            "lr_decay" => self.lr_decay = parse_num(line, key, v)?,
            "optimizer" => self.optimizer = v.parse()?,
            "rms_decay" => self.rms_decay = parse_num(line, key, v)?,
            "w1" => self.weights.w1 = parse_num(line, key, v)?,
            "w2" => self.weights.w2 = parse_num(line, key, v)?,
            "wa" => self.weights.wa = parse_num(line, key, v)?,
            "grad_clip" => self.grad_clip = parse_optional(line, key, v)?,
            "d_weight_clip" => self.d_weight_clip = parse_optional(line, key, v)?,
            "train_discriminator" => self.train_discriminator = parse_bool(line, key, v)?,
            "bn_calibration" => self.bn_calibration = parse_bool(line, key, v)?,
            "seed" => self.seed = parse_num(line, key, v)?,
            "train_data" => self.train_data = Some(PathBuf::from(v)),
            "checkpoint" => self.checkpoint = Some(PathBuf::from(v)),
            other => return Err(Error::invalid(format!("line {line}: unknown key '{other}'"))),
        }
        Ok(())
    }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::invalid(format!("line {line}: bad value '{v}' for {key}")))
}

fn parse_optional(line: usize, key: &str, v: &str) -> Result<Option<f64>> {
    match v {
        "none" | "off" => Ok(None),
        _ => parse_num(line, key, v).map(Some),
    }
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "1" => Ok(true),
        "false" | "off" | "0" => Ok(false),
        _ => Err(Error::invalid(format!("line {line}: bad boolean '{v}' for {key}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_overrides() {
        let cfg = TrainConfig::parse(
            "# comment\nn_qubits = 3\nepochs = 4\nconv_channels = 4, 8\nwa = 0\noptimizer = adam\nd_weight_clip = 0.01\n",
        )
        .unwrap();
        assert_eq!(cfg.arch.n_qubits, 3);
        assert_eq!(cfg.arch.conv_channels, vec![4, 8]);
        assert_eq!(cfg.epochs, 4);
        assert_eq!(cfg.weights.wa, 0.0);
        assert_eq!(cfg.optimizer, OptimizerKind::Adam);
        assert_eq!(cfg.d_weight_clip, Some(0.01));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(TrainConfig::parse("bogus = 1").is_err());
        assert!(TrainConfig::parse("epochs = 0").is_err());
        assert!(TrainConfig::parse("batch_size = 1").is_err());
        assert!(TrainConfig::parse("epochs").is_err());
        assert!(TrainConfig::parse("w1 = -1").is_err());
    }
}
