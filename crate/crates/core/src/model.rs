//! Pseudo-siamese anomaly detector: encoder `E_r`, generator `G`, second
//! encoder `E_g` and discriminator `D`, their losses, the anomaly score and
//! decision thresholds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cvnn::{
    BatchNorm, CTensor, Conv2d, ConvTranspose2d, Grads, Layer, Linear, Network, Optimizer, OptimizerConfig,
    StatsAccumulator, Tape, BN_MOMENTUM,
};
use crate::error::{Error, Result};
use crate::qstate::CMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureConfig {
    pub n_qubits: usize,
    /// Output channels of each convolution, in order.
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    /// A modulus max-pool follows every `pool_every` convolutions; 0 disables.
    pub pool_every: usize,
    pub pool_window: usize,
    pub fc_hidden: usize,
    pub latent_dim: usize,
    /// Density matrices are multiplied by this factor before entering the
    /// networks.
    #[serde(default = "unit_scale")]
    pub input_scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl ArchitectureConfig {
    /// Built-in layouts for 2 to 5 qubits; larger registers reuse the
    /// pooled layout.
    pub fn preset(n_qubits: usize) -> Result<Self> {
        let base = ArchitectureConfig {
            n_qubits,
            conv_channels: vec![10, 30],
            kernel: 2,
            pool_every: 0,
            pool_window: 2,
            fc_hidden: 64,
            latent_dim: 10,
            input_scale: 1.0,
        };
        match n_qubits {
            0 | 1 => Err(Error::invalid("presets start at 2 qubits")),
            2 => Ok(base),
            3 => Ok(ArchitectureConfig { conv_channels: vec![10, 30, 50], ..base }),
            _ => Ok(ArchitectureConfig { conv_channels: vec![8, 16], pool_every: 2, ..base }),
        }
    }

    pub fn input_dim(&self) -> usize {
        1 << self.n_qubits
    }

    fn pooled_after(&self, conv_index: usize) -> bool {
        self.pool_every > 0 && (conv_index + 1) % self.pool_every == 0
    }

    /// Spatial side length after the convolution stack.
    pub fn feature_side(&self) -> Result<usize> {
        let mut side = self.input_dim();
        for i in 0..self.conv_channels.len() {
            if side < self.kernel {
                return Err(Error::invalid(format!("kernel {} does not fit side {side}", self.kernel)));
            }
            side = side + 1 - self.kernel;
            if self.pooled_after(i) {
                if side % self.pool_window != 0 {
                    return Err(Error::invalid(format!(
                        "pool window {} does not divide side {side}",
                        self.pool_window
                    )));
                }
                side /= self.pool_window;
            }
        }
        Ok(side)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 || self.n_qubits > 10 {
            return Err(Error::invalid("n_qubits must be in 1..=10"));
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return Err(Error::invalid("conv_channels must be non-empty and positive"));
        }
        if self.kernel == 0 || self.pool_window == 0 || self.fc_hidden == 0 || self.latent_dim == 0 {
            return Err(Error::invalid("kernel, pool_window, fc_hidden and latent_dim must be positive"));
        }
        if !(self.input_scale.is_finite() && self.input_scale > 0.0) {
            return Err(Error::invalid("input_scale must be finite and positive"));
        }
        if self.feature_side()? == 0 {
            return Err(Error::invalid("convolution stack leaves no spatial extent"));
        }
        Ok(())
    }

    fn flat_features(&self) -> Result<usize> {
        let side = self.feature_side()?;
        Ok(self.conv_channels.last().copied().unwrap_or(1) * side * side)
    }

    fn conv_stack<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Layer> {
        let mut layers = Vec::new();
        let mut prev = 1;
        for (i, &ch) in self.conv_channels.iter().enumerate() {
            layers.push(Layer::Conv2d(Conv2d::new(prev, ch, self.kernel, rng)));
            layers.push(Layer::CRelu);
            layers.push(Layer::BatchNorm(BatchNorm::new(ch)));
            if self.pooled_after(i) {
                layers.push(Layer::MaxPool { window: self.pool_window });
            }
            prev = ch;
        }
        layers
    }

    /// `E_r` / `E_g`: convolutions, then two fully connected layers to the
    /// latent vector.
    pub fn build_encoder<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Network> {
        self.validate()?;
        let flat = self.flat_features()?;
        let mut layers = self.conv_stack(rng);
        layers.push(Layer::Reshape { shape: vec![flat] });
        layers.push(Layer::Linear(Linear::new(flat, self.fc_hidden, rng)));
        layers.push(Layer::CRelu);
        layers.push(Layer::Linear(Linear::new(self.fc_hidden, self.latent_dim, rng)));
        Ok(Network::new(layers))
    }

    /// `D`: the encoder body with a one-unit head followed by the modulus.
    pub fn build_discriminator<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Network> {
        self.validate()?;
        let flat = self.flat_features()?;
        let mut layers = self.conv_stack(rng);
        layers.push(Layer::Reshape { shape: vec![flat] });
        layers.push(Layer::Linear(Linear::new(flat, self.fc_hidden, rng)));
        layers.push(Layer::CRelu);
        layers.push(Layer::Linear(Linear::new(self.fc_hidden, 1, rng)));
        layers.push(Layer::Modulus);
        Ok(Network::new(layers))
    }

    /// `G`: mirror of the encoder with transposed convolutions and
    /// upsampling in place of pooling.
    pub fn build_generator<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Network> {
        self.validate()?;
        let side = self.feature_side()?;
        let flat = self.flat_features()?;
        let last = *self.conv_channels.last().expect("validated non-empty");
        let mut layers = vec![
            Layer::Linear(Linear::new(self.latent_dim, self.fc_hidden, rng)),
            Layer::CRelu,
            Layer::Linear(Linear::new(self.fc_hidden, flat, rng)),
            Layer::CRelu,
            Layer::Reshape { shape: vec![last, side, side] },
        ];
        for i in (0..self.conv_channels.len()).rev() {
            if self.pooled_after(i) {
                layers.push(Layer::Upsample { factor: self.pool_window });
            }
            let out = if i == 0 { 1 } else { self.conv_channels[i - 1] };
            layers.push(Layer::ConvTranspose2d(ConvTranspose2d::new(self.conv_channels[i], out, self.kernel, rng)));
            if i > 0 {
                layers.push(Layer::CRelu);
                layers.push(Layer::BatchNorm(BatchNorm::new(out)));
            }
        }
        Ok(Network::new(layers))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub wa: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { w1: 1.0, w2: 50.0, wa: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.w1, self.w2, self.wa];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub arch: ArchitectureConfig,
    pub er: Network,
    pub eg: Network,
    pub g: Network,
    pub d: Network,
    pub weights: LossWeights,
    pub step_count: u64,
}

/// Stacks density matrices into a `(batch, 1, dim, dim)` tensor.
pub fn density_batch<'a, I>(mats: I, dim: usize) -> Result<CTensor>
where
    I: IntoIterator<Item = &'a CMatrix>,
{
    let mut re = Vec::new();
    let mut im = Vec::new();
    let mut batch = 0;
    for m in mats {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::invalid(format!(
                "expected {dim}×{dim} matrix, got {}×{}",
                m.nrows(),
                m.ncols()
            )));
        }
        for r in 0..dim {
            for c in 0..dim {
                re.push(m[(r, c)].re);
                im.push(m[(r, c)].im);
            }
        }
        batch += 1;
    }
    CTensor::from_parts(&[batch, 1, dim, dim], re, im)
}

fn expect_shape(t: &CTensor, shape: &[usize], what: &str) -> Result<()> {
    if t.shape() != shape {
        return Err(Error::invalid(format!("{what} has shape {:?}, expected {shape:?}", t.shape())));
    }
    Ok(())
}

/// Outputs of `v1 = E_r(ρ)`, `ρ_gen = G(v1)`, `v2 = E_g(ρ_gen)`.
#[derive(Debug, Clone)]
pub struct Siamese {
    pub v1: CTensor,
    pub rho_gen: CTensor,
    pub v2: CTensor,
}

impl ModelState {
    /// Fresh model; `E_r` and `E_g` are drawn independently.
    pub fn new<R: Rng + ?Sized>(arch: ArchitectureConfig, weights: LossWeights, rng: &mut R) -> Result<Self> {
        weights.validate()?;
        let er = arch.build_encoder(rng)?;
        let eg = arch.build_encoder(rng)?;
        let g = arch.build_generator(rng)?;
        let d = arch.build_discriminator(rng)?;
        Ok(ModelState { arch, er, eg, g, d, weights, step_count: 0 })
    }

    /// Assembles a model from explicit networks after checking the shape
    /// contract on a probe batch.
    pub fn from_networks(
        arch: ArchitectureConfig,
        er: Network,
        eg: Network,
        g: Network,
        d: Network,
        weights: LossWeights,
    ) -> Result<Self> {
        weights.validate()?;
        let m = ModelState { arch, er, eg, g, d, weights, step_count: 0 };
        let dim = m.arch.input_dim();
        let probe = CTensor::zeros(&[2, 1, dim, dim]);
        let s = m.forward_siamese(&probe)?;
        expect_shape(&s.rho_gen, probe.shape(), "generator output")?;
        expect_shape(&m.d.forward(&probe)?, &[2, 1], "discriminator output")?;
        Ok(m)
    }

    /// Network input for a batch of density matrices (scaled by
    /// `input_scale`).
    pub fn input_batch<'a, I>(&self, mats: I) -> Result<CTensor>
    where
        I: IntoIterator<Item = &'a CMatrix>,
    {
        let mut x = density_batch(mats, self.arch.input_dim())?;
        x.scale(self.arch.input_scale);
        Ok(x)
    }

    fn check_input(&self, x: &CTensor) -> Result<()> {
        let dim = self.arch.input_dim();
        if x.shape().len() != 4 || x.shape()[1..] != [1, dim, dim] {
            return Err(Error::invalid(format!(
                "input shape {:?} does not match {dim}×{dim} density matrices",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Inference-mode siamese pass.
    pub fn forward_siamese(&self, x: &CTensor) -> Result<Siamese> {
        self.check_input(x)?;
        let v1 = self.er.forward(x)?;
        let rho_gen = self.g.forward(&v1)?;
        let v2 = self.eg.forward(&rho_gen)?;
        let b = x.batch();
        expect_shape(&v1, &[b, self.arch.latent_dim], "E_r output")?;
        expect_shape(&v2, &[b, self.arch.latent_dim], "E_g output")?;
        Ok(Siamese { v1, rho_gen, v2 })
    }

    /// `‖E_r(ρ) − E_g(G(E_r(ρ)))‖₂` per sample, inference mode.
    pub fn anomaly_scores(&self, x: &CTensor) -> Result<Vec<f64>> {
        let s = self.forward_siamese(x)?;
        Ok(latent_distances(&s.v1, &s.v2))
    }

    /// Inference-mode adversarial losses on a batch of real and generated
    /// inputs.
    pub fn loss_adv(&self, real: &CTensor, gen: &CTensor) -> Result<(f64, f64)> {
        loss_adv(&self.d.forward(real)?, &self.d.forward(gen)?)
    }

    pub fn n_params(&self) -> usize {
        self.er.n_params() + self.eg.n_params() + self.g.n_params() + self.d.n_params()
    }
}

fn latent_distances(v1: &CTensor, v2: &CTensor) -> Vec<f64> {
    let k = v1.sample_len();
    (0..v1.batch())
        .map(|b| {
            let r = b * k..(b + 1) * k;
            let sq: f64 = v1.re()[r.clone()]
                .iter()
                .zip(&v2.re()[r.clone()])
                .chain(v1.im()[r.clone()].iter().zip(&v2.im()[r]))
                .map(|(a, c)| (a - c) * (a - c))
                .sum();
            sq.sqrt()
        })
        .collect()
}

/// Batch mean of `‖v1 − v2‖₂`.
pub fn loss_l1(v1: &CTensor, v2: &CTensor) -> Result<f64> {
    Ok(loss_l1_grad(v1, v2)?.0)
}

/// `ℒ₁` and its gradient with respect to `v1` (the gradient for `v2` is
/// the negation).
pub fn loss_l1_grad(v1: &CTensor, v2: &CTensor) -> Result<(f64, CTensor)> {
    if v1.shape() != v2.shape() || v1.batch() == 0 {
        return Err(Error::invalid("latent batches must have equal, non-empty shapes"));
    }
    let b = v1.batch();
    let k = v1.sample_len();
    let dists = latent_distances(v1, v2);
    let mut grad = CTensor::zeros(v1.shape());
    let (gr, gi) = grad.parts_mut();
    for (s, &n) in dists.iter().enumerate() {
        if n == 0.0 {
            continue;
        }
        for j in s * k..(s + 1) * k {
            gr[j] = (v1.re()[j] - v2.re()[j]) / (n * b as f64);
            gi[j] = (v1.im()[j] - v2.im()[j]) / (n * b as f64);
        }
    }
    Ok((dists.iter().sum::<f64>() / b as f64, grad))
}

/// Batch mean of `Σ |ℜΔ| + |ℑΔ|`.
pub fn loss_l2(real: &CTensor, gen: &CTensor) -> Result<f64> {
    Ok(loss_l2_grad(real, gen)?.0)
}

/// `ℒ₂` and its gradient with respect to `gen`.
pub fn loss_l2_grad(real: &CTensor, gen: &CTensor) -> Result<(f64, CTensor)> {
    if real.shape() != gen.shape() || real.batch() == 0 {
        return Err(Error::invalid("real and generated batches must have equal, non-empty shapes"));
    }
    let b = real.batch() as f64;
    let mut total = 0.0;
    let mut grad = CTensor::zeros(gen.shape());
    let (gr, gi) = grad.parts_mut();
    for j in 0..gen.len() {
        let dr = gen.re()[j] - real.re()[j];
        let di = gen.im()[j] - real.im()[j];
        total += dr.abs() + di.abs();
        gr[j] = sign(dr) / b;
        gi[j] = sign(di) / b;
    }
    Ok((total / b, grad))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn real_scores(d: &CTensor) -> Result<Vec<f64>> {
    if d.sample_len() != 1 {
        return Err(Error::invalid("discriminator must output one value per sample"));
    }
    Ok(d.re().to_vec())
}

/// `(mean(−D(real) + D(gen)), mean(−D(gen)))` from discriminator outputs.
pub fn loss_adv(d_real: &CTensor, d_gen: &CTensor) -> Result<(f64, f64)> {
    let r = real_scores(d_real)?;
    let g = real_scores(d_gen)?;
    if r.is_empty() || g.is_empty() {
        return Err(Error::invalid("empty discriminator batch"));
    }
    let mr = r.iter().sum::<f64>() / r.len() as f64;
    let mg = g.iter().sum::<f64>() / g.len() as f64;
    Ok((-mr + mg, -mg))
}

pub fn loss_total(l1: f64, l2: f64, l_adv2: f64, weights: &LossWeights) -> f64 {
    weights.w1 * l1 + weights.w2 * l2 + weights.wa * l_adv2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMethod {
    Eer,
    MaxSeparable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub b: f64,
    pub method: ThresholdMethod,
}

impl Threshold {
    /// `score > b` is called entangled.
    pub fn is_entangled(&self, score: f64) -> bool {
        score > self.b
    }
}

fn sorted(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// `(FNR, FPR)` at threshold `b`, with separable as the positive class.
pub fn error_rates(sep_sorted: &[f64], ent_sorted: &[f64], b: f64) -> (f64, f64) {
    let fn_count = sep_sorted.len() - sep_sorted.partition_point(|&s| s <= b);
    let fp_count = ent_sorted.partition_point(|&s| s <= b);
    (fn_count as f64 / sep_sorted.len() as f64, fp_count as f64 / ent_sorted.len() as f64)
}

/// Threshold minimizing `|FNR − FPR|` over the smallest and largest unique
/// scores and the midpoints between adjacent unique scores; ties go to the
/// smaller `b`.
pub fn threshold_eer(scores_sep: &[f64], scores_ent: &[f64]) -> Result<Threshold> {
    if scores_sep.is_empty() || scores_ent.is_empty() {
        return Err(Error::invalid("both score lists must be non-empty"));
    }
    let sep = sorted(scores_sep)?;
    let ent = sorted(scores_ent)?;
    let mut all: Vec<f64> = sep.iter().chain(&ent).copied().collect();
    all.sort_by(f64::total_cmp);
    all.dedup();
    let mut candidates = Vec::with_capacity(all.len() + 1);
    candidates.push(all[0]);
    candidates.extend(all.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    if all.len() > 1 {
        candidates.push(all[all.len() - 1]);
    }
    let mut best = (f64::INFINITY, candidates[0]);
    for &b in &candidates {
        let (fnr, fpr) = error_rates(&sep, &ent, b);
        let obj = (fnr - fpr).abs();
        if obj < best.0 {
            best = (obj, b);
        }
    }
    Ok(Threshold { b: best.1, method: ThresholdMethod::Eer })
}

/// `b = max` separable score.
pub fn threshold_max_separable(scores_sep: &[f64]) -> Result<Threshold> {
    let sep = sorted(scores_sep)?;
    let b = *sep.last().ok_or_else(|| Error::invalid("separable score list is empty"))?;
    Ok(Threshold { b, method: ThresholdMethod::MaxSeparable })
}

/// Loss values from one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub l1: f64,
    pub l2: f64,
    pub adv1: f64,
    pub adv2: f64,
    pub total: f64,
}

/// Optimizer state for all four networks.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub opt_d: Optimizer,
    pub opt_er: Optimizer,
    pub opt_eg: Optimizer,
    pub opt_g: Optimizer,
    /// Whether step (i) updates `D`.
    pub train_discriminator: bool,
}

impl Trainer {
    /// `d_config` applies to the discriminator (e.g. with weight clipping),
    /// `config` to `E_r`, `E_g` and `G`.
    pub fn new(model: &ModelState, config: OptimizerConfig, d_config: OptimizerConfig, train_discriminator: bool) -> Self {
        Trainer {
            opt_d: Optimizer::new(d_config, &model.d),
            opt_er: Optimizer::new(config, &model.er),
            opt_eg: Optimizer::new(config, &model.eg),
            opt_g: Optimizer::new(config, &model.g),
            train_discriminator,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        for o in [&mut self.opt_d, &mut self.opt_er, &mut self.opt_eg, &mut self.opt_g] {
            o.set_lr(lr);
        }
    }
}

/// Gradients of one alternating step, before they are applied.
#[derive(Debug, Clone)]
pub struct StepGrads {
    pub d: Option<Grads>,
    pub er: Grads,
    pub eg: Grads,
    pub g: Grads,
}

fn constant_like(t: &CTensor, value: f64) -> CTensor {
    let mut out = CTensor::zeros(t.shape());
    out.re_mut().iter_mut().for_each(|v| *v = value);
    out
}

impl ModelState {
    /// Discriminator loss `ℒ_adv1` and its gradient on `D`'s parameters.
    pub fn discriminator_grads(&self, x: &CTensor) -> Result<(f64, Grads)> {
        self.check_input(x)?;
        let (v1, _) = self.er.forward_train(x)?;
        let (gen, _) = self.g.forward_train(&v1)?;
        let (d_real, tape_real) = self.d.forward_train(x)?;
        let (d_gen, tape_gen) = self.d.forward_train(&gen)?;
        let (adv1, _) = loss_adv(&d_real, &d_gen)?;
        let b = x.batch() as f64;
        let mut grads = self.d.backward(&tape_real, &constant_like(&d_real, -1.0 / b))?.grads;
        grads.add(&self.d.backward(&tape_gen, &constant_like(&d_gen, 1.0 / b))?.grads);
        Ok((adv1, grads))
    }

    /// `ℒ₃ = w₁ℒ₁ + w₂ℒ₂ + w_aℒ_adv2` and its gradients on `E_r`, `E_g`, `G`,
    /// plus the tapes whose batch statistics the step saw.
    pub fn generator_grads(&self, x: &CTensor) -> Result<(StepLosses, [Grads; 3], [Tape; 3])> {
        self.check_input(x)?;
        let w = self.weights;
        let (v1, tape_er) = self.er.forward_train(x)?;
        let (gen, tape_g) = self.g.forward_train(&v1)?;
        let (v2, tape_eg) = self.eg.forward_train(&gen)?;
        let (l1, dv1) = loss_l1_grad(&v1, &v2)?;
        let (l2, dgen_l2) = loss_l2_grad(x, &gen)?;

        let mut dv2 = dv1.clone();
        dv2.scale(-w.w1);
        let back_eg = self.eg.backward(&tape_eg, &dv2)?;
        let mut dgen = dgen_l2;
        dgen.scale(w.w2);
        dgen.add_assign(&back_eg.input_grad)?;

        let mut adv2 = 0.0;
        if w.wa != 0.0 {
            let (d_gen, tape_d) = self.d.forward_train(&gen)?;
            adv2 = -d_gen.re().iter().sum::<f64>() / x.batch() as f64;
            let back_d = self.d.backward(&tape_d, &constant_like(&d_gen, -w.wa / x.batch() as f64))?;
            dgen.add_assign(&back_d.input_grad)?;
        }

        let back_g = self.g.backward(&tape_g, &dgen)?;
        let mut dv1_total = dv1;
        dv1_total.scale(w.w1);
        dv1_total.add_assign(&back_g.input_grad)?;
        let back_er = self.er.backward(&tape_er, &dv1_total)?;

        let losses = StepLosses { l1, l2, adv1: 0.0, adv2, total: loss_total(l1, l2, adv2, &w) };
        Ok((losses, [back_er.grads, back_eg.grads, back_g.grads], [tape_er, tape_eg, tape_g]))
    }

    /// One alternating step: (i) update `D` on `ℒ_adv1`, then (ii) update
    /// `E_r`, `E_g`, `G` on `ℒ₃`.
    pub fn train_step(&mut self, x: &CTensor, trainer: &mut Trainer) -> Result<StepLosses> {
        let mut adv1 = 0.0;
        if trainer.train_discriminator {
            let (a, grads) = self.discriminator_grads(x)?;
            adv1 = a;
            trainer.opt_d.step(&mut self.d, &grads)?;
        }
        let (mut losses, [g_er, g_eg, g_g], [t_er, t_eg, t_g]) = self.generator_grads(x)?;
        if !losses.total.is_finite() {
            return Err(Error::InternalFailure(format!("non-finite training loss at step {}", self.step_count)));
        }
        trainer.opt_er.step(&mut self.er, &g_er)?;
        trainer.opt_eg.step(&mut self.eg, &g_eg)?;
        trainer.opt_g.step(&mut self.g, &g_g)?;
        self.er.absorb_batch_stats(&t_er, BN_MOMENTUM);
        self.eg.absorb_batch_stats(&t_eg, BN_MOMENTUM);
        self.g.absorb_batch_stats(&t_g, BN_MOMENTUM);
        self.step_count += 1;
        losses.adv1 = adv1;
        Ok(losses)
    }

    /// Replaces the running batch-norm statistics of `E_r`, `G`, `E_g` and
    /// `D` by population statistics from training-mode passes over `batches`.
    pub fn calibrate_batch_norm<'a, I>(&mut self, batches: I) -> Result<()>
    where
        I: IntoIterator<Item = &'a CTensor>,
    {
        let mut acc = [
            StatsAccumulator::new(&self.er),
            StatsAccumulator::new(&self.g),
            StatsAccumulator::new(&self.eg),
            StatsAccumulator::new(&self.d),
        ];
        for x in batches {
            self.check_input(x)?;
            let b = x.batch();
            let (v1, t_er) = self.er.forward_train(x)?;
            let (gen, t_g) = self.g.forward_train(&v1)?;
            let (_, t_eg) = self.eg.forward_train(&gen)?;
            let (_, t_d) = self.d.forward_train(x)?;
            acc[0].add(&t_er, b);
            acc[1].add(&t_g, b);
            acc[2].add(&t_eg, b);
            acc[3].add(&t_d, b);
        }
        acc[0].apply(&mut self.er);
        acc[1].apply(&mut self.g);
        acc[2].apply(&mut self.eg);
        acc[3].apply(&mut self.d);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c_tensor(shape: &[usize], re: &[f64], im: &[f64]) -> CTensor {
        CTensor::from_parts(shape, re.to_vec(), im.to_vec()).unwrap()
    }

    #[test]
    fn preset_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 2..=5 {
            let arch = ArchitectureConfig::preset(n).unwrap();
            let m = ModelState::new(arch.clone(), LossWeights::default(), &mut rng).unwrap();
            let dim = arch.input_dim();
            let x = CTensor::zeros(&[3, 1, dim, dim]);
            let s = m.forward_siamese(&x).unwrap();
            assert_eq!(s.v1.shape(), &[3, arch.latent_dim]);
            assert_eq!(s.rho_gen.shape(), x.shape());
            assert_eq!(s.v2.shape(), &[3, arch.latent_dim]);
            assert_eq!(m.d.forward(&x).unwrap().shape(), &[3, 1]);
            assert!(s.v1.is_finite() && s.v2.is_finite());
            let shapes = |n: &Network| n.params().iter().map(|b| b.len()).collect::<Vec<_>>();
            assert_eq!(shapes(&m.er), shapes(&m.eg));
            assert_ne!(m.er, m.eg);
        }
    }

    #[test]
    fn rejects_wrong_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ModelState::new(ArchitectureConfig::preset(2).unwrap(), LossWeights::default(), &mut rng).unwrap();
        assert!(m.forward_siamese(&CTensor::zeros(&[2, 1, 8, 8])).is_err());
    }

    #[test]
    fn identity_composition_scores_zero() {
        let arch = ArchitectureConfig { latent_dim: 16, ..ArchitectureConfig::preset(2).unwrap() };
        let flat = || Network::new(vec![Layer::Reshape { shape: vec![16] }]);
        let g = Network::new(vec![Layer::Reshape { shape: vec![1, 4, 4] }]);
        let d = Network::new(vec![
            Layer::Reshape { shape: vec![16] },
            Layer::Linear(Linear::from_weights(CTensor::zeros(&[1, 16]), CTensor::zeros(&[1])).unwrap()),
            Layer::Modulus,
        ]);
        let m = ModelState::from_networks(arch, flat(), flat(), g, d, LossWeights::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let re: Vec<f64> = (0..32).map(|_| rng.random()).collect();
        let x = c_tensor(&[2, 1, 4, 4], &re, &re);
        assert_eq!(m.anomaly_scores(&x).unwrap(), vec![0.0, 0.0]);
        // Zeroed head: D ≡ 0.
        assert_eq!(m.loss_adv(&x, &x).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn l1_examples() {
        let v = c_tensor(&[1, 2], &[0.3, 0.1], &[0.2, -0.4]);
        assert_eq!(loss_l1(&v, &v).unwrap(), 0.0);
        let w = c_tensor(&[1, 2], &[1.3, 0.1], &[0.2, 0.6]);
        assert!((loss_l1(&w, &v).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn l2_examples() {
        let a = c_tensor(&[1, 1, 1, 2], &[0.0, 0.5], &[0.0, 0.5]);
        assert_eq!(loss_l2(&a, &a).unwrap(), 0.0);
        let b = c_tensor(&[1, 1, 1, 2], &[3.0, 0.5], &[-4.0, 0.5]);
        assert_eq!(loss_l2(&a, &b).unwrap(), 7.0);
    }

    #[test]
    fn adv_examples() {
        let ones = c_tensor(&[3, 1], &[1.0; 3], &[0.0; 3]);
        let zeros = CTensor::zeros(&[3, 1]);
        assert_eq!(loss_adv(&ones, &zeros).unwrap(), (-1.0, 0.0));
    }

    #[test]
    fn total_examples() {
        let w = |w1, w2, wa| LossWeights { w1, w2, wa };
        assert_eq!(loss_total(0.3, 0.7, 0.2, &w(1.0, 0.0, 0.0)), 0.3);
        assert!((loss_total(0.1, 0.01, -0.2, &w(1.0, 50.0, 1.0)) - 0.4).abs() < 1e-15);
        assert_eq!(loss_total(0.1, 0.01, -0.2, &w(0.0, 0.0, 0.0)), 0.0);
    }

    #[test]
    fn eer_threshold_examples() {
        let t = threshold_eer(&[0.1, 0.2], &[0.8, 0.9]).unwrap();
        assert!((t.b - 0.5).abs() < 1e-15);
        let t = threshold_eer(&[0.1, 0.9], &[0.2, 0.8]).unwrap();
        let (fnr, fpr) = error_rates(&[0.1, 0.9], &[0.2, 0.8], t.b);
        assert_eq!((fnr, fpr), (0.5, 0.5));
        let same = [0.1, 0.2, 0.3, 0.4];
        let t = threshold_eer(&same, &same).unwrap();
        assert_eq!(error_rates(&same, &same, t.b), (0.5, 0.5));
        assert!(threshold_eer(&[], &[0.1]).is_err());
    }

    #[test]
    fn max_separable_examples() {
        assert_eq!(threshold_max_separable(&[0.1, 0.3, 0.2]).unwrap().b, 0.3);
        assert_eq!(threshold_max_separable(&[0.0, 0.0]).unwrap().b, 0.0);
        assert!(threshold_max_separable(&[]).is_err());
    }

    #[test]
    fn update_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = ModelState::new(ArchitectureConfig::preset(2).unwrap(), LossWeights::default(), &mut rng).unwrap();
        let re: Vec<f64> = (0..64).map(|_| rng.random_range(-0.5..0.5)).collect();
        let x = c_tensor(&[4, 1, 4, 4], &re, &re);
        let cfg = OptimizerConfig { lr: 1e-3, ..Default::default() };
        let mut tr = Trainer::new(&m, cfg, cfg, true);
        let before = m.clone();
        let (_, grads) = m.discriminator_grads(&x).unwrap();
        tr.opt_d.step(&mut m.d, &grads).unwrap();
        assert_ne!(m.d, before.d);
        assert_eq!((&m.er, &m.eg, &m.g), (&before.er, &before.eg, &before.g));
        let after_d = m.clone();
        let (_, [a, b, c], _) = m.generator_grads(&x).unwrap();
        tr.opt_er.step(&mut m.er, &a).unwrap();
        tr.opt_eg.step(&mut m.eg, &b).unwrap();
        tr.opt_g.step(&mut m.g, &c).unwrap();
        assert_eq!(m.d, after_d.d);
        assert_ne!(m.er, after_d.er);
        assert_ne!(m.eg, after_d.eg);
        assert_ne!(m.g, after_d.g);
    }
}
