use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::save_checkpoint;
use super::config::TrainConfig;
use super::dataset::{Dataset, LABEL_SEPARABLE};
use crate::cvnn::CTensor;
use crate::error::{Error, Result};
use crate::model::{ModelState, StepLosses, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub batches: usize,
    /// Means over the epoch's batches.
    pub l1: f64,
    pub l2: f64,
    pub adv1: f64,
    pub adv2: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ModelState,
    pub log: Vec<EpochLog>,
}

/// Loads `config.train_data` and trains.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let path = config.train_data.as_ref().ok_or_else(|| Error::invalid("train_data is not set"))?;
    let data = Dataset::load(path)?;
    train_on(config, &data, |_, _| {})
}

/// Rejects any labeled record that is not separable.
pub fn check_training_labels(data: &Dataset) -> Result<()> {
    if let Some((i, l)) = data
        .records()
        .iter()
        .enumerate()
        .find_map(|(i, r)| r.label.filter(|&l| l != LABEL_SEPARABLE).map(|l| (i, l)))
    {
        return Err(Error::invalid(format!(
            "training data must be separable only; record {i} has label {l}"
        )));
    }
    Ok(())
}

/// Fixed-order batches over the whole tensor, dropping a final batch that
/// is too small for batch norm.
pub(crate) fn ordered_batches(x: &CTensor, batch_size: usize) -> Vec<CTensor> {
    let n = x.batch();
    (0..n)
        .step_by(batch_size)
        .map(|s| (s..(s + batch_size).min(n)).collect::<Vec<_>>())
        .filter(|idx| idx.len() >= 2)
        .map(|idx| x.select_rows(&idx))
        .collect()
}

/// Alternating training: per batch, one discriminator step on `ℒ_adv1`
/// then one step of `E_r`, `E_g`, `G` on `ℒ₃`. `on_epoch` runs after each
/// epoch's log entry (and checkpoint) is written.
pub fn train_on<F>(config: &TrainConfig, data: &Dataset, mut on_epoch: F) -> Result<TrainOutcome>
where
    F: FnMut(&EpochLog, &ModelState),
{
    config.validate()?;
    check_training_labels(data)?;
    if data.dim() != config.arch.input_dim() {
        return Err(Error::invalid(format!(
            "training data is {0}×{0}, the architecture expects {1}×{1}",
            data.dim(),
            config.arch.input_dim()
        )));
    }
    if data.len() < 2 {
        return Err(Error::invalid("training needs at least two samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = ModelState::new(config.arch.clone(), config.weights, &mut rng)?;
    let mut trainer = Trainer::new(
        &model,
        config.optimizer_config(),
        config.discriminator_optimizer_config(),
        config.train_discriminator,
    );
    let x = model.input_batch(data.matrices())?;
    let calibration = if config.bn_calibration { ordered_batches(&x, config.batch_size) } else { Vec::new() };
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let lr = config.learning_rate * config.lr_decay.powi(epoch as i32);
        trainer.set_lr(lr);
        order.shuffle(&mut rng);
        let mut sum = StepLosses::default();
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let xb = x.select_rows(chunk);
            let s = model.train_step(&xb, &mut trainer)?;
            sum.l1 += s.l1;
            sum.l2 += s.l2;
            sum.adv1 += s.adv1;
            sum.adv2 += s.adv2;
            sum.total += s.total;
            batches += 1;
        }
        if config.bn_calibration {
            model.calibrate_batch_norm(&calibration)?;
        }
        let n = batches.max(1) as f64;
        let entry = EpochLog {
            epoch,
            lr,
            batches,
            l1: sum.l1 / n,
            l2: sum.l2 / n,
            adv1: sum.adv1 / n,
            adv2: sum.adv2 / n,
            total: sum.total / n,
        };
        if let Some(path) = &config.checkpoint {
            save_checkpoint(&model, path)?;
        }
        on_epoch(&entry, &model);
        log.push(entry);
    }
    Ok(TrainOutcome { model, log })
}
