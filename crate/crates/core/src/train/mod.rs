//! Offline phase: empirical risk minimization over every WD-GNN parameter
//! with minibatch ADAM.

mod adam;
mod data;
mod loss;

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;

pub use adam::{adam_step, AdamState};
pub use data::{finish_metric, Dataset, MetricKind, Sample, Target};
pub use loss::{argmax_rows, cross_entropy_loss, mse_loss};

use crate::error::{Error, Result};
use crate::nn::{wdgnn_backward, GroupMask, WdGnnParams};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    /// Fraction held out for model selection by [`train_offline`].
    pub validation_fraction: f64,
    pub trainable: GroupMask,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 20,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            validation_fraction: 0.2,
            trainable: GroupMask::all(),
        }
    }
}

/// One row of the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean minibatch loss seen during the epoch.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest validation loss.
    pub params: WdGnnParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Mean loss and aggregated metric of `params` over `data`.
pub fn evaluate(params: &WdGnnParams, data: &Dataset) -> Result<(f64, f64)> {
    let kind = data.metric_kind().ok_or_else(|| Error::invalid("evaluation on an empty dataset"))?;
    let parts = data
        .samples
        .par_iter()
        .map(|s| {
            let (out, _) = s.forward(params)?;
            let (loss, _) = s.target.loss_grad(&out)?;
            Ok((loss, s.target.metric_parts(&out)))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut loss, mut num, mut den) = (0.0, 0.0, 0.0);
    for (l, (a, b)) in parts {
        loss += l;
        num += a;
        den += b;
    }
    Ok((loss / data.len() as f64, finish_metric(kind, num, den)))
}

/// Mean loss and mean flat gradient over `batch`, reduced in sample order.
pub fn batch_gradient(params: &WdGnnParams, batch: &[&Sample]) -> Result<(f64, Vec<f64>)> {
    let per_sample = batch
        .par_iter()
        .map(|s| {
            let (out, cache) = s.forward(params)?;
            let (loss, up) = s.target.loss_grad(&out)?;
            let grad = wdgnn_backward(&cache, &s.graph, params, &up)?;
            Ok((loss, grad.to_flat()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len_flat()];
    for (l, g) in &per_sample {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(g) {
            *acc += v;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

/// Holds out the last `validation_fraction` of `data` (at least one sample
/// when the fraction is positive) and trains on the rest.
pub fn train_offline(data: &Dataset, init: &WdGnnParams, config: &TrainConfig) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if !(0.0..1.0).contains(&config.validation_fraction) {
        return Err(Error::invalid(format!("validation fraction {} outside [0, 1)", config.validation_fraction)));
    }
    let mut n_val = (data.len() as f64 * config.validation_fraction).round() as usize;
    if config.validation_fraction > 0.0 {
        n_val = n_val.clamp(1, data.len() - 1);
    }
    let parts = data.split(&[data.len() - n_val, n_val])?;
    train_with_validation(&parts[0], &parts[1], init, config)
}

/// Trains on `train`, selecting the epoch with the lowest loss on `valid`
/// (on the training loss when `valid` is empty).
pub fn train_with_validation(
    train: &Dataset,
    valid: &Dataset,
    init: &WdGnnParams,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::invalid("empty training set"));
    }
    if config.epochs == 0 {
        return Err(Error::invalid("epochs must be at least 1"));
    }
    if config.batch_size == 0 || config.batch_size > train.len() {
        return Err(Error::invalid(format!("batch size {} outside 1..={}", config.batch_size, train.len())));
    }
    let mut params = init.clone();
    let mask = params.flat_mask(config.trainable);
    let mut flat = params.to_flat();
    let mut adam = AdamState::new(flat.len(), config.learning_rate, config.beta1, config.beta2);
    let mut rng = rng::seeded(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, WdGnnParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&_> = chunk.iter().map(|&i| &train.samples[i]).collect();
            let (loss, grad) = batch_gradient(&params, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch: b, loss });
            }
            adam_step(&mut adam, &mut flat, &grad, Some(&mask))?;
            params.set_flat(&flat)?;
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;
        let (val_loss, val_metric) = if valid.is_empty() { (train_loss, f64::NAN) } else { evaluate(&params, valid)? };
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: batches, loss: val_loss });
        }
        log::debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6} metric {val_metric:.4}");
        history.push(EpochRecord { epoch, train_loss, val_loss, val_metric });
        if best.as_ref().is_none_or(|(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, params.clone()));
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch");
    Ok(TrainOutcome { params, best_epoch, history })
}

/// CSV with header `epoch,train_loss,val_loss,val_metric`.
pub fn write_history_csv<W: Write>(history: &[EpochRecord], mut out: W) -> Result<()> {
    writeln!(out, "epoch,train_loss,val_loss,val_metric")?;
    for r in history {
        writeln!(out, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.val_metric)?;
    }
    Ok(())
}
