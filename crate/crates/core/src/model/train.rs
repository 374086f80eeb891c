use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lstm::{backward_into, example_loss, forward, predict, Mode};
use super::params::{Gradients, ModelParams};
use super::{ModelError, Result};
use crate::data::WindowedDataset;
use crate::seed::derive_seed;

/// Examples per gradient-accumulation chunk. Chunks are summed in order, so
/// the batch gradient is bit-identical for any thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, dropout_rate: 0.2, batch_size: 32, local_epochs: 1, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::BadConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad("dropout_rate must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        Ok(())
    }
}

/// `p' = p − η·g` elementwise.
pub fn sgd_step(params: &ModelParams, grads: &Gradients, learning_rate: f64) -> Result<ModelParams> {
    params.check_same_shape(&grads.0)?;
    if !(learning_rate >= 0.0) {
        return Err(ModelError::BadConfig(format!("learning rate {learning_rate} must be non-negative")));
    }
    let mut out = params.clone();
    for (p, g) in out.blocks_mut().into_iter().zip(grads.0.blocks()) {
        p.iter_mut().zip(g).for_each(|(a, b)| *a -= learning_rate * b);
    }
    Ok(out)
}

/// Seed of the shuffle order for one epoch of a training stream.
pub fn epoch_seed(stream_seed: u64, epoch: u64) -> u64 {
    derive_seed(&[stream_seed, epoch])
}

/// The order in which an epoch visits the examples.
pub fn epoch_order(count: usize, stream_seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed(stream_seed, epoch)));
    order
}

/// Dropout seed for the example visited at `position` within an epoch.
pub fn example_seed(stream_seed: u64, epoch: u64, position: usize) -> u64 {
    derive_seed(&[epoch_seed(stream_seed, epoch), position as u64])
}

/// Loss and gradient of one example, accumulated into `acc`.
fn accumulate_example(
    params: &ModelParams,
    window: &[f64],
    target: &[f64],
    mode: Mode,
    acc: &mut Gradients,
) -> Result<f64> {
    let (y, cache) = forward(params, window, mode)?;
    backward_into(params, &cache, target, acc)?;
    Ok(example_loss(&y, target))
}

/// Mean-gradient of a batch of positions; returns the batch gradient and the
/// sum of per-example losses.
pub fn batch_gradient(
    params: &ModelParams,
    data: &WindowedDataset,
    cfg: &TrainConfig,
    epoch: u64,
    order: &[usize],
    positions: Range<usize>,
) -> Result<(Gradients, f64)> {
    let dims = params.dims;
    let batch: Vec<usize> = positions.collect();
    let partials: Vec<Result<(Gradients, f64)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Gradients::zeros(dims);
            let mut loss = 0.0;
            for &pos in chunk {
                let idx = order[pos];
                let mode = Mode::Train { dropout_rate: cfg.dropout_rate, seed: example_seed(cfg.seed, epoch, pos) };
                loss += accumulate_example(params, &data.inputs[idx], &data.targets[idx], mode, &mut acc)?;
            }
            Ok((acc, loss))
        })
        .collect();

    let mut total: Option<Gradients> = None;
    let mut loss_sum = 0.0;
    for part in partials {
        let (g, l) = part?;
        loss_sum += l;
        match total.as_mut() {
            None => total = Some(g),
            Some(t) => t.add_assign(&g)?,
        }
    }
    let mut grad = total.unwrap_or_else(|| Gradients::zeros(dims));
    grad.scale(1.0 / batch.len() as f64);
    Ok((grad, loss_sum))
}

/// Mean inference-mode MSE over a dataset.
pub fn dataset_loss(params: &ModelParams, data: &WindowedDataset) -> Result<f64> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let losses: Vec<Result<f64>> = data
        .inputs
        .par_iter()
        .zip(&data.targets)
        .map(|(w, t)| predict(params, w).map(|y| example_loss(&y, t)))
        .collect();
    let mut sum = 0.0;
    for l in losses {
        sum += l?;
    }
    Ok(sum / data.count() as f64)
}

/// Runs the given global epoch indices of one training stream.
///
/// Epoch `e` shuffles with a seed derived from `(cfg.seed, e)`; running epochs
/// `0..2` in one call is bit-identical to running `0..1` then `1..2`. Returns
/// the updated parameters and the mean training loss of each epoch.
pub fn train_epochs(
    params: &ModelParams,
    data: &WindowedDataset,
    cfg: &TrainConfig,
    epochs: Range<u64>,
) -> Result<(ModelParams, Vec<f64>)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let n = data.count();
    let mut p = params.clone();
    let mut losses = Vec::with_capacity(epochs.end.saturating_sub(epochs.start) as usize);
    for epoch in epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let mut start = 0;
        while start < n {
            let end = (start + cfg.batch_size).min(n);
            let (grad, l) = batch_gradient(&p, data, cfg, epoch, &order, start..end)?;
            loss_sum += l;
            p = sgd_step(&p, &grad, cfg.learning_rate)?;
            start = end;
        }
        if !p.is_finite() {
            return Err(ModelError::NumericFailure(format!("parameters diverged in epoch {epoch}")));
        }
        losses.push(loss_sum / n as f64);
    }
    Ok((p, losses))
}

/// `cfg.local_epochs` passes of mini-batch SGD. Returns the updated parameters
/// and the mean training MSE of the final epoch; with zero epochs the
/// parameters are returned unchanged with an inference-mode loss.
pub fn local_train(params: &ModelParams, data: &WindowedDataset, cfg: &TrainConfig) -> Result<(ModelParams, f64)> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if cfg.local_epochs == 0 {
        return Ok((params.clone(), dataset_loss(params, data)?));
    }
    let (p, losses) = train_epochs(params, data, cfg, 0..cfg.local_epochs as u64)?;
    Ok((p, *losses.last().expect("at least one epoch")))
}
