use super::Result;
use crate::data::WindowedDataset;
use crate::model::{train_epochs, ModelError, ModelParams, TrainConfig};

/// Trains one model on the pooled data of every retailer for `epochs` epochs
/// (same model and optimizer as the clients; `cfg.local_epochs` is ignored).
/// Returns the final parameters and the mean training loss of each epoch.
pub fn train_centralized(
    initial: &ModelParams,
    pooled: &WindowedDataset,
    cfg: &TrainConfig,
    epochs: usize,
) -> Result<(ModelParams, Vec<f64>)> {
    if pooled.is_empty() {
        return Err(ModelError::EmptyDataset.into());
    }
    if epochs == 0 {
        return Ok((initial.clone(), Vec::new()));
    }
    Ok(train_epochs(initial, pooled, cfg, 0..epochs as u64)?)
}
