//! Two-layer stacked LSTM forecaster with a dense ReLU head, trained by
//! backpropagation-through-time and plain SGD. Double precision throughout.

mod lstm;
mod params;
mod train;

use thiserror::Error;

pub use lstm::{
    backward, backward_into, dropout_mask, example_loss, forward, predict, DropoutMasks, ForwardCache, LayerCache,
    Mode,
};
pub use params::{
    Gradients, LstmLayerParams, Matrix, ModelDims, ModelParams, ParamVector, FORGET, GATE_NAMES, HEADER_LEN,
};
pub use train::{
    batch_gradient, dataset_loss, epoch_order, epoch_seed, example_seed, local_train, sgd_step, train_epochs,
    TrainConfig,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model dimensions {0:?}")]
    BadDims(ModelDims),

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: ModelDims, actual: ModelDims },

    #[error("parameter vector length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("window of length {len} does not split into steps of {input_size}")]
    BadWindow { len: usize, input_size: usize },

    #[error("forward cache does not match parameters or target")]
    CacheMismatch,

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid training config: {0}")]
    BadConfig(String),

    #[error("bad parameter file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;
