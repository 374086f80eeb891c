//! Update sanitization (L2 clipping + Gaussian mechanism) and the
//! encode/decode channel parameters travel through between retailers and the
//! control centre.
//!
//! Aggregation happens on decoded plaintext; the symmetric codec protects
//! parameters in transit only.

mod codec;
mod dp;

use thiserror::Error;

pub use codec::{decode, encode, Codec};
pub use dp::{clip_update, composed_budget, gaussian_sigma, perturb, DpConfig};

#[derive(Debug, Error)]
pub enum PrivacyError {
    #[error("invalid DP config: {0}")]
    InvalidConfig(String),

    #[error("epsilon {0} is outside the Gaussian-mechanism calibration range (0, 1]")]
    OutOfCalibrationRange(f64),

    #[error("authentication failed: wrong key or corrupted payload")]
    Authentication,

    #[error(transparent)]
    Format(#[from] crate::model::ModelError),
}

pub type Result<T> = std::result::Result<T, PrivacyError>;
