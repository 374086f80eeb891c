//! Control-centre orchestration: client selection, client updates,
//! sample-weighted federated averaging, per-round loss averaging, plateau
//! convergence, and the centralized baseline.
//!
//! One communication round:
//!
//! 1. the centre encodes the global parameter vector and broadcasts it;
//! 2. each selected retailer decodes it, trains locally, clips and perturbs
//!    the resulting weights, encodes them and reports its training MSE;
//! 3. the centre decodes every update and averages with weights `n_h / n`;
//! 4. optionally the centre perturbs the average before the next broadcast;
//! 5. the round loss is the plain mean of the reported client losses.
//!
//! Clients within a round run in parallel. All randomness is keyed on
//! `(master_seed, client_id, round)` and aggregation sums in ascending
//! `client_id` order, so results are bit-identical for any thread count.

mod aggregate;
mod centralized;
mod protocol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::WindowedDataset;
use crate::model::{ModelError, TrainConfig};
use crate::privacy::{Codec, DpConfig, PrivacyError};
use crate::seed::derive_seed;

pub use aggregate::{aggregate, aggregation_weights, DecodedUpdate};
pub use centralized::train_centralized;
pub use protocol::{
    client_update, run_round, run_training, run_training_with, select_clients, selection_size, ClientUpdate,
    GlobalState, PlateauDetector, RoundReport, Termination, TrainingRun,
};

#[derive(Debug, Error)]
pub enum FedError {
    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Privacy(#[from] PrivacyError),

    #[error("no clients")]
    NoClients,

    #[error("client {0} has no training windows")]
    EmptyClient(u32),

    #[error("duplicate client id {0}")]
    DuplicateClient(u32),

    #[error("nothing to aggregate")]
    EmptyAggregation,

    #[error("update length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("total sample count is zero")]
    ZeroSamples,

    #[error("invalid round config: {0}")]
    BadConfig(String),
}

pub type Result<T> = std::result::Result<T, FedError>;

/// One retailer's private data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: u32,
    pub train_data: WindowedDataset,
    pub test_data: WindowedDataset,
}

impl ClientState {
    pub fn new(client_id: u32, train_data: WindowedDataset, test_data: WindowedDataset) -> Self {
        Self { client_id, train_data, test_data }
    }

    /// `n_h`: the number of training windows, used as the aggregation weight.
    pub fn n_samples(&self) -> usize {
        self.train_data.count()
    }
}

/// Plateau rule: stop once the round loss has failed to improve on the best
/// loss so far by at least `min_rel_improvement` (relative) for `patience`
/// consecutive rounds. `patience == 0` disables early stopping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceRule {
    pub patience: usize,
    pub min_rel_improvement: f64,
}

impl Default for ConvergenceRule {
    fn default() -> Self {
        Self { patience: 5, min_rel_improvement: 1e-4 }
    }
}

impl ConvergenceRule {
    pub fn disabled() -> Self {
        Self { patience: 0, ..Self::default() }
    }
}

/// How per-client random streams are keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedScope {
    /// Streams keyed on `(master_seed, client_id)`.
    #[default]
    PerClient,
    /// Every client uses the stream of client 0. Only useful for replication
    /// experiments where clients hold identical data.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundConfig {
    pub max_rounds: usize,
    pub client_fraction: f64,
    pub train: TrainConfig,
    /// Mechanism each client applies to its trained weights.
    pub dp: DpConfig,
    /// Mechanism the centre applies to the averaged weights.
    pub server_dp: DpConfig,
    pub codec: Codec,
    pub convergence: ConvergenceRule,
    pub seed_scope: SeedScope,
}

impl Default for RoundConfig {
    fn default() -> Self {
        Self {
            max_rounds: 80,
            client_fraction: 1.0,
            train: TrainConfig::default(),
            dp: DpConfig::default(),
            server_dp: DpConfig::default(),
            codec: Codec::Identity,
            convergence: ConvergenceRule::default(),
            seed_scope: SeedScope::PerClient,
        }
    }
}

impl RoundConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(FedError::BadConfig("max_rounds must be at least 1".into()));
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return Err(FedError::BadConfig(format!(
                "client_fraction {} must lie in (0, 1]",
                self.client_fraction
            )));
        }
        self.train.validate()?;
        for dp in [&self.dp, &self.server_dp] {
            if dp.enabled {
                crate::privacy::gaussian_sigma(dp)?;
            }
        }
        Ok(())
    }
}

const TAG_INIT: u64 = 0x494e_4954;
const TAG_STREAM: u64 = 0x5354_524d;
const TAG_NOISE: u64 = 0x4e4f_4953;
const TAG_SERVER: u64 = 0x5345_5256;
const TAG_SELECT: u64 = 0x5345_4c45;

/// Seed of the initial global model.
pub fn init_seed(master_seed: u64) -> u64 {
    derive_seed(&[master_seed, TAG_INIT])
}

/// Training stream of one client. Round `k` of a client running `E` local
/// epochs consumes epochs `(k−1)·E .. k·E` of this stream.
pub fn stream_seed(master_seed: u64, client_id: u32) -> u64 {
    derive_seed(&[master_seed, TAG_STREAM, u64::from(client_id)])
}

/// Noise seed of one client's update in one round.
pub fn noise_seed(master_seed: u64, client_id: u32, round: usize) -> u64 {
    derive_seed(&[master_seed, TAG_NOISE, u64::from(client_id), round as u64])
}

pub fn server_noise_seed(master_seed: u64, round: usize) -> u64 {
    derive_seed(&[master_seed, TAG_SERVER, round as u64])
}

pub fn selection_seed(master_seed: u64, round: usize) -> u64 {
    derive_seed(&[master_seed, TAG_SELECT, round as u64])
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}
