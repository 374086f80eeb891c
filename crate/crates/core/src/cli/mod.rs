//! Scenario config files and the commands behind the `fedrep` binary.
//!
//! Every command reads a [`ScenarioConfig`] and writes under its
//! `output_dir`:
//!
//! ```text
//! prepared/rep_<postcode>.windows.json   train/test windows
//! prepared/rep_<postcode>.scaler.json    min-max parameters
//! federated/run_<r>/rounds.csv           per-round losses and global checksum
//! federated/run_<r>/final.frep           final parameter vector
//! federated/scenario_summary.csv         min/max/mean holdout MSE
//! centralized/losses.csv                 per-epoch loss of the pooled baseline
//! comparison.csv                         both loss curves side by side
//! ```

mod commands;
mod config;

pub use commands::*;
pub use config::*;
