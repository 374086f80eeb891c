use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use crate::data::synthetic::SyntheticConfig;
use crate::data::{DatasetLayout, DEFAULT_LOOKAHEAD, DEFAULT_LOOKBACK, DEFAULT_TRAIN_FRACTION};
use crate::fed::{ConvergenceRule, RoundConfig, SeedScope};
use crate::model::{ModelDims, TrainConfig};
use crate::privacy::{Codec, DpConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub train_fraction: f64,
    pub lookback: usize,
    pub lookahead: usize,
    /// Forward-fill missing half-hours instead of failing.
    pub forward_fill: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            train_fraction: DEFAULT_TRAIN_FRACTION,
            lookback: DEFAULT_LOOKBACK,
            lookahead: DEFAULT_LOOKAHEAD,
            forward_fill: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub learning_rate: f64,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            learning_rate: t.learning_rate,
            dropout_rate: t.dropout_rate,
            batch_size: t.batch_size,
            local_epochs: t.local_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoundsSection {
    pub max_rounds: usize,
    pub client_fraction: f64,
    /// 0 disables early stopping.
    pub patience: usize,
    pub min_rel_improvement: f64,
    pub seed_scope: SeedScope,
    /// Write the global parameter vector after every round.
    pub checkpoint_every_round: bool,
}

impl Default for RoundsSection {
    fn default() -> Self {
        let c = ConvergenceRule::default();
        Self {
            max_rounds: 80,
            client_fraction: 1.0,
            patience: c.patience,
            min_rel_improvement: c.min_rel_improvement,
            seed_scope: SeedScope::PerClient,
            checkpoint_every_round: false,
        }
    }
}

/// The `dp.*` keys. Client and centre share ε, δ and C; each side has its own switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpSection {
    pub enabled: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub clip_norm: f64,
    pub server_enabled: bool,
}

impl Default for DpSection {
    fn default() -> Self {
        let d = DpConfig::default();
        Self { enabled: d.enabled, epsilon: d.epsilon, delta: d.delta, clip_norm: d.clip_norm, server_enabled: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CentralizedSection {
    pub epochs: usize,
}

impl Default for CentralizedSection {
    fn default() -> Self {
        Self { epochs: 30 }
    }
}

/// One scenario: which retailers take part, how they train, where output goes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Raw smart-meter file. Unused with `--synthetic`.
    pub dataset_path: Option<PathBuf>,
    pub dataset_layout: DatasetLayout,
    /// One retailer per postcode.
    pub postcodes: Vec<u32>,
    /// Retailer held out of training and used for evaluation.
    pub holdout_postcode: u32,
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub repetitions: usize,
    pub data: DataSection,
    pub model: ModelDims,
    pub train: TrainSection,
    pub rounds: RoundsSection,
    pub dp: DpSection,
    pub codec: Codec,
    pub centralized: CentralizedSection,
    pub synthetic: SyntheticConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            dataset_path: None,
            dataset_layout: DatasetLayout::Long,
            postcodes: Vec::new(),
            holdout_postcode: 0,
            output_dir: PathBuf::from("out"),
            master_seed: 0,
            repetitions: 5,
            data: DataSection::default(),
            model: ModelDims::default(),
            train: TrainSection::default(),
            rounds: RoundsSection::default(),
            dp: DpSection::default(),
            codec: Codec::Identity,
            centralized: CentralizedSection::default(),
            synthetic: SyntheticConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> anyhow::Result<Self> {
        let cfg: Self = toml::from_str(s).context("parsing scenario config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = cfg.dataset_path.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.postcodes.is_empty() {
            bail!("`postcodes` must list at least one retailer");
        }
        let mut seen = std::collections::HashSet::new();
        for pc in &self.postcodes {
            if !seen.insert(pc) {
                bail!("postcode {pc} listed twice");
            }
        }
        if self.postcodes.contains(&self.holdout_postcode) {
            bail!("holdout postcode {} must not be a training retailer", self.holdout_postcode);
        }
        if self.repetitions == 0 {
            bail!("`repetitions` must be at least 1");
        }
        if self.model.input_size != 1 {
            bail!("univariate series: model.input_size must be 1");
        }
        if self.model.output_size != self.data.lookahead {
            bail!(
                "model.output_size ({}) must equal data.lookahead ({})",
                self.model.output_size,
                self.data.lookahead
            );
        }
        self.model.validate()?;
        self.round_config().validate()?;
        Ok(())
    }

    /// Training config without a stream seed (the caller derives it).
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            dropout_rate: self.train.dropout_rate,
            batch_size: self.train.batch_size,
            local_epochs: self.train.local_epochs,
            seed: 0,
        }
    }

    pub fn round_config(&self) -> RoundConfig {
        let dp = DpConfig {
            enabled: self.dp.enabled,
            epsilon: self.dp.epsilon,
            delta: self.dp.delta,
            clip_norm: self.dp.clip_norm,
        };
        RoundConfig {
            max_rounds: self.rounds.max_rounds,
            client_fraction: self.rounds.client_fraction,
            train: self.train_config(),
            dp,
            server_dp: DpConfig { enabled: self.dp.server_enabled, ..dp },
            codec: self.codec.clone(),
            convergence: ConvergenceRule {
                patience: self.rounds.patience,
                min_rel_improvement: self.rounds.min_rel_improvement,
            },
            seed_scope: self.rounds.seed_scope,
        }
    }

    /// Every retailer the pipeline prepares: the training set then the holdout.
    pub fn all_postcodes(&self) -> Vec<u32> {
        let mut v = self.postcodes.clone();
        v.push(self.holdout_postcode);
        v
    }
}
