use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::aggregate::{aggregate, DecodedUpdate};
use super::{
    fnv1a64, init_seed, noise_seed, selection_seed, server_noise_seed, stream_seed, ClientState, ConvergenceRule,
    FedError, Result, RoundConfig, SeedScope,
};
use crate::model::{train_epochs, dataset_loss, ModelDims, ModelParams, ParamVector, TrainConfig};
use crate::privacy::{decode, encode, perturb};

/// The control centre's view between rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub dims: ModelDims,
    pub master_seed: u64,
    pub params: ParamVector,
}

impl GlobalState {
    /// Fresh model initialized from the master seed.
    pub fn new(dims: ModelDims, master_seed: u64) -> Result<Self> {
        let params = ModelParams::init(dims, init_seed(master_seed))?.flatten();
        Ok(Self { dims, master_seed, params })
    }

    pub fn model(&self) -> Result<ModelParams> {
        Ok(ModelParams::unflatten(&self.params, self.dims)?)
    }

    pub fn checksum(&self) -> u64 {
        fnv1a64(&self.params.to_bytes())
    }
}

/// What a retailer sends back after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u32,
    /// Codec-encoded, clipped and perturbed weights.
    pub payload: Vec<u8>,
    pub n_samples: usize,
    /// Mean training MSE of the last local epoch.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub selected_client_ids: Vec<u32>,
    /// Mean of `per_client_losses`.
    pub avg_loss: f64,
    pub per_client_losses: Vec<(u32, f64)>,
    /// FNV-1a of the serialized global vector after this round.
    pub global_checksum: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Convergence,
    MaxRounds,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Convergence => "convergence",
            Termination::MaxRounds => "max_rounds",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub reports: Vec<RoundReport>,
    pub final_params: ModelParams,
    pub terminated_by: Termination,
}

impl TrainingRun {
    pub fn rounds(&self) -> usize {
        self.reports.len()
    }
}

/// `m = max(⌈C·N⌉, 1)`.
pub fn selection_size(n_clients: usize, fraction: f64) -> usize {
    // The tolerance keeps products like 0.7 · 10 = 7.000000000000001 at 7.
    let m = (fraction * n_clients as f64 - 1e-9).ceil().max(1.0) as usize;
    m.min(n_clients)
}

/// Samples `m` clients uniformly without replacement; the result is sorted by `client_id`.
pub fn select_clients(clients: &[ClientState], fraction: f64, round_seed: u64) -> Vec<&ClientState> {
    let m = selection_size(clients.len(), fraction);
    let mut picked: Vec<&ClientState> = if m == clients.len() {
        clients.iter().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(round_seed);
        rand::seq::index::sample(&mut rng, clients.len(), m)
            .into_iter()
            .map(|i| &clients[i])
            .collect()
    };
    picked.sort_by_key(|c| c.client_id);
    picked
}

fn stream_client_id(cfg: &RoundConfig, client_id: u32) -> u32 {
    match cfg.seed_scope {
        SeedScope::PerClient => client_id,
        SeedScope::Shared => 0,
    }
}

/// One retailer's work in round `round` (1-based): decode the broadcast,
/// train locally, clip and perturb, encode.
pub fn client_update(
    client: &ClientState,
    broadcast: &[u8],
    dims: ModelDims,
    cfg: &RoundConfig,
    master_seed: u64,
    round: usize,
) -> Result<ClientUpdate> {
    let global = decode(broadcast, &cfg.codec)?;
    let params = ModelParams::unflatten(&global, dims)?;
    let sid = stream_client_id(cfg, client.client_id);

    let train = TrainConfig { seed: stream_seed(master_seed, sid), ..cfg.train };
    let (trained, loss) = if train.local_epochs == 0 {
        (params.clone(), dataset_loss(&params, &client.train_data)?)
    } else {
        let e = train.local_epochs as u64;
        let first = (round as u64 - 1) * e;
        let (p, losses) = train_epochs(&params, &client.train_data, &train, first..first + e)?;
        (p, *losses.last().expect("at least one epoch"))
    };

    let released = perturb(&trained.flatten(), &cfg.dp, noise_seed(master_seed, sid, round))?;
    Ok(ClientUpdate {
        client_id: client.client_id,
        payload: encode(&released, &cfg.codec),
        n_samples: client.n_samples(),
        loss,
    })
}

/// One communication round. Replaces `state.params` with the new global vector.
pub fn run_round(state: &mut GlobalState, clients: &[ClientState], cfg: &RoundConfig, round: usize) -> Result<RoundReport> {
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    let selected = select_clients(clients, cfg.client_fraction, selection_seed(state.master_seed, round));
    let broadcast = encode(&state.params, &cfg.codec);

    let updates: Vec<Result<ClientUpdate>> = selected
        .par_iter()
        .map(|c| client_update(c, &broadcast, state.dims, cfg, state.master_seed, round))
        .collect();
    let updates: Vec<ClientUpdate> = updates.into_iter().collect::<Result<_>>()?;

    let decoded = updates
        .iter()
        .map(|u| {
            Ok(DecodedUpdate { client_id: u.client_id, params: decode(&u.payload, &cfg.codec)?, n_samples: u.n_samples })
        })
        .collect::<Result<Vec<_>>>()?;
    let averaged = aggregate(&decoded)?;
    state.params = perturb(&averaged, &cfg.server_dp, server_noise_seed(state.master_seed, round))?;

    let per_client_losses: Vec<(u32, f64)> = updates.iter().map(|u| (u.client_id, u.loss)).collect();
    let avg_loss = per_client_losses.iter().map(|l| l.1).sum::<f64>() / per_client_losses.len() as f64;
    Ok(RoundReport {
        round,
        selected_client_ids: selected.iter().map(|c| c.client_id).collect(),
        avg_loss,
        per_client_losses,
        global_checksum: state.checksum(),
    })
}

/// Tracks the plateau rule across rounds.
#[derive(Debug, Clone)]
pub struct PlateauDetector {
    rule: ConvergenceRule,
    best: Option<f64>,
    stale: usize,
}

impl PlateauDetector {
    pub fn new(rule: ConvergenceRule) -> Self {
        Self { rule, best: None, stale: 0 }
    }

    /// Feeds one round loss; returns true once the plateau rule fires.
    pub fn observe(&mut self, loss: f64) -> bool {
        match self.best {
            None => self.best = Some(loss),
            Some(best) => {
                let improvement = if best.abs() > 0.0 {
                    (best - loss) / best.abs()
                } else if loss < best {
                    f64::INFINITY
                } else {
                    0.0
                };
                if improvement < self.rule.min_rel_improvement {
                    self.stale += 1;
                } else {
                    self.stale = 0;
                }
                self.best = Some(best.min(loss));
            }
        }
        self.rule.patience > 0 && self.stale >= self.rule.patience
    }
}

fn check_clients(clients: &[ClientState]) -> Result<()> {
    if clients.is_empty() {
        return Err(FedError::NoClients);
    }
    let mut seen = HashSet::new();
    for c in clients {
        if c.n_samples() == 0 {
            return Err(FedError::EmptyClient(c.client_id));
        }
        if !seen.insert(c.client_id) {
            return Err(FedError::DuplicateClient(c.client_id));
        }
    }
    Ok(())
}

pub fn run_training(clients: &[ClientState], cfg: &RoundConfig, dims: ModelDims, master_seed: u64) -> Result<TrainingRun> {
    run_training_with(clients, cfg, GlobalState::new(dims, master_seed)?, |_, _| {})
}

/// Runs rounds `1..=K` from `state`, calling `observer` after every round.
pub fn run_training_with(
    clients: &[ClientState],
    cfg: &RoundConfig,
    mut state: GlobalState,
    mut observer: impl FnMut(&RoundReport, &GlobalState),
) -> Result<TrainingRun> {
    cfg.validate()?;
    check_clients(clients)?;
    let mut plateau = PlateauDetector::new(cfg.convergence);
    let mut reports = Vec::new();
    let mut terminated_by = Termination::MaxRounds;
    for k in 1..=cfg.max_rounds {
        let report = run_round(&mut state, clients, cfg, k)?;
        log::info!("round {k}: avg loss {:.6} ({} clients)", report.avg_loss, report.selected_client_ids.len());
        observer(&report, &state);
        let converged = plateau.observe(report.avg_loss);
        reports.push(report);
        if converged {
            terminated_by = Termination::Convergence;
            break;
        }
    }
    Ok(TrainingRun { reports, final_params: state.model()?, terminated_by })
}
