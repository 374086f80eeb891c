use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use crate::data::{
    filter_gc, load_readings_from, prepare_retailer, synthetic, write_readings, PreparedRetailer, ScalingParams,
    WindowedDataset,
};
use crate::fed::{run_training_with, stream_seed, train_centralized, ClientState, GlobalState, Termination, TrainingRun};
use crate::metrics::{
    predict_all, score, summarize_scenario, write_predictions_csv, write_summary_csv, EvalResult, MseBasis,
    ScenarioSummary,
};
use crate::model::{ModelParams, ParamVector, TrainConfig};

/// Runs `f` on a dedicated pool of `threads` workers (the global pool if `None`).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => bail!("--threads must be at least 1"),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().context("building thread pool")?;
            Ok(pool.install(f))
        }
    }
}

pub fn prepared_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.output_dir.join("prepared")
}

pub fn federated_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.output_dir.join("federated")
}

pub fn centralized_dir(cfg: &ScenarioConfig) -> PathBuf {
    cfg.output_dir.join("centralized")
}

fn windows_path(dir: &Path, postcode: u32) -> PathBuf {
    dir.join(format!("rep_{postcode}.windows.json"))
}

fn scaler_path(dir: &Path, postcode: u32) -> PathBuf {
    dir.join(format!("rep_{postcode}.scaler.json"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    serde_json::to_writer(create(path)?, value).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(std::io::BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Serialize, Deserialize)]
struct WindowsFile {
    postcode: u32,
    train: WindowedDataset,
    test: WindowedDataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetailerCounts {
    pub postcode: u32,
    pub train_windows: usize,
    pub test_windows: usize,
    pub scaler: ScalingParams,
}

/// Raw file → per-retailer windows and scaler sidecars under `<output_dir>/prepared`.
pub fn prepare(cfg: &ScenarioConfig, synthetic_data: bool) -> Result<Vec<RetailerCounts>> {
    let dir = prepared_dir(cfg);
    let readings = if synthetic_data {
        let readings = synthetic::generate(&cfg.all_postcodes(), &cfg.synthetic);
        let path = dir.join("synthetic_readings.csv");
        write_readings(create(&path)?, &readings).with_context(|| format!("writing {}", path.display()))?;
        log::info!("wrote {} synthetic readings to {}", readings.len(), path.display());
        readings
    } else {
        let Some(path) = cfg.dataset_path.as_ref() else {
            bail!("config has no `dataset_path`; set it or pass --synthetic");
        };
        let file = File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
        load_readings_from(std::io::BufReader::new(file), cfg.dataset_layout)
            .with_context(|| format!("reading dataset {}", path.display()))?
    };
    let gc = filter_gc(&readings);
    log::info!("{} readings, {} general consumption", readings.len(), gc.len());

    let mut counts = Vec::new();
    for pc in cfg.all_postcodes() {
        let d = &cfg.data;
        let rep = prepare_retailer(&gc, pc, d.train_fraction, d.lookback, d.lookahead, d.forward_fill)
            .with_context(|| format!("preparing retailer {pc}"))?;
        write_json(&windows_path(&dir, pc), &WindowsFile { postcode: pc, train: rep.train.clone(), test: rep.test.clone() })?;
        write_json(&scaler_path(&dir, pc), &rep.scaler)?;
        log::info!("retailer {pc}: {} train / {} test windows", rep.train.count(), rep.test.count());
        counts.push(RetailerCounts {
            postcode: pc,
            train_windows: rep.train.count(),
            test_windows: rep.test.count(),
            scaler: rep.scaler,
        });
    }
    Ok(counts)
}

/// Loads prepared retailers in `all_postcodes` order (holdout last).
/// With `synthetic_data`, missing files are generated first.
pub fn load_prepared(cfg: &ScenarioConfig, synthetic_data: bool) -> Result<Vec<PreparedRetailer>> {
    let dir = prepared_dir(cfg);
    let missing = cfg.all_postcodes().into_iter().any(|pc| !windows_path(&dir, pc).exists());
    if missing {
        if synthetic_data {
            prepare(cfg, true)?;
        } else {
            bail!(
                "prepared data missing under {}; run `fedrep prepare --config <file>` first",
                dir.display()
            );
        }
    }
    cfg.all_postcodes()
        .into_iter()
        .map(|pc| {
            let w: WindowsFile = read_json(&windows_path(&dir, pc))?;
            let scaler: ScalingParams = read_json(&scaler_path(&dir, pc))?;
            ensure!(w.postcode == pc, "{} holds postcode {}", windows_path(&dir, pc).display(), w.postcode);
            for d in [&w.train, &w.test] {
                ensure!(
                    d.is_empty() || (d.lookback() == cfg.data.lookback && d.lookahead() == cfg.data.lookahead),
                    "prepared windows for {pc} do not match the configured lookback/lookahead; rerun `fedrep prepare`"
                );
            }
            Ok(PreparedRetailer { postcode: pc, scaler, train: w.train, test: w.test })
        })
        .collect()
}

fn write_holdout_csv(path: &Path, rows: &[(&str, &EvalResult)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let horizon = rows.first().map_or(0, |r| r.1.per_horizon_mse.len());
    let mut header = vec!["basis".to_string(), "mse".to_string()];
    header.extend((1..=horizon).map(|h| format!("mse_h{h}")));
    header.push("n_predictions".into());
    w.write_record(&header)?;
    for (label, r) in rows {
        let mut rec = vec![label.to_string(), r.mse.to_string()];
        rec.extend(r.per_horizon_mse.iter().map(|v| v.to_string()));
        rec.push(r.n_predictions.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_losses_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["step", "loss"])?;
    for (i, l) in losses.iter().enumerate() {
        w.write_record([(i + 1).to_string(), l.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_rounds_csv(path: &Path, run: &TrainingRun, client_ids: &[u32]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["round".to_string(), "avg_loss".to_string()];
    header.extend(client_ids.iter().map(|id| format!("loss_{id}")));
    header.push("checksum".into());
    w.write_record(&header)?;
    for r in &run.reports {
        let mut rec = vec![r.round.to_string(), r.avg_loss.to_string()];
        for id in client_ids {
            let cell = r.per_client_losses.iter().find(|l| l.0 == *id).map(|l| l.1.to_string());
            rec.push(cell.unwrap_or_default());
        }
        rec.push(format!("{:016x}", r.global_checksum));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_checkpoint(path: &Path, params: &ParamVector) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, params.to_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// Holdout scores on both bases plus kWh predictions written to `dir`.
fn evaluate_into(dir: &Path, params: &ModelParams, holdout: &PreparedRetailer) -> Result<(EvalResult, EvalResult)> {
    let preds = predict_all(params, &holdout.test)?;
    let scaled = score(&holdout.test, &preds, MseBasis::Scaled)?;
    let raw = score(&holdout.test, &preds, MseBasis::Raw(holdout.scaler))?;
    let path = dir.join(format!("predictions_{}.csv", holdout.postcode));
    write_predictions_csv(create(&path)?, &holdout.test, &preds, MseBasis::Raw(holdout.scaler))
        .with_context(|| format!("writing {}", path.display()))?;
    write_holdout_csv(&dir.join("holdout.csv"), &[("scaled", &scaled), ("raw_kwh", &raw)])?;
    Ok((scaled, raw))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunOutcome {
    pub master_seed: u64,
    pub rounds: usize,
    pub terminated_by: &'static str,
    pub holdout_scaled: EvalResult,
    pub holdout_raw: EvalResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedOutcome {
    pub runs: Vec<RunOutcome>,
    pub summaries: Vec<ScenarioSummary>,
}

fn mean_eval(results: &[&EvalResult]) -> EvalResult {
    let n = results.len() as f64;
    let horizon = results[0].per_horizon_mse.len();
    EvalResult {
        mse: results.iter().map(|r| r.mse).sum::<f64>() / n,
        per_horizon_mse: (0..horizon).map(|h| results.iter().map(|r| r.per_horizon_mse[h]).sum::<f64>() / n).collect(),
        n_predictions: results[0].n_predictions,
    }
}

/// Federated training repeated `cfg.repetitions` times; repetition `r` uses
/// master seed `cfg.master_seed + r`.
pub fn run_federated(cfg: &ScenarioConfig, synthetic_data: bool) -> Result<FederatedOutcome> {
    let mut prepared = load_prepared(cfg, synthetic_data)?;
    let holdout = prepared.pop().expect("holdout is always prepared");
    let clients: Vec<ClientState> =
        prepared.into_iter().map(|p| ClientState::new(p.postcode, p.train, p.test)).collect();
    let mut client_ids: Vec<u32> = clients.iter().map(|c| c.client_id).collect();
    client_ids.sort_unstable();
    let round_cfg = cfg.round_config();
    let out = federated_dir(cfg);

    let mut runs = Vec::new();
    let mut trained = Vec::new();
    for rep in 0..cfg.repetitions {
        let seed = cfg.master_seed.wrapping_add(rep as u64);
        let dir = out.join(format!("run_{rep}"));
        log::info!("federated run {rep} (seed {seed}) with {} retailers", clients.len());
        let mut checkpoint_err = None;
        let run = run_training_with(&clients, &round_cfg, GlobalState::new(cfg.model, seed)?, |report, state| {
            if cfg.rounds.checkpoint_every_round && checkpoint_err.is_none() {
                let path = dir.join("checkpoints").join(format!("round_{:03}.frep", report.round));
                checkpoint_err = write_checkpoint(&path, &state.params).err();
            }
        })?;
        if let Some(e) = checkpoint_err {
            return Err(e);
        }
        write_rounds_csv(&dir.join("rounds.csv"), &run, &client_ids)?;
        write_checkpoint(&dir.join("final.frep"), &run.final_params.flatten())?;
        let (scaled, raw) = evaluate_into(&dir, &run.final_params, &holdout)?;
        let outcome = RunOutcome {
            master_seed: seed,
            rounds: run.rounds(),
            terminated_by: run.terminated_by.as_str(),
            holdout_scaled: scaled,
            holdout_raw: raw,
        };
        write_json(&dir.join("run.json"), &outcome)?;
        runs.push(outcome);
        trained.push(run);
    }

    let mut summaries = Vec::new();
    for basis in ["scaled", "raw_kwh"] {
        let pairs: Vec<(&TrainingRun, &EvalResult)> = trained
            .iter()
            .zip(&runs)
            .map(|(t, o)| (t, if basis == "scaled" { &o.holdout_scaled } else { &o.holdout_raw }))
            .collect();
        summaries.push(summarize_scenario(&cfg.name, clients.len(), &pairs, basis)?);
    }
    write_summary_csv(create(&out.join("scenario_summary.csv"))?, &summaries)?;
    let scaled: Vec<&EvalResult> = runs.iter().map(|r| &r.holdout_scaled).collect();
    let raw: Vec<&EvalResult> = runs.iter().map(|r| &r.holdout_raw).collect();
    write_holdout_csv(&out.join("holdout.csv"), &[("scaled", &mean_eval(&scaled)), ("raw_kwh", &mean_eval(&raw))])?;
    let first_losses: Vec<f64> = trained[0].reports.iter().map(|r| r.avg_loss).collect();
    write_losses_csv(&out.join("losses.csv"), &first_losses)?;
    if trained.iter().all(|t| t.terminated_by == Termination::MaxRounds) {
        log::info!("no run met the plateau rule within {} rounds", cfg.rounds.max_rounds);
    }
    Ok(FederatedOutcome { runs, summaries })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedOutcome {
    pub epoch_losses: Vec<f64>,
    pub holdout_scaled: EvalResult,
    pub holdout_raw: EvalResult,
}

/// Trains the model on the pooled windows of all training retailers,
/// starting from the same initial weights as federated run 0. Shuffling and
/// dropout follow the stream of the lowest training postcode, so a one-retailer
/// pool reproduces that retailer's federated training exactly.
pub fn run_centralized(cfg: &ScenarioConfig, synthetic_data: bool) -> Result<CentralizedOutcome> {
    let mut prepared = load_prepared(cfg, synthetic_data)?;
    let holdout = prepared.pop().expect("holdout is always prepared");
    let pooled = WindowedDataset::pooled(prepared.iter().map(|p| &p.train));
    let initial = GlobalState::new(cfg.model, cfg.master_seed)?.model()?;
    let lowest = prepared.iter().map(|p| p.postcode).min().expect("postcodes are non-empty");
    let train = TrainConfig { seed: stream_seed(cfg.master_seed, lowest), ..cfg.train_config() };
    log::info!("centralized training on {} pooled windows for {} epochs", pooled.count(), cfg.centralized.epochs);
    let (params, epoch_losses) = train_centralized(&initial, &pooled, &train, cfg.centralized.epochs)?;

    let dir = centralized_dir(cfg);
    write_losses_csv(&dir.join("losses.csv"), &epoch_losses)?;
    write_checkpoint(&dir.join("final.frep"), &params.flatten())?;
    let (holdout_scaled, holdout_raw) = evaluate_into(&dir, &params, &holdout)?;
    Ok(CentralizedOutcome { epoch_losses, holdout_scaled, holdout_raw })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub basis: String,
    pub federated_mse: f64,
    pub centralized_mse: f64,
}

impl ComparisonRow {
    /// Federated minus centralized.
    pub fn delta(&self) -> f64 {
        self.federated_mse - self.centralized_mse
    }
}

fn read_csv_rows(path: &Path, hint: &str) -> Result<Vec<csv::StringRecord>> {
    ensure!(path.exists(), "{} not found; {hint}", path.display());
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.records().map(|rec| rec.with_context(|| format!("reading {}", path.display()))).collect()
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse().with_context(|| format!("bad number {s:?} in {}", path.display()))
}

fn read_losses(dir: &Path, hint: &str) -> Result<Vec<f64>> {
    let path = dir.join("losses.csv");
    read_csv_rows(&path, hint)?.iter().map(|r| parse_f64(r.get(1).unwrap_or(""), &path)).collect()
}

fn read_holdout(dir: &Path, hint: &str) -> Result<Vec<(String, f64)>> {
    let path = dir.join("holdout.csv");
    read_csv_rows(&path, hint)?
        .iter()
        .map(|r| Ok((r.get(0).unwrap_or("").to_string(), parse_f64(r.get(1).unwrap_or(""), &path)?)))
        .collect()
}

/// Aligns the two loss curves and diffs the holdout errors.
/// Writes `comparison.csv` (per-step losses) and `comparison_holdout.csv` into `out_dir`.
pub fn compare(federated: &Path, centralized: &Path, out_dir: &Path) -> Result<Vec<ComparisonRow>> {
    let fed_hint = "run `fedrep run-federated` first";
    let cen_hint = "run `fedrep run-centralized` first";
    let fed_losses = read_losses(federated, fed_hint)?;
    let cen_losses = read_losses(centralized, cen_hint)?;
    let fed_holdout = read_holdout(federated, fed_hint)?;
    let cen_holdout = read_holdout(centralized, cen_hint)?;

    let mut w = csv::Writer::from_writer(create(&out_dir.join("comparison.csv"))?);
    w.write_record(["step", "federated_loss", "centralized_loss"])?;
    let cell = |v: &[f64], i: usize| v.get(i).map(|x| x.to_string()).unwrap_or_default();
    for i in 0..fed_losses.len().max(cen_losses.len()) {
        w.write_record([(i + 1).to_string(), cell(&fed_losses, i), cell(&cen_losses, i)])?;
    }
    w.flush()?;

    let mut rows = Vec::new();
    for (basis, f) in &fed_holdout {
        if let Some((_, c)) = cen_holdout.iter().find(|(b, _)| b == basis) {
            rows.push(ComparisonRow { basis: basis.clone(), federated_mse: *f, centralized_mse: *c });
        }
    }
    ensure!(!rows.is_empty(), "holdout files share no MSE basis");
    let mut w = csv::Writer::from_writer(create(&out_dir.join("comparison_holdout.csv"))?);
    w.write_record(["basis", "federated_mse", "centralized_mse", "delta"])?;
    for r in &rows {
        w.write_record([
            r.basis.clone(),
            r.federated_mse.to_string(),
            r.centralized_mse.to_string(),
            r.delta().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(rows)
}

/// Default checkpoint: the final model of federated run 0.
pub fn default_checkpoint(cfg: &ScenarioConfig) -> PathBuf {
    federated_dir(cfg).join("run_0").join("final.frep")
}

/// Scores a saved parameter vector on the holdout retailer.
/// Writes `holdout.csv` and predictions into `<output_dir>/evaluation`.
pub fn evaluate(cfg: &ScenarioConfig, checkpoint: &Path, synthetic_data: bool) -> Result<(EvalResult, EvalResult)> {
    ensure!(
        checkpoint.exists(),
        "no checkpoint at {}; run `fedrep run-federated` first or pass --checkpoint",
        checkpoint.display()
    );
    let bytes = fs::read(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let vector = ParamVector::from_bytes(&bytes).with_context(|| format!("decoding {}", checkpoint.display()))?;
    let params = ModelParams::unflatten(&vector, cfg.model)
        .with_context(|| format!("{} does not match the configured model shape", checkpoint.display()))?;
    let holdout = load_prepared(cfg, synthetic_data)?.pop().expect("holdout is always prepared");
    evaluate_into(&cfg.output_dir.join("evaluation"), &params, &holdout)
}

