use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fedrep::cli::{self, ScenarioConfig};

#[derive(Parser)]
#[command(name = "fedrep", version, about = "Federated load-forecasting simulator")]
struct Args {
    /// Scenario TOML file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `output_dir`.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Use generated data instead of `dataset_path`.
    #[arg(long, global = true)]
    synthetic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest, filter, aggregate, split, scale and window every retailer.
    Prepare,
    /// Run federated training and score the holdout retailer.
    RunFederated,
    /// Train the pooled baseline and score the holdout retailer.
    RunCentralized,
    /// Put federated and centralized results side by side.
    Compare {
        #[arg(long)]
        federated: Option<PathBuf>,
        #[arg(long)]
        centralized: Option<PathBuf>,
    },
    /// Score a saved parameter vector on the holdout retailer.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn load_config(args: &Args) -> Result<ScenarioConfig> {
    let path = args.config.as_ref().context("--config <file> is required for this command")?;
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(args: &Args) -> Result<()> {
    match &args.command {
        Command::Prepare => {
            let cfg = load_config(args)?;
            let counts = cli::with_threads(args.threads, || cli::prepare(&cfg, args.synthetic))??;
            println!("postcode,train_windows,test_windows,min_kwh,max_kwh");
            for c in counts {
                println!("{},{},{},{},{}", c.postcode, c.train_windows, c.test_windows, c.scaler.min, c.scaler.max);
            }
        }
        Command::RunFederated => {
            let cfg = load_config(args)?;
            let out = cli::with_threads(args.threads, || cli::run_federated(&cfg, args.synthetic))??;
            for s in &out.summaries {
                println!(
                    "{} ({}): holdout MSE min {} max {} mean {}, {} rounds on average",
                    s.scenario, s.basis, s.min_mse, s.max_mse, s.mean_mse, s.rounds_to_convergence
                );
            }
            println!("results in {}", cli::federated_dir(&cfg).display());
        }
        Command::RunCentralized => {
            let cfg = load_config(args)?;
            let out = cli::with_threads(args.threads, || cli::run_centralized(&cfg, args.synthetic))??;
            println!(
                "centralized: holdout MSE {} (scaled), {} (kWh)",
                out.holdout_scaled.mse, out.holdout_raw.mse
            );
            println!("results in {}", cli::centralized_dir(&cfg).display());
        }
        Command::Compare { federated, centralized } => {
            let (fed, cen, out) = match (federated, centralized) {
                (Some(f), Some(c)) => {
                    let out = args.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
                    (f.clone(), c.clone(), out)
                }
                _ => {
                    let cfg = load_config(args)?;
                    let f = federated.clone().unwrap_or_else(|| cli::federated_dir(&cfg));
                    let c = centralized.clone().unwrap_or_else(|| cli::centralized_dir(&cfg));
                    (f, c, cfg.output_dir)
                }
            };
            let rows = cli::compare(&fed, &cen, &out)?;
            println!("basis,federated_mse,centralized_mse,delta");
            for r in rows {
                println!("{},{},{},{}", r.basis, r.federated_mse, r.centralized_mse, r.delta());
            }
        }
        Command::Evaluate { checkpoint } => {
            let cfg = load_config(args)?;
            let path = checkpoint.clone().unwrap_or_else(|| cli::default_checkpoint(&cfg));
            let (scaled, raw) = cli::with_threads(args.threads, || cli::evaluate(&cfg, &path, args.synthetic))??;
            println!("holdout MSE {} (scaled), {} (kWh)", scaled.mse, raw.mse);
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FEDREP_LOG", "warn")).init();
    let args = Args::parse();
    if let Err(e) = run(&args) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
