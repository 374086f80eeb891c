use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fedrep::cli::{self, ScenarioConfig};

fn config(dir: &Path, postcodes: &str, extra: &str) -> ScenarioConfig {
    let text = format!(
        "name = \"t\"\n\
         postcodes = [{postcodes}]\n\
         holdout_postcode = 2290\n\
         master_seed = 3\n\
         repetitions = 1\n\
         output_dir = \"{}\"\n\
         {extra}\n\
         [model]\nhidden1 = 8\nhidden2 = 4\n\
         [rounds]\nmax_rounds = 3\npatience = 0\n\
         [centralized]\nepochs = 3\n\
         [synthetic]\ndays = 4\ncustomers_per_postcode = 2\n",
        dir.display()
    );
    ScenarioConfig::from_toml_str(&text).unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn shipped_configs() -> Vec<PathBuf> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn shipped_configs_load_and_round_trip() {
    let configs = shipped_configs();
    assert_eq!(configs.len(), 4);
    for path in configs {
        let cfg = ScenarioConfig::load(&path).unwrap();
        let canon = cfg.to_canonical_toml();
        let again = ScenarioConfig::from_toml_str(&canon).unwrap();
        assert_eq!(again, cfg, "{}", path.display());
        assert_eq!(again.to_canonical_toml(), canon);
        assert!(!cfg.postcodes.contains(&cfg.holdout_postcode));
    }
    let sizes: Vec<usize> = ["scenario1", "scenario2", "scenario3"]
        .iter()
        .map(|n| {
            let p = Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../configs/{n}.toml"));
            let cfg = ScenarioConfig::load(&p).unwrap();
            assert_eq!(cfg.rounds.max_rounds, 80);
            assert_eq!(cfg.centralized.epochs, 30);
            cfg.postcodes.len()
        })
        .collect();
    assert_eq!(sizes, vec![4, 6, 8]);
}

#[test]
fn prepare_writes_one_file_pair_per_retailer_and_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "2287, 2289, 2291, 2292", "");
    let counts = cli::prepare(&cfg, true).unwrap();
    assert_eq!(counts.len(), 5);
    let prepared = cli::prepared_dir(&cfg);
    let names = |suffix: &str| {
        fs::read_dir(&prepared)
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(suffix))
            .count()
    };
    assert_eq!(names(".windows.json"), 5);
    assert_eq!(names(".scaler.json"), 5);

    let before = read(prepared.join("rep_2289.windows.json"));
    cli::prepare(&cfg, true).unwrap();
    assert_eq!(read(prepared.join("rep_2289.windows.json")), before);
}

#[test]
fn unknown_postcode_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("raw.csv");
    let readings = fedrep::data::synthetic::generate(&[2287, 2290], &Default::default());
    fedrep::data::write_readings(fs::File::create(&csv).unwrap(), &readings).unwrap();
    let mut cfg = config(dir.path(), "2287, 9999", "");
    cfg.dataset_path = Some(csv);
    let err = format!("{:#}", cli::prepare(&cfg, false).unwrap_err());
    assert!(err.contains("9999"), "{err}");
}

#[test]
fn missing_prepared_data_is_actionable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "2287", "");
    let err = format!("{:#}", cli::run_federated(&cfg, false).unwrap_err());
    assert!(err.contains("fedrep prepare"), "{err}");
}

#[test]
fn single_repetition_summary_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "2287, 2289, 2291, 2292", "");
    let out = cli::run_federated(&cfg, true).unwrap();
    for s in &out.summaries {
        assert_eq!(s.n_retailers, 4);
        assert_eq!(s.repetitions, 1);
        assert_eq!((s.min_mse, s.max_mse), (s.mean_mse, s.mean_mse));
    }
    let summary = String::from_utf8(read(cli::federated_dir(&cfg).join("scenario_summary.csv"))).unwrap();
    assert!(summary.starts_with("scenario,n_retailers,basis,min_mse,max_mse,mean_mse,rounds_to_convergence,repetitions\n"));
    assert!(summary.contains("\nt,4,scaled,"));
    let preds = String::from_utf8(read(cli::federated_dir(&cfg).join("run_0/predictions_2290.csv"))).unwrap();
    assert!(preds.starts_with("timestamp,horizon,actual,predicted\n"));
}

#[test]
fn one_retailer_pool_matches_federated_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "2289", "");
    cli::run_federated(&cfg, true).unwrap();
    cli::run_centralized(&cfg, true).unwrap();
    assert_eq!(
        read(cli::federated_dir(&cfg).join("run_0/final.frep")),
        read(cli::centralized_dir(&cfg).join("final.frep"))
    );
    assert_eq!(
        read(cli::federated_dir(&cfg).join("losses.csv")),
        read(cli::centralized_dir(&cfg).join("losses.csv"))
    );
}

#[test]
fn centralized_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "2287, 2291", "");
    let a = cli::run_centralized(&cfg, true).unwrap();
    let bytes = read(cli::centralized_dir(&cfg).join("final.frep"));
    let b = cli::run_centralized(&cfg, true).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.epoch_losses.len(), 3);
    assert_eq!(read(cli::centralized_dir(&cfg).join("final.frep")), bytes);
}

#[test]
fn compare_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "2287, 2289", "");
    let fed = cli::run_federated(&cfg, true).unwrap();
    let cen = cli::run_centralized(&cfg, true).unwrap();

    let rows = cli::compare(&cli::federated_dir(&cfg), &cli::centralized_dir(&cfg), dir.path()).unwrap();
    let scaled = rows.iter().find(|r| r.basis == "scaled").unwrap();
    assert_eq!(scaled.federated_mse, fed.summaries[0].mean_mse);
    assert_eq!(scaled.centralized_mse, cen.holdout_scaled.mse);
    assert_eq!(scaled.delta(), scaled.federated_mse - scaled.centralized_mse);
    let table = String::from_utf8(read(dir.path().join("comparison.csv"))).unwrap();
    assert_eq!(table.lines().next(), Some("step,federated_loss,centralized_loss"));
    assert_eq!(table.lines().count(), 4);

    let same = cli::compare(&cli::federated_dir(&cfg), &cli::federated_dir(&cfg), dir.path()).unwrap();
    assert!(same.iter().all(|r| r.delta() == 0.0));

    let missing = dir.path().join("nowhere");
    let err = format!("{:#}", cli::compare(&cli::federated_dir(&cfg), &missing, dir.path()).unwrap_err());
    assert!(err.contains("run-centralized"), "{err}");

    let (scaled_eval, _) = cli::evaluate(&cfg, &cli::default_checkpoint(&cfg), true).unwrap();
    assert_eq!(scaled_eval, fed.runs[0].holdout_scaled);
    let err = format!("{:#}", cli::evaluate(&cfg, &missing, true).unwrap_err());
    assert!(err.contains("--checkpoint"), "{err}");
}

#[test]
fn with_threads_rejects_zero() {
    assert!(cli::with_threads(Some(0), || ()).is_err());
    assert_eq!(cli::with_threads(Some(2), rayon::current_num_threads).unwrap(), 2);
}

fn fedrep(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_fedrep")).args(args).env("FEDREP_LOG", "off").output().unwrap()
}

#[test]
fn binary_exit_status_tracks_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.toml");
    fs::write(
        &cfg_path,
        "postcodes = [2287]\nholdout_postcode = 2290\nrepetitions = 1\n\
         [model]\nhidden1 = 4\nhidden2 = 2\n[rounds]\nmax_rounds = 2\n[synthetic]\ndays = 3\n",
    )
    .unwrap();
    let c = cfg_path.to_str().unwrap();
    let out = dir.path().join("out");
    let o = out.to_str().unwrap();

    let ok = fedrep(&["--config", c, "--output-dir", o, "--synthetic", "--seed", "9", "prepare"]);
    assert!(ok.status.success());
    assert!(ok.stderr.is_empty());
    assert!(String::from_utf8_lossy(&ok.stdout).starts_with("postcode,train_windows,test_windows"));

    for bad in [
        vec!["--config", "/does/not/exist.toml", "prepare"],
        vec!["prepare"],
        vec!["--config", c, "--output-dir", o, "--threads", "0", "run-federated"],
        vec!["--config", c, "--output-dir", o, "evaluate", "--checkpoint", "/nope.frep"],
        vec!["compare", "--federated", "/nope/a", "--centralized", "/nope/b"],
        vec!["no-such-command"],
    ] {
        let r = fedrep(&bad);
        assert!(!r.status.success(), "{bad:?}");
        assert!(!r.stderr.is_empty(), "{bad:?}");
    }

    let ok = fedrep(&["--config", c, "--output-dir", o, "run-federated"]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(fedrep(&["--config", c, "--output-dir", o, "evaluate"]).status.success());
}
