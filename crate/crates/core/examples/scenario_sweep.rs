//! Holdout error and rounds to convergence as the number of retailers grows.

use fedrep::data::synthetic::{generate, SyntheticConfig};
use fedrep::data::{filter_gc, prepare_retailer};
use fedrep::fed::{run_training, ClientState, RoundConfig, TrainingRun};
use fedrep::metrics::{evaluate_holdout, summarize_scenario, write_summary_csv, EvalResult, MseBasis};
use fedrep::model::ModelDims;

fn main() -> anyhow::Result<()> {
    let all = [2287, 2289, 2291, 2292, 2293, 2294, 2296, 2297, 2290];
    let gc = filter_gc(&generate(&all, &SyntheticConfig { days: 7, ..Default::default() }));
    let mut reps = all
        .iter()
        .map(|&pc| prepare_retailer(&gc, pc, 0.7, 12, 5, false))
        .collect::<Result<Vec<_>, _>>()?;
    let holdout = reps.pop().expect("holdout listed last");

    let dims = ModelDims::new(1, 16, 8, 5);
    let cfg = RoundConfig { max_rounds: 40, ..Default::default() };
    let mut rows = Vec::new();
    for (scenario, n) in [("1", 4), ("2", 6), ("3", 8)] {
        let clients: Vec<ClientState> =
            reps[..n].iter().map(|r| ClientState::new(r.postcode, r.train.clone(), r.test.clone())).collect();
        let mut results: Vec<(TrainingRun, EvalResult)> = Vec::new();
        for seed in 0..2 {
            let run = run_training(&clients, &cfg, dims, seed)?;
            let eval = evaluate_holdout(&run.final_params, &holdout.test, MseBasis::Scaled)?;
            results.push((run, eval));
        }
        let pairs: Vec<_> = results.iter().map(|(r, e)| (r, e)).collect();
        rows.push(summarize_scenario(scenario, n, &pairs, "scaled")?);
    }
    write_summary_csv(std::io::stdout(), &rows)?;
    Ok(())
}
