//! Federated training against a model trained on the pooled data.

use fedrep::data::synthetic::{generate, SyntheticConfig};
use fedrep::data::{filter_gc, prepare_retailer, WindowedDataset};
use fedrep::fed::{run_training, stream_seed, train_centralized, ClientState, GlobalState, RoundConfig};
use fedrep::metrics::{evaluate_holdout, MseBasis};
use fedrep::model::{ModelDims, TrainConfig};

fn main() -> anyhow::Result<()> {
    let postcodes = [2287, 2289, 2291, 2292, 2290];
    let gc = filter_gc(&generate(&postcodes, &SyntheticConfig { days: 14, ..Default::default() }));
    let mut reps = postcodes
        .iter()
        .map(|&pc| prepare_retailer(&gc, pc, 0.7, 12, 5, false))
        .collect::<Result<Vec<_>, _>>()?;
    let holdout = reps.pop().expect("five postcodes");

    let dims = ModelDims::new(1, 32, 16, 5);
    let seed = 3;
    let epochs = 10;

    let clients: Vec<ClientState> =
        reps.iter().map(|r| ClientState::new(r.postcode, r.train.clone(), r.test.clone())).collect();
    let fed = run_training(&clients, &RoundConfig { max_rounds: epochs, ..Default::default() }, dims, seed)?;

    let pooled = WindowedDataset::pooled(reps.iter().map(|r| &r.train));
    let initial = GlobalState::new(dims, seed)?.model()?;
    let cfg = TrainConfig { seed: stream_seed(seed, 2287), ..Default::default() };
    let (central, losses) = train_centralized(&initial, &pooled, &cfg, epochs)?;

    let f = evaluate_holdout(&fed.final_params, &holdout.test, MseBasis::Scaled)?;
    let c = evaluate_holdout(&central, &holdout.test, MseBasis::Scaled)?;
    println!("federated:   {} rounds, holdout MSE {:.5}", fed.rounds(), f.mse);
    println!("centralized: {} epochs, holdout MSE {:.5} (final train loss {:.5})", epochs, c.mse, losses[epochs - 1]);
    println!("delta (federated - centralized): {:+.5}", f.mse - c.mse);
    Ok(())
}
