//! Four retailers training together for a handful of rounds.

use fedrep::data::synthetic::{generate, SyntheticConfig};
use fedrep::data::{filter_gc, prepare_retailer};
use fedrep::fed::{run_training_with, ClientState, ConvergenceRule, GlobalState, RoundConfig};
use fedrep::model::ModelDims;
use fedrep::privacy::Codec;

fn main() -> anyhow::Result<()> {
    let postcodes = [2287, 2289, 2291, 2292];
    let gc = filter_gc(&generate(&postcodes, &SyntheticConfig { days: 14, ..Default::default() }));
    let clients = postcodes
        .iter()
        .map(|&pc| {
            let rep = prepare_retailer(&gc, pc, 0.7, 12, 5, false)?;
            Ok(ClientState::new(pc, rep.train, rep.test))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let cfg = RoundConfig {
        max_rounds: 8,
        codec: Codec::Symmetric { key: [1; 32] },
        convergence: ConvergenceRule::disabled(),
        ..Default::default()
    };
    let state = GlobalState::new(ModelDims::new(1, 32, 16, 5), 2012)?;
    let run = run_training_with(&clients, &cfg, state, |report, _| {
        let per_client: Vec<String> =
            report.per_client_losses.iter().map(|(id, l)| format!("{id}={l:.4}")).collect();
        println!(
            "round {}: avg {:.5} [{}] checksum {:016x}",
            report.round,
            report.avg_loss,
            per_client.join(" "),
            report.global_checksum
        );
    })?;
    println!("stopped after {} rounds ({})", run.rounds(), run.terminated_by.as_str());
    Ok(())
}
