//! Scores a model on a retailer that never trained and prints a few predictions in kWh.

use fedrep::data::synthetic::{generate, SyntheticConfig};
use fedrep::data::{filter_gc, prepare_retailer};
use fedrep::metrics::{evaluate_holdout, predict_all, write_predictions_csv, MseBasis};
use fedrep::model::{train_epochs, ModelDims, ModelParams, TrainConfig};

fn main() -> anyhow::Result<()> {
    let gc = filter_gc(&generate(&[2287, 2290], &SyntheticConfig { days: 14, ..Default::default() }));
    let train = prepare_retailer(&gc, 2287, 0.7, 12, 5, false)?;
    let holdout = prepare_retailer(&gc, 2290, 0.7, 12, 5, false)?;

    let init = ModelParams::init(ModelDims::new(1, 32, 16, 5), 9)?;
    let (params, _) = train_epochs(&init, &train.train, &TrainConfig::default(), 0..8)?;

    for basis in [MseBasis::Scaled, MseBasis::Raw(holdout.scaler)] {
        let r = evaluate_holdout(&params, &holdout.test, basis)?;
        let per_h: Vec<String> = r.per_horizon_mse.iter().map(|m| format!("{m:.4}")).collect();
        println!("{}: MSE {:.5}, per step [{}]", basis.label(), r.mse, per_h.join(", "));
    }

    let preds = predict_all(&params, &holdout.test)?;
    let mut csv = Vec::new();
    write_predictions_csv(&mut csv, &holdout.test, &preds, MseBasis::Raw(holdout.scaler))?;
    for line in String::from_utf8(csv)?.lines().take(8) {
        println!("{line}");
    }
    Ok(())
}
