//! One retailer training the forecaster on its own data.

use fedrep::data::synthetic::{generate, SyntheticConfig};
use fedrep::data::{filter_gc, prepare_retailer};
use fedrep::model::{dataset_loss, train_epochs, ModelDims, ModelParams, TrainConfig};

fn main() -> anyhow::Result<()> {
    let gc = filter_gc(&generate(&[2287], &SyntheticConfig { days: 14, ..Default::default() }));
    let rep = prepare_retailer(&gc, 2287, 0.7, 12, 5, false)?;

    let params = ModelParams::init(ModelDims::new(1, 32, 16, 5), 1)?;
    let cfg = TrainConfig { seed: 5, ..Default::default() };
    println!("test loss before: {:.5}", dataset_loss(&params, &rep.test)?);
    let (trained, losses) = train_epochs(&params, &rep.train, &cfg, 0..10)?;
    for (e, l) in losses.iter().enumerate() {
        println!("epoch {:>2}: train loss {l:.5}", e + 1);
    }
    println!("test loss after: {:.5}", dataset_loss(&trained, &rep.test)?);
    Ok(())
}
