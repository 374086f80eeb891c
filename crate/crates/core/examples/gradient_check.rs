//! Compares BPTT gradients with central finite differences on a small model.

use fedrep::model::{backward, example_loss, forward, Mode, ModelDims, ModelParams};

fn main() -> anyhow::Result<()> {
    let dims = ModelDims::new(1, 4, 3, 2);
    let params = ModelParams::init(dims, 3)?;
    let window = [0.2, 0.7, 0.4, 0.9];
    let target = [0.5, 0.6];
    let mode = Mode::Train { dropout_rate: 0.2, seed: 11 };

    let (_, cache) = forward(&params, &window, mode)?;
    let analytic = backward(&params, &cache, &target)?.0.flatten();

    let eps = 1e-5;
    let base = params.flatten();
    let loss = |v: &fedrep::model::ParamVector| -> anyhow::Result<f64> {
        let p = ModelParams::unflatten(v, dims)?;
        Ok(example_loss(&forward(&p, &window, mode)?.0, &target))
    };
    let mut worst = 0.0f64;
    for j in 0..base.len() {
        let (mut plus, mut minus) = (base.clone(), base.clone());
        plus.values[j] += eps;
        minus.values[j] -= eps;
        let numeric = (loss(&plus)? - loss(&minus)?) / (2.0 * eps);
        let a = analytic.values[j];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-7));
    }
    println!("{} parameters, max relative error {worst:.2e}", base.len());
    Ok(())
}
