//! Clipping and Gaussian noise applied to a parameter vector.

use fedrep::model::{ModelDims, ModelParams};
use fedrep::privacy::{clip_update, composed_budget, gaussian_sigma, perturb, DpConfig};

fn main() -> anyhow::Result<()> {
    let weights = ModelParams::init(ModelDims::new(1, 16, 8, 5), 0)?.flatten();
    println!("{} weights, L2 norm {:.3}", weights.len(), weights.l2_norm());

    for clip_norm in [1.0, 5.0, 50.0] {
        println!("clipped to {clip_norm}: norm {:.6}", clip_update(&weights, clip_norm).l2_norm());
    }

    for epsilon in [0.1, 0.5, 1.0] {
        let cfg = DpConfig { enabled: true, epsilon, delta: 1e-5, clip_norm: 5.0 };
        let sigma = gaussian_sigma(&cfg)?;
        let noisy = perturb(&weights, &cfg, 42)?;
        let shift: f64 = noisy.values.iter().zip(&weights.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let (eps80, delta80) = composed_budget(&cfg, 80);
        println!(
            "epsilon {epsilon}: sigma {sigma:.3}, distance from original {shift:.1}, 80 rounds compose to ({eps80}, {delta80:.0e})"
        );
    }

    let too_loose = DpConfig { enabled: true, epsilon: 2.0, ..Default::default() };
    println!("epsilon 2: {}", gaussian_sigma(&too_loose).unwrap_err());
    Ok(())
}
