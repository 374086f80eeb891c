//! Synthetic smart-meter readings through the full preprocessing pipeline.
//!
//! ```text
//! cargo run --example prepare_data
//! ```

use fedrep::data::synthetic::{generate, SyntheticConfig};
use fedrep::data::{filter_gc, prepare_retailer, DEFAULT_LOOKAHEAD, DEFAULT_LOOKBACK, DEFAULT_TRAIN_FRACTION};

fn main() -> anyhow::Result<()> {
    let postcodes = [2287, 2289, 2290];
    let readings = generate(&postcodes, &SyntheticConfig { days: 14, ..Default::default() });
    let gc = filter_gc(&readings);
    println!("{} readings, {} general consumption", readings.len(), gc.len());

    for pc in postcodes {
        let rep = prepare_retailer(&gc, pc, DEFAULT_TRAIN_FRACTION, DEFAULT_LOOKBACK, DEFAULT_LOOKAHEAD, false)?;
        println!(
            "postcode {pc}: {} train / {} test windows, kWh range [{:.3}, {:.3}]",
            rep.train.count(),
            rep.test.count(),
            rep.scaler.min,
            rep.scaler.max
        );
        println!("  first window {:?} -> {:?}", rounded(&rep.train.inputs[0]), rounded(&rep.train.targets[0]));
    }
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
