//! Reads a scenario file and prints its canonical form with every default filled in.
//!
//! ```text
//! cargo run --example load_config -- configs/scenario2.toml
//! ```

use std::path::PathBuf;

use fedrep::cli::ScenarioConfig;

fn main() -> anyhow::Result<()> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/scenario1.toml"));
    let cfg = ScenarioConfig::load(&path)?;
    println!("# {} retailers, holdout {}", cfg.postcodes.len(), cfg.holdout_postcode);
    print!("{}", cfg.to_canonical_toml());
    Ok(())
}
