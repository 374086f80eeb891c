//! Seeded synthetic smart-meter data.
//!
//! This is NOT real consumption data. Each customer's load is a sum of a daily
//! sinusoid (with a 12 h harmonic), a weekly sinusoid and Gaussian noise,
//! clamped at zero. Postcodes get their own phase shift so retailers differ.
//! A controlled-load (non-GC) channel is emitted as well so the category
//! filter has something to remove.

use std::f64::consts::TAU;

use chrono::NaiveDateTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{half_hour, Category, RawReading, TIMESTAMP_FORMAT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub days: usize,
    pub customers_per_postcode: usize,
    /// Standard deviation of per-reading noise in kWh.
    pub noise: f64,
    pub seed: u64,
    /// Emit a controlled-load channel next to general consumption.
    pub with_controlled_load: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            days: 28,
            customers_per_postcode: 5,
            noise: 0.05,
            seed: 2012,
            with_controlled_load: true,
        }
    }
}

fn start() -> NaiveDateTime {
    NaiveDateTime::parse_from_str("2012-07-01T00:30", TIMESTAMP_FORMAT).expect("valid literal")
}

/// Generates readings for every postcode, grouped by postcode then customer then time.
pub fn generate(postcodes: &[u32], cfg: &SyntheticConfig) -> Vec<RawReading> {
    let slots = cfg.days * 48;
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise level");
    let mut out = Vec::with_capacity(postcodes.len() * cfg.customers_per_postcode * slots);

    for &pc in postcodes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (u64::from(pc) << 20));
        let phase_hours: f64 = rng.gen_range(-2.0..2.0);
        let weekly_amp: f64 = rng.gen_range(0.02..0.12);
        for c in 0..cfg.customers_per_postcode {
            let base: f64 = rng.gen_range(0.15..0.35);
            let amp: f64 = rng.gen_range(0.2..0.5);
            let customer_id = format!("{pc}-{c}");
            for s in 0..slots {
                let hours = (s + 1) as f64 * 0.5;
                let h = hours - phase_hours;
                let day = hours / 24.0;
                let daily = 0.6 * (TAU * (h - 10.0) / 24.0).sin() + 0.4 * (TAU * (h - 4.0) / 12.0).sin();
                let weekly = weekly_amp * (TAU * day / 7.0).sin();
                let v = base + amp * (1.0 + daily) * 0.5 + weekly + noise.sample(&mut rng);
                out.push(RawReading {
                    customer_id: customer_id.clone(),
                    category: Category::Gc,
                    postcode: pc,
                    timestamp: start() + half_hour() * (s as i32 + 1),
                    consumption: v.max(0.0),
                });
            }
            if cfg.with_controlled_load {
                for s in 0..slots {
                    let hour_of_day = ((s + 1) % 48) as f64 * 0.5;
                    let on = (1.0..5.0).contains(&hour_of_day);
                    out.push(RawReading {
                        customer_id: customer_id.clone(),
                        category: Category::Other,
                        postcode: pc,
                        timestamp: start() + half_hour() * (s as i32 + 1),
                        consumption: if on { 1.2 } else { 0.0 },
                    });
                }
            }
        }
    }
    out
}
