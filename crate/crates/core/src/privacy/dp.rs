use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PrivacyError, Result};
use crate::model::ParamVector;

/// Gaussian-mechanism parameters for one release of a parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub enabled: bool,
    pub epsilon: f64,
    pub delta: f64,
    /// L2 bound the vector is clipped to before noise is added.
    pub clip_norm: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self { enabled: false, epsilon: 1.0, delta: 1e-5, clip_norm: 50.0 }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(PrivacyError::InvalidConfig(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PrivacyError::InvalidConfig(format!("delta {} must lie in (0, 1)", self.delta)));
        }
        if !(self.clip_norm > 0.0 && self.clip_norm.is_finite()) {
            return Err(PrivacyError::InvalidConfig(format!("clip_norm {} must be positive", self.clip_norm)));
        }
        Ok(())
    }
}

/// Scales `v` by `min(1, C / ‖v‖₂)`. Non-finite vectors are returned unchanged.
pub fn clip_update(v: &ParamVector, clip_norm: f64) -> ParamVector {
    let norm = v.l2_norm();
    if norm <= clip_norm || !norm.is_finite() {
        return v.clone();
    }
    let mut factor = clip_norm / norm;
    loop {
        let out = ParamVector::new(v.values.iter().map(|x| x * factor).collect());
        // Rounding can leave the scaled norm an ulp above C; shrink until it is not.
        if out.l2_norm() <= clip_norm {
            return out;
        }
        factor *= 1.0 - f64::EPSILON;
    }
}

/// `σ = C·√(2 ln(1.25/δ)) / ε`, the classic calibration, valid for ε ≤ 1.
pub fn gaussian_sigma(cfg: &DpConfig) -> Result<f64> {
    cfg.validate()?;
    if cfg.epsilon > 1.0 {
        return Err(PrivacyError::OutOfCalibrationRange(cfg.epsilon));
    }
    Ok(cfg.clip_norm * (2.0 * (1.25 / cfg.delta).ln()).sqrt() / cfg.epsilon)
}

/// Clips to `cfg.clip_norm` and adds i.i.d. `N(0, σ²)` noise to every
/// coordinate. A disabled config returns the input untouched.
pub fn perturb(v: &ParamVector, cfg: &DpConfig, seed: u64) -> Result<ParamVector> {
    if !cfg.enabled {
        return Ok(v.clone());
    }
    let sigma = gaussian_sigma(cfg)?;
    let noise = Normal::new(0.0, sigma).map_err(|e| PrivacyError::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = clip_update(v, cfg.clip_norm);
    out.values.iter_mut().for_each(|x| *x += noise.sample(&mut rng));
    Ok(out)
}

/// Simple composition over `rounds` releases: `(k·ε, k·δ)`. Reported, not enforced.
pub fn composed_budget(cfg: &DpConfig, rounds: usize) -> (f64, f64) {
    (cfg.epsilon * rounds as f64, cfg.delta * rounds as f64)
}
