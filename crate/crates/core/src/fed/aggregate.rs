use super::{FedError, Result};
use crate::model::ParamVector;

/// A client's parameter vector after decoding at the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedUpdate {
    pub client_id: u32,
    pub params: ParamVector,
    pub n_samples: usize,
}

/// `n_h / n` for each count.
pub fn aggregation_weights(counts: &[usize]) -> Result<Vec<f64>> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(FedError::ZeroSamples);
    }
    Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
}

/// Sample-weighted federated average `Σ (n_h / n) · w_h`.
///
/// Terms are summed in ascending `client_id` order. A coordinate on which
/// every update agrees is returned as that exact value.
pub fn aggregate(updates: &[DecodedUpdate]) -> Result<ParamVector> {
    let first = updates.first().ok_or(FedError::EmptyAggregation)?;
    let len = first.params.len();
    if let Some(bad) = updates.iter().find(|u| u.params.len() != len) {
        return Err(FedError::LengthMismatch { expected: len, actual: bad.params.len() });
    }

    let mut ordered: Vec<&DecodedUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    let counts: Vec<usize> = ordered.iter().map(|u| u.n_samples).collect();
    let weights = aggregation_weights(&counts)?;

    let values = (0..len)
        .map(|j| {
            let v0 = ordered[0].params.values[j];
            if ordered.iter().all(|u| u.params.values[j].to_bits() == v0.to_bits()) {
                return v0;
            }
            let mut acc = weights[0] * v0;
            for (u, w) in ordered.iter().zip(&weights).skip(1) {
                acc += w * u.params.values[j];
            }
            acc
        })
        .collect();
    Ok(ParamVector::new(values))
}
