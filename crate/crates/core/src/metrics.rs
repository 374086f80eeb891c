//! Forecast error metrics and scenario summaries.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{half_hour, ScalingParams, WindowedDataset, TIMESTAMP_FORMAT};
use crate::fed::TrainingRun;
use crate::model::{predict, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {actual} actual vs {predicted} predicted values")]
    LengthMismatch { actual: usize, predicted: usize },

    #[error("cannot compute MSE of an empty sequence")]
    Empty,

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error("no runs to summarize")]
    NoRuns,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// `(1/N) Σ (yᵢ − ŷᵢ)²`
pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch { actual: actual.len(), predicted: predicted.len() });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(actual.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)).sum::<f64>() / actual.len() as f64)
}

/// Whether errors are measured on scaled values or in kWh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MseBasis {
    Scaled,
    /// Predictions and targets are inverse-transformed with the holdout
    /// retailer's scaler first.
    Raw(ScalingParams),
}

impl MseBasis {
    pub fn label(&self) -> &'static str {
        match self {
            MseBasis::Scaled => "scaled",
            MseBasis::Raw(_) => "raw_kwh",
        }
    }

    fn map(&self, v: f64) -> f64 {
        match self {
            MseBasis::Scaled => v,
            MseBasis::Raw(s) => s.unscale(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub mse: f64,
    /// One entry per look-ahead step.
    pub per_horizon_mse: Vec<f64>,
    /// Number of predicted values (windows × horizon).
    pub n_predictions: usize,
}

/// Inference-mode predictions for every window, in dataset order.
pub fn predict_all(params: &ModelParams, data: &WindowedDataset) -> Result<Vec<Vec<f64>>> {
    let preds: Vec<std::result::Result<Vec<f64>, ModelError>> =
        data.inputs.par_iter().map(|w| predict(params, w)).collect();
    Ok(preds.into_iter().collect::<std::result::Result<_, _>>()?)
}

/// Scores `predictions` against `data.targets`.
pub fn score(data: &WindowedDataset, predictions: &[Vec<f64>], basis: MseBasis) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(MetricsError::Empty);
    }
    let horizon = data.lookahead();
    let mut per_horizon = vec![0.0; horizon];
    let mut total = 0.0;
    for (t, p) in data.targets.iter().zip(predictions) {
        if p.len() != horizon || t.len() != horizon {
            return Err(MetricsError::LengthMismatch { actual: t.len(), predicted: p.len() });
        }
        for h in 0..horizon {
            let e = basis.map(t[h]) - basis.map(p[h]);
            per_horizon[h] += e * e;
            total += e * e;
        }
    }
    let windows = data.count() as f64;
    per_horizon.iter_mut().for_each(|v| *v /= windows);
    let n = data.count() * horizon;
    Ok(EvalResult { mse: total / n as f64, per_horizon_mse: per_horizon, n_predictions: n })
}

/// Evaluates a model on a retailer that took no part in training.
pub fn evaluate_holdout(params: &ModelParams, holdout: &WindowedDataset, basis: MseBasis) -> Result<EvalResult> {
    if holdout.is_empty() {
        return Err(MetricsError::Empty);
    }
    let preds = predict_all(params, holdout)?;
    score(holdout, &preds, basis)
}

/// Writes `timestamp,horizon,actual,predicted` rows (horizon is 1-based).
pub fn write_predictions_csv<W: Write>(
    writer: W,
    data: &WindowedDataset,
    predictions: &[Vec<f64>],
    basis: MseBasis,
) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "horizon", "actual", "predicted"])?;
    for (i, (t, p)) in data.targets.iter().zip(predictions).enumerate() {
        for h in 0..t.len() {
            let ts = data
                .anchors
                .get(i)
                .map(|a| (*a + half_hour() * h as i32).format(TIMESTAMP_FORMAT).to_string())
                .unwrap_or_default();
            w.write_record([
                ts,
                (h + 1).to_string(),
                basis.map(t[h]).to_string(),
                basis.map(p[h]).to_string(),
            ])?;
        }
    }
    w.flush()
}

/// One row of the scenario table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub n_retailers: usize,
    pub basis: String,
    pub min_mse: f64,
    pub max_mse: f64,
    pub mean_mse: f64,
    /// Mean number of rounds executed before termination.
    pub rounds_to_convergence: f64,
    pub repetitions: usize,
}

/// Min/max/mean holdout MSE over repeated runs of one scenario.
pub fn summarize_scenario(
    scenario: &str,
    n_retailers: usize,
    runs: &[(&TrainingRun, &EvalResult)],
    basis: &str,
) -> Result<ScenarioSummary> {
    if runs.is_empty() {
        return Err(MetricsError::NoRuns);
    }
    let n = runs.len() as f64;
    let mses: Vec<f64> = runs.iter().map(|r| r.1.mse).collect();
    let min_mse = mses.iter().copied().fold(f64::INFINITY, f64::min);
    let max_mse = mses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Clamp guards the min ≤ mean ≤ max invariant against rounding in the sum.
    let mean_mse = (mses.iter().sum::<f64>() / n).clamp(min_mse, max_mse);
    Ok(ScenarioSummary {
        scenario: scenario.to_string(),
        n_retailers,
        basis: basis.to_string(),
        min_mse,
        max_mse,
        mean_mse,
        rounds_to_convergence: runs.iter().map(|r| r.0.rounds() as f64).sum::<f64>() / n,
        repetitions: runs.len(),
    })
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "scenario",
    "n_retailers",
    "basis",
    "min_mse",
    "max_mse",
    "mean_mse",
    "rounds_to_convergence",
    "repetitions",
];

pub fn write_summary_csv<W: Write>(writer: W, rows: &[ScenarioSummary]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.n_retailers.to_string(),
            r.basis.clone(),
            r.min_mse.to_string(),
            r.max_mse.to_string(),
            r.mean_mse.to_string(),
            r.rounds_to_convergence.to_string(),
            r.repetitions.to_string(),
        ])?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fed::Termination;
    use crate::model::{forward, Mode, ModelDims};
    use proptest::prelude::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mse(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 2.5);
        assert!(matches!(mse(&[1.0], &[1.0, 2.0]), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(mse(&[], &[]), Err(MetricsError::Empty)));
    }

    fn dataset() -> WindowedDataset {
        let s: Vec<f64> = (0..40).map(|i| 0.5 + 0.4 * (i as f64 * 0.4).sin()).collect();
        WindowedDataset {
            inputs: (0..30).map(|i| s[i..i + 6].to_vec()).collect(),
            targets: (0..30).map(|i| s[i + 6..i + 9].to_vec()).collect(),
            anchors: Vec::new(),
        }
    }

    #[test]
    fn zero_model_on_zero_targets() {
        let p = ModelParams::zeros(ModelDims::new(1, 3, 2, 3));
        let mut d = dataset();
        d.targets.iter_mut().for_each(|t| t.iter_mut().for_each(|v| *v = 0.0));
        let r = evaluate_holdout(&p, &d, MseBasis::Scaled).unwrap();
        assert_eq!(r.mse, 0.0);
        assert_eq!(r.n_predictions, 90);
    }

    #[test]
    fn per_horizon_averages_to_total() {
        let p = ModelParams::init(ModelDims::new(1, 4, 3, 3), 2).unwrap();
        let r = evaluate_holdout(&p, &dataset(), MseBasis::Scaled).unwrap();
        let mean = r.per_horizon_mse.iter().sum::<f64>() / 3.0;
        assert!((mean - r.mse).abs() < 1e-15);
    }

    #[test]
    fn single_window_is_direct_mse() {
        let p = ModelParams::init(ModelDims::new(1, 4, 3, 3), 2).unwrap();
        let mut d = dataset();
        d.inputs.truncate(1);
        d.targets.truncate(1);
        let (y, _) = forward(&p, &d.inputs[0], Mode::Infer).unwrap();
        let r = evaluate_holdout(&p, &d, MseBasis::Scaled).unwrap();
        assert_eq!(r.mse, mse(&d.targets[0], &y).unwrap());
    }

    #[test]
    fn raw_basis_scales_quadratically() {
        let p = ModelParams::init(ModelDims::new(1, 4, 3, 3), 2).unwrap();
        let scaler = ScalingParams::new(10.0, 14.0).unwrap();
        let scaled = evaluate_holdout(&p, &dataset(), MseBasis::Scaled).unwrap();
        let raw = evaluate_holdout(&p, &dataset(), MseBasis::Raw(scaler)).unwrap();
        assert!((raw.mse - 16.0 * scaled.mse).abs() < 1e-12);
    }

    #[test]
    fn evaluation_order_independent() {
        let p = ModelParams::init(ModelDims::new(1, 4, 3, 3), 2).unwrap();
        let d = dataset();
        let mut rev = d.clone();
        rev.inputs.reverse();
        rev.targets.reverse();
        let a = evaluate_holdout(&p, &d, MseBasis::Scaled).unwrap();
        let b = evaluate_holdout(&p, &rev, MseBasis::Scaled).unwrap();
        assert!((a.mse - b.mse).abs() < 1e-15);
        assert_eq!(a, evaluate_holdout(&p, &d, MseBasis::Scaled).unwrap());
    }

    fn run(rounds: usize) -> TrainingRun {
        TrainingRun {
            reports: (1..=rounds)
                .map(|k| crate::fed::RoundReport {
                    round: k,
                    selected_client_ids: vec![],
                    avg_loss: 0.0,
                    per_client_losses: vec![],
                    global_checksum: 0,
                })
                .collect(),
            final_params: ModelParams::zeros(ModelDims::new(1, 1, 1, 1)),
            terminated_by: Termination::MaxRounds,
        }
    }

    fn eval(m: f64) -> EvalResult {
        EvalResult { mse: m, per_horizon_mse: vec![m], n_predictions: 1 }
    }

    #[test]
    fn summaries() {
        let (r, e) = (run(10), eval(0.3));
        let s = summarize_scenario("s", 4, &[(&r, &e)], "scaled").unwrap();
        assert_eq!((s.min_mse, s.max_mse, s.mean_mse), (0.3, 0.3, 0.3));

        let (r2, e2) = (run(20), eval(0.4));
        let s = summarize_scenario("s", 4, &[(&r, &e), (&r2, &e2)], "scaled").unwrap();
        assert!((s.mean_mse - 0.35).abs() < 1e-15);
        assert_eq!(s.rounds_to_convergence, 15.0);
        assert!(matches!(summarize_scenario("s", 4, &[], "scaled"), Err(MetricsError::NoRuns)));
    }

    #[test]
    fn summary_csv_layout() {
        let row = ScenarioSummary {
            scenario: "1".into(),
            n_retailers: 4,
            basis: "scaled".into(),
            min_mse: 0.328981,
            max_mse: 0.349443,
            mean_mse: 0.338211,
            rounds_to_convergence: 80.0,
            repetitions: 5,
        };
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[row]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "scenario,n_retailers,basis,min_mse,max_mse,mean_mse,rounds_to_convergence,repetitions\n\
             1,4,scaled,0.328981,0.349443,0.338211,80,5\n"
        );
    }

    proptest! {
        #[test]
        fn mse_properties(
            pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..50),
            c in -10.0f64..10.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let ab = mse(&a, &b).unwrap();
            prop_assert_eq!(ab, mse(&b, &a).unwrap());
            prop_assert_eq!(mse(&a, &a).unwrap(), 0.0);
            let ca: Vec<f64> = a.iter().map(|v| c * v).collect();
            let cb: Vec<f64> = b.iter().map(|v| c * v).collect();
            let scaled = mse(&ca, &cb).unwrap();
            prop_assert!((scaled - c * c * ab).abs() <= 1e-9 * (1.0 + scaled.abs()));
        }

        #[test]
        fn summary_ordering(ms in prop::collection::vec(0.0f64..1.0, 1..8)) {
            let runs: Vec<TrainingRun> = ms.iter().map(|_| run(3)).collect();
            let evals: Vec<EvalResult> = ms.iter().map(|&m| eval(m)).collect();
            let pairs: Vec<(&TrainingRun, &EvalResult)> = runs.iter().zip(&evals).collect();
            let s = summarize_scenario("p", 1, &pairs, "scaled").unwrap();
            prop_assert!(s.min_mse <= s.mean_mse && s.mean_mse <= s.max_mse);
        }
    }
}
