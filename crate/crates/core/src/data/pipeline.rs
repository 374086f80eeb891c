use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{half_hour, Category, DataError, RawReading, Result, RetailerSeries, ScalingParams, WindowedDataset};

pub const DEFAULT_LOOKBACK: usize = 12;
pub const DEFAULT_LOOKAHEAD: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

pub fn filter_gc(readings: &[RawReading]) -> Vec<RawReading> {
    readings.iter().filter(|r| r.category == Category::Gc).cloned().collect()
}

/// Sums consumption over all customers of `postcode` at each timestamp.
///
/// Per-timestamp contributions are summed in (customer, value) order so the
/// result does not depend on input row order.
pub fn aggregate_by_postcode(readings: &[RawReading], postcode: u32) -> Result<RetailerSeries> {
    let mut slots: BTreeMap<_, Vec<(&str, f64)>> = BTreeMap::new();
    for r in readings.iter().filter(|r| r.postcode == postcode) {
        slots.entry(r.timestamp).or_default().push((r.customer_id.as_str(), r.consumption));
    }
    if slots.is_empty() {
        return Err(DataError::NoReadings(postcode));
    }

    let mut timestamps = Vec::with_capacity(slots.len());
    let mut values = Vec::with_capacity(slots.len());
    for (ts, mut parts) in slots {
        parts.sort_by(|a, b| a.0.cmp(b.0).then(a.1.total_cmp(&b.1)));
        timestamps.push(ts);
        values.push(parts.iter().map(|p| p.1).sum());
    }
    Ok(RetailerSeries { postcode, timestamps, values })
}

/// Errors on the first missing half-hour slot.
pub fn check_contiguous(series: &RetailerSeries) -> Result<()> {
    for w in series.timestamps.windows(2) {
        let step = w[1] - w[0];
        if step != half_hour() {
            return Err(DataError::Gap {
                after: w[0],
                missing: step.num_minutes() / 30 - 1,
            });
        }
    }
    Ok(())
}

/// Forward-fills missing half-hour slots with the last observed value.
pub fn fill_gaps(series: &RetailerSeries) -> RetailerSeries {
    let mut timestamps = Vec::with_capacity(series.len());
    let mut values = Vec::with_capacity(series.len());
    for (i, (&ts, &v)) in series.timestamps.iter().zip(&series.values).enumerate() {
        if i > 0 {
            let mut t = timestamps[timestamps.len() - 1] + half_hour();
            let last = values[values.len() - 1];
            while t < ts {
                timestamps.push(t);
                values.push(last);
                t += half_hour();
            }
        }
        timestamps.push(ts);
        values.push(v);
    }
    RetailerSeries { postcode: series.postcode, timestamps, values }
}

/// Chronological split: the first `floor(train_fraction * L)` points train, the rest test.
pub fn split(series: &RetailerSeries, train_fraction: f64) -> Result<(RetailerSeries, RetailerSeries)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let n = series.len();
    let cut = (train_fraction * n as f64).floor() as usize;
    if cut == 0 || cut == n {
        return Err(DataError::TooShort { needed: 2, actual: n });
    }
    let part = |r: std::ops::Range<usize>| RetailerSeries {
        postcode: series.postcode,
        timestamps: series.timestamps[r.clone()].to_vec(),
        values: series.values[r].to_vec(),
    };
    Ok((part(0..cut), part(cut..n)))
}

pub fn fit_scaler(train: &RetailerSeries) -> Result<ScalingParams> {
    if train.is_empty() {
        return Err(DataError::TooShort { needed: 1, actual: 0 });
    }
    let min = train.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = train.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(DataError::ConstantSeries(min));
    }
    ScalingParams::new(min, max)
}

/// Min-max maps every value. Values outside the fitted range are left unclamped.
pub fn apply_scaler(series: &RetailerSeries, p: &ScalingParams) -> RetailerSeries {
    RetailerSeries {
        postcode: series.postcode,
        timestamps: series.timestamps.clone(),
        values: series.values.iter().map(|&x| p.scale(x)).collect(),
    }
}

/// Stride-1 sliding windows over the series.
pub fn make_windows(series: &RetailerSeries, lookback: usize, lookahead: usize) -> Result<WindowedDataset> {
    let needed = lookback + lookahead;
    if lookback == 0 || lookahead == 0 || series.len() < needed {
        return Err(DataError::TooShort { needed: needed.max(1), actual: series.len() });
    }
    let count = series.len() - needed + 1;
    let v = &series.values;
    Ok(WindowedDataset {
        inputs: (0..count).map(|i| v[i..i + lookback].to_vec()).collect(),
        targets: (0..count).map(|i| v[i + lookback..i + needed].to_vec()).collect(),
        anchors: (0..count).map(|i| series.timestamps[i + lookback]).collect(),
    })
}

/// Everything one retailer needs for training and evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreparedRetailer {
    pub postcode: u32,
    pub scaler: ScalingParams,
    pub train: WindowedDataset,
    pub test: WindowedDataset,
}

/// Runs the per-retailer pipeline on GC-filtered readings.
pub fn prepare_retailer(
    gc_readings: &[RawReading],
    postcode: u32,
    train_fraction: f64,
    lookback: usize,
    lookahead: usize,
    forward_fill: bool,
) -> Result<PreparedRetailer> {
    let mut series = aggregate_by_postcode(gc_readings, postcode)?;
    if forward_fill {
        series = fill_gaps(&series);
    } else {
        check_contiguous(&series)?;
    }
    let (train, test) = split(&series, train_fraction)?;
    let scaler = fit_scaler(&train)?;
    Ok(PreparedRetailer {
        postcode,
        scaler,
        train: make_windows(&apply_scaler(&train, &scaler), lookback, lookahead)?,
        test: make_windows(&apply_scaler(&test, &scaler), lookback, lookahead)?,
    })
}
