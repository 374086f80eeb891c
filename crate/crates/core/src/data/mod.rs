//! Smart-meter ingestion and per-retailer dataset preparation.
//!
//! The pipeline runs in the same order for every retailer:
//! `load_readings` → `filter_gc` → `aggregate_by_postcode` → `split`
//! → `fit_scaler` (train split only) → `apply_scaler` → `make_windows`.

mod ingest;
mod pipeline;
pub mod synthetic;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{load_readings, load_readings_from, write_readings, DatasetLayout, TIMESTAMP_FORMAT};
pub use pipeline::{
    aggregate_by_postcode, apply_scaler, check_contiguous, filter_gc, fill_gaps, fit_scaler,
    make_windows, prepare_retailer, split, PreparedRetailer, DEFAULT_LOOKAHEAD, DEFAULT_LOOKBACK,
    DEFAULT_TRAIN_FRACTION,
};

/// Spacing between consecutive smart-meter readings.
pub fn half_hour() -> Duration {
    Duration::minutes(30)
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },

    #[error("dataset header mismatch: {0}")]
    Header(String),

    #[error("no readings for postcode {0}")]
    NoReadings(u32),

    #[error("series has a gap: {missing} half-hour slot(s) missing after {after}")]
    Gap { after: NaiveDateTime, missing: i64 },

    #[error("series too short: need at least {needed} points, have {actual}")]
    TooShort { needed: usize, actual: usize },

    #[error("train fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),

    #[error("constant series (min == max == {0}) cannot be min-max scaled")]
    ConstantSeries(f64),

    #[error("invalid scaling parameters: min {min} >= max {max}")]
    BadScaler { min: f64, max: f64 },
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Smart-meter consumption channel. Only general consumption feeds the forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    /// General consumption.
    Gc,
    /// Any other channel (controlled load, gross generation, ...).
    Other,
}

impl Category {
    pub fn parse(s: &str) -> Self {
        if s.trim() == "GC" {
            Category::Gc
        } else {
            Category::Other
        }
    }
}

/// One half-hourly reading from one customer's meter.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReading {
    pub customer_id: String,
    pub category: Category,
    pub postcode: u32,
    pub timestamp: NaiveDateTime,
    /// kWh, never negative.
    pub consumption: f64,
}

/// Aggregated half-hourly load of one retailer (all customers in one postcode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetailerSeries {
    pub postcode: u32,
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Vec<f64>,
}

impl RetailerSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Min-max scaling fitted on a retailer's training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingParams {
    pub min: f64,
    pub max: f64,
}

impl ScalingParams {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(DataError::BadScaler { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn scale(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, s: f64) -> f64 {
        s * (self.max - self.min) + self.min
    }
}

/// Supervised (lookback window, lookahead target) pairs.
///
/// `anchors[i]` is the timestamp of the first target step of pair `i`; it is
/// carried along only so predictions can be written out against wall-clock time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WindowedDataset {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub anchors: Vec<NaiveDateTime>,
}

impl WindowedDataset {
    pub fn count(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn lookback(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    pub fn lookahead(&self) -> usize {
        self.targets.first().map_or(0, Vec::len)
    }

    /// Concatenates datasets in order (the centralized baseline's pooled data).
    pub fn pooled<'a>(parts: impl IntoIterator<Item = &'a WindowedDataset>) -> WindowedDataset {
        let mut out = WindowedDataset::default();
        for p in parts {
            out.inputs.extend(p.inputs.iter().cloned());
            out.targets.extend(p.targets.iter().cloned());
            out.anchors.extend(p.anchors.iter().copied());
        }
        out
    }
}
