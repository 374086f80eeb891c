use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use super::{half_hour, Category, DataError, RawReading, Result};

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M";

const LONG_HEADER: [&str; 5] = ["customer_id", "category", "postcode", "timestamp", "consumption_kwh"];
const WIDE_FIXED: [&str; 5] = ["Customer", "Generator Capacity", "Postcode", "Consumption Category", "date"];

/// On-disk layout of the raw smart-meter file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetLayout {
    /// One row per reading: `customer_id,category,postcode,timestamp,consumption_kwh`.
    #[default]
    Long,
    /// Ausgrid solar-home layout: one row per customer-day with 48 half-hour columns
    /// (`0:30` .. `23:30`, `0:00`), each column holding the interval ending at that time.
    AusgridWide,
}

/// Reads a long-layout CSV file.
pub fn load_readings(path: &Path) -> Result<Vec<RawReading>> {
    load_readings_from(open(path)?, DatasetLayout::Long)
}

pub(crate) fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|source| DataError::Io { path: path.display().to_string(), source })
}

pub fn load_readings_from<R: Read>(reader: R, layout: DatasetLayout) -> Result<Vec<RawReading>> {
    match layout {
        DatasetLayout::Long => read_long(reader),
        DatasetLayout::AusgridWide => read_wide(reader),
    }
}

fn csv_error(e: csv::Error) -> DataError {
    let line = e.position().map_or(0, |p| p.line());
    DataError::MalformedRow { line, reason: e.to_string() }
}

fn read_long<R: Read>(reader: R) -> Result<Vec<RawReading>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != LONG_HEADER {
        return Err(DataError::Header(format!(
            "expected `{}`, found `{}`",
            LONG_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| DataError::MalformedRow { line, reason };

        let postcode = rec[2].parse::<u32>().map_err(|e| bad(format!("postcode `{}`: {e}", &rec[2])))?;
        let timestamp = NaiveDateTime::parse_from_str(&rec[3], TIMESTAMP_FORMAT)
            .map_err(|e| bad(format!("timestamp `{}`: {e}", &rec[3])))?;
        check_aligned(timestamp).map_err(bad)?;
        let consumption = parse_kwh(&rec[4]).map_err(bad)?;
        out.push(RawReading {
            customer_id: rec[0].to_string(),
            category: Category::parse(&rec[1]),
            postcode,
            timestamp,
            consumption,
        });
    }
    Ok(out)
}

fn parse_kwh(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("consumption `{s}`: {e}"))?;
    if !v.is_finite() || v < 0.0 {
        return Err(format!("consumption `{s}` must be a non-negative number"));
    }
    Ok(v)
}

fn check_aligned(ts: NaiveDateTime) -> std::result::Result<(), String> {
    if ts.minute() % 30 != 0 || ts.second() != 0 {
        return Err(format!("timestamp {ts} is not on a half-hour boundary"));
    }
    Ok(())
}

fn parse_day(s: &str) -> Option<NaiveDate> {
    ["%d/%m/%Y", "%Y-%m-%d", "%d-%b-%y"]
        .iter()
        .find_map(|f| NaiveDate::parse_from_str(s, f).ok())
}

fn read_wide<R: Read>(reader: R) -> Result<Vec<RawReading>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut records = rdr.records();
    // The published files may carry a free-text banner line before the header.
    let header = loop {
        match records.next() {
            None => return Err(DataError::Header("no `Customer,...` header row found".into())),
            Some(rec) => {
                let rec = rec.map_err(csv_error)?;
                if rec.get(0) == Some("Customer") {
                    break rec;
                }
            }
        }
    };

    let fixed: Vec<&str> = header.iter().take(WIDE_FIXED.len()).collect();
    if fixed != WIDE_FIXED {
        return Err(DataError::Header(format!(
            "expected leading columns `{}`, found `{}`",
            WIDE_FIXED.join(","),
            fixed.join(",")
        )));
    }
    let slot_names: Vec<&str> = header.iter().skip(WIDE_FIXED.len()).take(48).collect();
    let expected: Vec<String> = (1..=48)
        .map(|k| {
            let m = (k * 30) % (24 * 60);
            format!("{}:{:02}", m / 60, m % 60)
        })
        .collect();
    if slot_names.len() != 48 || slot_names.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(DataError::Header(format!(
            "expected 48 half-hour columns `0:30`..`23:30`,`0:00`, found `{}`",
            slot_names.join(",")
        )));
    }

    let mut out = Vec::new();
    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |reason: String| DataError::MalformedRow { line, reason };
        if rec.len() < WIDE_FIXED.len() + 48 {
            return Err(bad(format!("expected at least {} fields, found {}", WIDE_FIXED.len() + 48, rec.len())));
        }
        let postcode = rec[2].parse::<u32>().map_err(|e| bad(format!("postcode `{}`: {e}", &rec[2])))?;
        let day = parse_day(&rec[4]).ok_or_else(|| bad(format!("unrecognised date `{}`", &rec[4])))?;
        let midnight = day.and_time(NaiveTime::MIN);
        let category = Category::parse(&rec[3]);
        for slot in 0..48 {
            let consumption = parse_kwh(&rec[WIDE_FIXED.len() + slot]).map_err(bad)?;
            out.push(RawReading {
                customer_id: rec[0].to_string(),
                category,
                postcode,
                timestamp: midnight + half_hour() * (slot as i32 + 1),
                consumption,
            });
        }
    }
    Ok(out)
}

/// Writes readings in the long layout.
pub fn write_readings<W: Write>(writer: W, readings: &[RawReading]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LONG_HEADER)?;
    for r in readings {
        let cat = match r.category {
            Category::Gc => "GC",
            Category::Other => "CL",
        };
        w.write_record([
            r.customer_id.as_str(),
            cat,
            &r.postcode.to_string(),
            &r.timestamp.format(TIMESTAMP_FORMAT).to_string(),
            &r.consumption.to_string(),
        ])?;
    }
    w.flush()
}
