//! CSV and JSON artifacts of simulations and sweeps.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SweepTable, TimestepRecord};
use crate::error::{Error, Result};

/// Seventeen significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_error(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    }
}

/// One row of `timeseries.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub k: usize,
    pub agent: String,
    pub cost: f64,
    pub cap: f64,
    pub privacy: f64,
    pub cost_increase: f64,
}

/// Writes one row per `(k, agent)` with columns
/// `k,agent,cost,cap,privacy,cost_increase`.
pub fn write_timeseries_csv(path: &Path, records: &[TimestepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    w.write_record(["k", "agent", "cost", "cap", "privacy", "cost_increase"])
        .map_err(csv_error(path))?;
    for rec in records {
        for a in &rec.agents {
            w.write_record([
                rec.k.to_string(),
                a.agent.name().to_string(),
                format_float(a.cost),
                format_float(rec.cap),
                format_float(a.privacy),
                format_float(a.cost_increase),
            ])
            .map_err(csv_error(path))?;
        }
    }
    w.flush().map_err(io_error(path))
}

pub fn read_timeseries(path: &Path) -> Result<Vec<TimeseriesRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error(path))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<TimeseriesRow>, _>>()
        .map_err(csv_error(path))
}

/// Writes one row per `(budget, agent)` with means and standard errors.
pub fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error(path))?;
    w.write_record([
        "budget",
        "agent",
        "repeats",
        "mean_privacy",
        "se_privacy",
        "mean_score",
        "se_score",
        "mean_cost_increase",
        "se_cost_increase",
    ])
    .map_err(csv_error(path))?;
    for row in &table.rows {
        w.write_record([
            format_float(row.budget),
            row.agent.name().to_string(),
            row.repeats.to_string(),
            format_float(row.privacy.mean),
            format_float(row.privacy.se),
            format_float(row.score.mean),
            format_float(row.score.se),
            format_float(row.cost_increase.mean),
            format_float(row.cost_increase.se),
        ])
        .map_err(csv_error(path))?;
    }
    w.flush().map_err(io_error(path))
}

/// Pretty-printed JSON of any serializable artifact. Non-finite numbers
/// become `null`.
pub fn write_records_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut f = File::create(path).map_err(io_error(path))?;
    f.write_all(text.as_bytes()).map_err(io_error(path))?;
    f.write_all(b"\n").map_err(io_error(path))
}

/// Parses `start:step:stop` (inclusive) or a comma-separated list.
pub fn parse_budget_range(text: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse budgets `{text}` (start:step:stop or a,b,c)"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    let values: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || !start.is_finite() || !stop.is_finite() || stop < start {
            return Err(bad());
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        (0..count)
            // Snap to twelve decimals so 3 × 0.02 prints as 0.06.
            .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
            .collect()
    } else {
        text.split(',').map(num).collect::<Result<_>>()?
    };
    if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::Config(format!("budgets must be finite and nonnegative: `{text}`")));
    }
    Ok(values)
}
