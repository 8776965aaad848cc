//! CSV I/O for the three series schemas (UTF-8, header row required):
//!
//! - series: `t,value` with uniform `t` spacing
//! - ticks:  `timestamp,price`
//! - events: `timestamp`
//!
//! Floats are written in Rust's shortest round-trip decimal form, which
//! preserves every value bit-exactly (always at least the 15 significant
//! digits the schemas promise). Timestamp uniformity of `t`-column files is
//! enforced to a 1e-9 tolerance relative to the series' time span; a ticks
//! file with larger gaps is rejected unless gap splicing is requested.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::series::{EventStream, PriceSeries, UniformSeries};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path, source: csv::Error) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        source,
    }
}

fn parse_f64(path: &Path, line: usize, field: &str, name: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::MalformedRow {
        path: path.display().to_string(),
        line,
        reason: format!("cannot parse {name} {field:?} as a number"),
    })
}

/// Relative tolerance for grid uniformity checks.
const GRID_REL_TOL: f64 = 1e-9;

fn check_uniform(times: &[f64]) -> Result<(f64, f64)> {
    if times.len() < 2 {
        return Ok((times.first().copied().unwrap_or(0.0), 1.0));
    }
    let t0 = times[0];
    let n = times.len();
    let dt = (times[n - 1] - t0) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::NonMonotonicTimestamps { index: n - 1 });
    }
    let span = (times[n - 1] - t0).abs().max(t0.abs()).max(dt);
    let tol = GRID_REL_TOL * span;
    for (i, t) in times.iter().enumerate() {
        let expected = t0 + i as f64 * dt;
        if (t - expected).abs() > tol {
            return Err(Error::NonUniformGrid {
                row: i + 2, // 1-based, counting the header
                step: if i > 0 { t - times[i - 1] } else { *t - t0 },
                expected: dt,
            });
        }
    }
    Ok((t0, dt))
}

fn read_rows(path: &Path, expected_header: &[&str]) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let headers = reader.headers().map_err(|e| csv_err(path, e))?.clone();
    let got: Vec<&str> = headers.iter().collect();
    if got != expected_header {
        return Err(Error::MalformedRow {
            path: path.display().to_string(),
            line: 1,
            reason: format!("expected header {expected_header:?}, got {got:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        if record.len() != expected_header.len() {
            return Err(Error::MalformedRow {
                path: path.display().to_string(),
                line: i + 2,
                reason: format!(
                    "expected {} fields, got {}",
                    expected_header.len(),
                    record.len()
                ),
            });
        }
        rows.push(record.iter().map(|s| s.to_string()).collect());
    }
    Ok(rows)
}

pub fn write_series(path: impl AsRef<Path>, series: &UniformSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    writeln!(w, "t,value").map_err(|e| io_err(path, e))?;
    for (i, v) in series.values().iter().enumerate() {
        writeln!(w, "{},{}", series.time_at(i), v).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_series(path: impl AsRef<Path>) -> Result<UniformSeries> {
    let path = path.as_ref();
    let rows = read_rows(path, &["t", "value"])?;
    if rows.is_empty() {
        return Err(Error::EmptyInput("series file"));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut values = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        times.push(parse_f64(path, i + 2, &row[0], "t")?);
        values.push(parse_f64(path, i + 2, &row[1], "value")?);
    }
    let (t0, dt) = check_uniform(&times)?;
    UniformSeries::new(t0, dt, values)
}

pub fn write_ticks(path: impl AsRef<Path>, prices: &PriceSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    writeln!(w, "timestamp,price").map_err(|e| io_err(path, e))?;
    for (i, p) in prices.prices().iter().enumerate() {
        let t = prices.t0() + i as f64 * prices.dt();
        writeln!(w, "{t},{p}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Read a `timestamp,price` file into a uniform [`PriceSeries`].
///
/// With `splice_gaps = false` the timestamps must already be uniform. With
/// `splice_gaps = true`, sessions separated by gaps (steps larger than the
/// median step) are concatenated onto one continuous timeline with the
/// median step as `dt`; steps smaller than the median remain errors.
pub fn read_ticks(path: impl AsRef<Path>, splice_gaps: bool) -> Result<PriceSeries> {
    let path = path.as_ref();
    let rows = read_rows(path, &["timestamp", "price"])?;
    if rows.is_empty() {
        return Err(Error::EmptyInput("ticks file"));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut prices = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        times.push(parse_f64(path, i + 2, &row[0], "timestamp")?);
        prices.push(parse_f64(path, i + 2, &row[1], "price")?);
    }
    if let Some(index) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotonicTimestamps { index: index + 1 });
    }
    if !splice_gaps {
        let (t0, dt) = check_uniform(&times)?;
        return PriceSeries::new(t0, dt, prices);
    }
    if times.len() < 2 {
        return PriceSeries::new(times[0], 1.0, prices);
    }
    let mut steps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    steps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let dt = steps[steps.len() / 2];
    let tol = dt * 1e-6;
    for (i, w) in times.windows(2).enumerate() {
        let step = w[1] - w[0];
        if step < dt - tol {
            return Err(Error::NonUniformGrid {
                row: i + 3,
                step,
                expected: dt,
            });
        }
        // Steps >= dt are either regular samples or gaps; gaps collapse when
        // the spliced timeline is rebuilt below.
    }
    PriceSeries::new(times[0], dt, prices)
}

pub fn write_events(path: impl AsRef<Path>, events: &EventStream) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    writeln!(w, "timestamp").map_err(|e| io_err(path, e))?;
    for t in events.timestamps() {
        writeln!(w, "{t}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventStream> {
    let path = path.as_ref();
    let rows = read_rows(path, &["timestamp"])?;
    let mut times = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        times.push(parse_f64(path, i + 2, &row[0], "timestamp")?);
    }
    EventStream::new(times)
}

/// Read a generic two-numeric-column CSV with the given header (e.g. a
/// spectrum `f,power` file).
pub fn read_two_column(
    path: impl AsRef<Path>,
    header: &[&str; 2],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let path = path.as_ref();
    let rows = read_rows(path, header)?;
    let mut a = Vec::with_capacity(rows.len());
    let mut b = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        a.push(parse_f64(path, i + 2, &row[0], header[0])?);
        b.push(parse_f64(path, i + 2, &row[1], header[1])?);
    }
    Ok((a, b))
}

/// Read the `duration` column of a `kind,start,end,duration` file.
pub fn read_durations_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let rows = read_rows(path, &["kind", "start", "end", "duration"])?;
    let mut durations = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        durations.push(parse_f64(path, i + 2, &row[3], "duration")?);
    }
    Ok(durations)
}
