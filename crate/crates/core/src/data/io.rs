// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use super::series::{CpLabels, TimeSeries};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line: line as usize,
        message: message.into(),
    }
}

/// Reads `timestamp,c0,…,c{D-1}[,is_cp]` rows. A row with `is_cp = 1` marks a
/// change point at that row's position in the file.
pub fn read_csv<R: std::io::Read>(reader: R, name: &str) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.first() != Some(&"timestamp") {
        return Err(parse_err(1, "first column must be 'timestamp'"));
    }
    let has_cp = cols.last() == Some(&"is_cp");
    let channels = cols.len() - 1 - usize::from(has_cp);
    if channels == 0 {
        return Err(parse_err(1, "no channel columns"));
    }
    for (k, c) in cols[1..=channels].iter().enumerate() {
        if *c != format!("c{k}") {
            return Err(parse_err(1, format!("expected column 'c{k}', found '{c}'")));
        }
    }
    let mut data = Vec::new();
    let mut cps = Vec::new();
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != cols.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, got {}", cols.len(), rec.len()),
            ));
        }
        rec[0]
            .trim()
            .parse::<i64>()
            .map_err(|_| parse_err(line, format!("bad timestamp '{}'", &rec[0])))?;
        for field in rec.iter().skip(1).take(channels) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("bad value '{field}'")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value '{field}'")));
            }
            data.push(v);
        }
        if has_cp {
            match rec[cols.len() - 1].trim() {
                "0" => {}
                "1" => cps.push(rows),
                other => {
                    return Err(parse_err(
                        line,
                        format!("is_cp must be 0 or 1, got '{other}'"),
                    ))
                }
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(2, "no data rows"));
    }
    let labels = if has_cp {
        Some(CpLabels::new(cps, rows)?)
    } else {
        None
    };
    TimeSeries::new(name, Tensor::new(vec![rows, channels], data)?, labels)
}

pub fn load_csv(path: &Path) -> Result<TimeSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("series");
    read_csv(std::io::BufReader::new(file), name)
}

/// Serializes in the layout accepted by [`read_csv`]. Timestamps are row
/// indices; `is_cp` is written when the series is labeled. Values use the
/// shortest representation that parses back to the same `f64`.
pub fn csv_string(series: &TimeSeries) -> String {
    let d = series.channels();
    let mut out = String::from("timestamp");
    for k in 0..d {
        out.push_str(&format!(",c{k}"));
    }
    let labeled = series.labels().is_some();
    if labeled {
        out.push_str(",is_cp");
    }
    out.push('\n');
    let cps = series.change_points();
    for i in 0..series.len() {
        out.push_str(&i.to_string());
        for v in series.row(i) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        if labeled {
            out.push_str(if cps.binary_search(&i).is_ok() {
                ",1"
            } else {
                ",0"
            });
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    std::fs::write(path, csv_string(series)).map_err(|e| Error::io(path, e))
}

/// Train/validation/test fractions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        if !(ok(train) && ok(val) && ok(test)) || (train + val + test - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "split fractions must lie in (0, 1) and sum to 1, got {train}/{val}/{test}"
            )));
        }
        Ok(Self { train, val, test })
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train: 0.6,
            val: 0.2,
            test: 0.2,
        }
    }
}

/// Contiguous temporal split. Segment lengths are `round(t * fraction)` for
/// train and validation; the test segment takes the remainder.
pub fn split(
    series: &TimeSeries,
    spec: &SplitSpec,
) -> Result<(TimeSeries, TimeSeries, TimeSeries)> {
    let t = series.len();
    let n_train = (t as f64 * spec.train).round() as usize;
    let n_val = (t as f64 * spec.val).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= t {
        return Err(Error::config(format!(
            "series of length {t} is too short to split"
        )));
    }
    let n_test = t - n_train - n_val;
    Ok((
        series.slice(0, n_train, format!("{}-train", series.name))?,
        series.slice(n_train, n_val, format!("{}-val", series.name))?,
        series.slice(n_train + n_val, n_test, format!("{}-test", series.name))?,
    ))
}
