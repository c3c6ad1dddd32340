//! Time-series matrices, CSV persistence and standardization.
//!
//! CSV layout: a `timestamp` column (ISO-8601) followed by one column per
//! node. An empty cell is a missing reading.

use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime, SecondsFormat, TimeZone, Utc};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Readings of `N` nodes at `P` instants. Rows are instants, columns nodes.
///
/// Masked-out cells hold `NaN`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    timestamps: Vec<DateTime<Utc>>,
    node_ids: Vec<String>,
    values: DMatrix<f64>,
    mask: DMatrix<bool>,
    row_index: Vec<usize>,
}

impl TimeSeriesMatrix {
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        node_ids: Vec<String>,
        mut values: DMatrix<f64>,
        mask: DMatrix<bool>,
    ) -> Result<Self> {
        let (p, n) = values.shape();
        if timestamps.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: timestamps.len(),
            });
        }
        if node_ids.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: node_ids.len(),
            });
        }
        if mask.shape() != (p, n) {
            return Err(Error::DimensionMismatch {
                expected: p * n,
                got: mask.len(),
            });
        }
        for (i, id) in node_ids.iter().enumerate() {
            if node_ids[..i].contains(id) {
                return Err(Error::DuplicateNodeId(id.clone()));
            }
        }
        for r in 1..p {
            if timestamps[r] == timestamps[r - 1] {
                return Err(Error::DuplicateTimestamp { line: r + 2 });
            }
            if timestamps[r] < timestamps[r - 1] {
                return Err(Error::NonMonotonicTimestamps { line: r + 2 });
            }
        }
        for r in 0..p {
            for c in 0..n {
                if mask[(r, c)] {
                    if !values[(r, c)].is_finite() {
                        return Err(Error::MissingData { row: r, column: c });
                    }
                } else {
                    values[(r, c)] = f64::NAN;
                }
            }
        }
        Ok(Self {
            timestamps,
            node_ids,
            values,
            mask,
            row_index: (0..p).collect(),
        })
    }

    /// Complete matrix with hourly timestamps from 2000-01-01 and node ids
    /// `n0, n1, …`. Non-finite entries are taken as missing.
    pub fn from_values(values: DMatrix<f64>) -> Result<Self> {
        let (p, n) = values.shape();
        let start = Utc.with_ymd_and_hms(2000, 1, 1, 0, 0, 0).unwrap();
        let timestamps = (0..p).map(|r| start + chrono::Duration::hours(r as i64)).collect();
        let node_ids = (0..n).map(|c| format!("n{c}")).collect();
        let mask = values.map(f64::is_finite);
        Self::new(timestamps, node_ids, values, mask)
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.p() == 0
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    /// Values with `NaN` in masked-out cells.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn mask(&self) -> &DMatrix<bool> {
        &self.mask
    }

    /// Row positions in the matrix this one was derived from.
    pub fn row_index(&self) -> &[usize] {
        &self.row_index
    }

    pub fn is_complete(&self) -> bool {
        self.mask.iter().all(|&m| m)
    }

    /// The value matrix, failing on the first missing cell.
    pub fn complete_values(&self) -> Result<&DMatrix<f64>> {
        for c in 0..self.n() {
            for r in 0..self.p() {
                if !self.mask[(r, c)] {
                    return Err(Error::MissingData { row: r, column: c });
                }
            }
        }
        Ok(&self.values)
    }

    /// Sub-matrix of the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let n = self.n();
        Self {
            timestamps: rows.iter().map(|&r| self.timestamps[r]).collect(),
            node_ids: self.node_ids.clone(),
            values: DMatrix::from_fn(rows.len(), n, |r, c| self.values[(rows[r], c)]),
            mask: DMatrix::from_fn(rows.len(), n, |r, c| self.mask[(rows[r], c)]),
            row_index: rows.iter().map(|&r| self.row_index[r]).collect(),
        }
    }

    /// Sub-matrix of the given node columns.
    pub fn select_columns(&self, columns: &[usize]) -> Self {
        let p = self.p();
        Self {
            timestamps: self.timestamps.clone(),
            node_ids: columns.iter().map(|&c| self.node_ids[c].clone()).collect(),
            values: DMatrix::from_fn(p, columns.len(), |r, c| self.values[(r, columns[c])]),
            mask: DMatrix::from_fn(p, columns.len(), |r, c| self.mask[(r, columns[c])]),
            row_index: self.row_index.clone(),
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(reader);
        let mut records = rdr.records();

        let header = match records.next() {
            Some(rec) => rec?,
            None => {
                return Err(Error::Parse {
                    line: 1,
                    column: 1,
                    message: "missing header".into(),
                })
            }
        };
        let first = header.get(0).map(|s| s.trim().trim_start_matches('\u{feff}'));
        if first != Some("timestamp") {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "first column must be \"timestamp\"".into(),
            });
        }
        let node_ids: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
        for (i, id) in node_ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::Parse {
                    line: 1,
                    column: i + 2,
                    message: "empty node id".into(),
                });
            }
            if node_ids[..i].contains(id) {
                return Err(Error::DuplicateNodeId(id.clone()));
            }
        }
        let n = node_ids.len();

        let mut timestamps = Vec::new();
        let mut data = Vec::new();
        let mut present = Vec::new();
        for rec in records {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(timestamps.len() + 2);
            if rec.len() == 1 && rec.get(0).is_some_and(|s| s.trim().is_empty()) {
                continue;
            }
            if rec.len() != n + 1 {
                return Err(Error::Parse {
                    line,
                    column: rec.len().min(n + 1),
                    message: format!("expected {} fields, found {}", n + 1, rec.len()),
                });
            }
            let ts = parse_timestamp(rec.get(0).unwrap_or("")).map_err(|message| Error::Parse {
                line,
                column: 1,
                message,
            })?;
            if let Some(&prev) = timestamps.last() {
                if ts == prev {
                    return Err(Error::DuplicateTimestamp { line });
                }
                if ts < prev {
                    return Err(Error::NonMonotonicTimestamps { line });
                }
            }
            timestamps.push(ts);
            for (c, field) in rec.iter().skip(1).enumerate() {
                let field = field.trim();
                if field.is_empty() {
                    data.push(f64::NAN);
                    present.push(false);
                    continue;
                }
                match field.parse::<f64>() {
                    Ok(v) if v.is_finite() => {
                        data.push(v);
                        present.push(true);
                    }
                    _ => {
                        return Err(Error::Parse {
                            line,
                            column: c + 2,
                            message: format!("not a finite number: {field:?}"),
                        })
                    }
                }
            }
        }
        let p = timestamps.len();
        if p == 0 {
            log::warn!("CSV has a header but no data rows");
        }
        let values = DMatrix::from_row_slice(p, n, &data);
        let mask = DMatrix::from_row_slice(p, n, &present);
        Self::new(timestamps, node_ids, values, mask)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.node_ids.iter().cloned());
        wtr.write_record(&header)?;
        for r in 0..self.p() {
            let mut record = Vec::with_capacity(self.n() + 1);
            record.push(self.timestamps[r].to_rfc3339_opts(SecondsFormat::AutoSi, true));
            for c in 0..self.n() {
                if self.mask[(r, c)] {
                    record.push(self.values[(r, c)].to_string());
                } else {
                    record.push(String::new());
                }
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t.and_utc());
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(d.and_hms_opt(0, 0, 0).unwrap().and_utc());
    }
    Err(format!("invalid timestamp {s:?}"))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeriesMatrix> {
    TimeSeriesMatrix::read_csv(std::fs::File::open(path)?)
}

pub fn save_csv(x: &TimeSeriesMatrix, path: impl AsRef<Path>) -> Result<()> {
    x.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Listwise deletion: keeps rows without missing cells.
pub fn complete_rows(x: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    let rows: Vec<usize> = (0..x.p()).filter(|&r| (0..x.n()).all(|c| x.mask[(r, c)])).collect();
    if rows.is_empty() {
        return Err(Error::NoCompleteRows);
    }
    Ok(x.select_rows(&rows))
}

/// Column means and sample standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl StandardizationParams {
    /// Statistics over every row of `x`; `x` must be complete.
    pub fn fit(x: &DMatrix<f64>) -> Result<Self> {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        Self::fit_rows(x, &rows)
    }

    /// Statistics over the listed rows only.
    pub fn fit_rows(x: &DMatrix<f64>, rows: &[usize]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: rows.len(),
            });
        }
        let count = rows.len() as f64;
        let mut means = Vec::with_capacity(x.ncols());
        let mut stds = Vec::with_capacity(x.ncols());
        for c in 0..x.ncols() {
            let mut sum = 0.0;
            for &r in rows {
                let v = x[(r, c)];
                if !v.is_finite() {
                    return Err(Error::MissingData { row: r, column: c });
                }
                sum += v;
            }
            let mean = sum / count;
            let ss: f64 = rows.iter().map(|&r| (x[(r, c)] - mean).powi(2)).sum();
            let sd = (ss / (count - 1.0)).sqrt();
            if !(sd > 1e-12 * (1.0 + mean.abs())) {
                return Err(Error::ZeroVariance { column: c });
            }
            means.push(mean);
            stds.push(sd);
        }
        Ok(Self { means, stds })
    }

    pub fn n(&self) -> usize {
        self.means.len()
    }

    fn check(&self, n: usize) -> Result<()> {
        if n != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: n,
            });
        }
        Ok(())
    }

    /// `(v − mean) / std` column-wise; `NaN` passes through.
    pub fn standardize(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(x.ncols())?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
            (x[(r, c)] - self.means[c]) / self.stds[c]
        }))
    }

    pub fn unstandardize(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(z.ncols())?;
        Ok(DMatrix::from_fn(z.nrows(), z.ncols(), |r, c| {
            z[(r, c)] * self.stds[c] + self.means[c]
        }))
    }

    pub fn standardize_sample(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v.len())?;
        Ok(v.iter().enumerate().map(|(c, x)| (x - self.means[c]) / self.stds[c]).collect())
    }

    pub fn unstandardize_sample(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check(z.len())?;
        Ok(z.iter().enumerate().map(|(c, x)| x * self.stds[c] + self.means[c]).collect())
    }

    /// Restriction to a subset of columns.
    pub fn select(&self, columns: &[usize]) -> Self {
        Self {
            means: columns.iter().map(|&c| self.means[c]).collect(),
            stds: columns.iter().map(|&c| self.stds[c]).collect(),
        }
    }
}
