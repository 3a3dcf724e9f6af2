//! Loading, alignment, normalization and framing of raw sensor readings.
//!
//! Two flat-file layouts are understood:
//!
//! * long CSV: one reading per row, `timestamp, sensor_id, modality, value`
//! * wide CSV: first column `timestamp`, then one column per sensor id
//!
//! Everything downstream consumes a [`TimeSeriesMatrix`] (rows on a fixed
//! time grid, one column per sensor) or a [`FrameSet`] cut from one column.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Columns with a variance at or below this are treated as constant.
pub const VARIANCE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    pub timestamp: DateTime<Utc>,
    pub sensor_id: String,
    pub modality: String,
    pub value: f64,
}

/// Header names of the long CSV layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsvSchema {
    pub timestamp: String,
    pub sensor_id: String,
    /// `None` when the file carries no modality column.
    pub modality: Option<String>,
    pub value: String,
    /// Abort on the first bad row instead of skipping it.
    pub strict: bool,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            sensor_id: "sensor_id".into(),
            modality: Some("modality".into()),
            value: "value".into(),
            strict: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadOutcome {
    pub records: Vec<RawRecord>,
    pub rows_read: usize,
    pub rejected: usize,
}

/// Parses an ISO-8601 instant. Strings without an offset are read as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(|n| Utc.from_utc_datetime(&n))
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

fn parse_value(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads a long-format CSV. Rows that fail to parse (bad timestamp,
/// non-numeric or non-finite value, missing fields) are skipped and counted,
/// unless the schema is strict.
pub fn load_long_csv<R: Read>(source: R, schema: &CsvSchema) -> Result<LoadOutcome> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let ts_col = find(&schema.timestamp)?;
    let id_col = find(&schema.sensor_id)?;
    let value_col = find(&schema.value)?;
    let modality_col = schema.modality.as_deref().map(find).transpose()?;

    let mut out = LoadOutcome::default();
    for (i, row) in reader.records().enumerate() {
        let line = i + 2;
        out.rows_read += 1;
        let parsed = row.map_err(|e| e.to_string()).and_then(|row| {
            let field = |c: usize| row.get(c).ok_or_else(|| format!("missing field {c}"));
            let timestamp = parse_timestamp(field(ts_col)?)
                .ok_or_else(|| "unparseable timestamp".to_string())?;
            let sensor_id = field(id_col)?.to_string();
            if sensor_id.is_empty() {
                return Err("empty sensor id".into());
            }
            let value =
                parse_value(field(value_col)?).ok_or_else(|| "non-finite value".to_string())?;
            let modality = match modality_col {
                Some(c) => field(c)?.to_string(),
                None => String::new(),
            };
            Ok(RawRecord { timestamp, sensor_id, modality, value })
        });
        match parsed {
            Ok(r) => out.records.push(r),
            Err(reason) if schema.strict => return Err(Error::Parse { row: line, reason }),
            Err(reason) => {
                log::debug!("skipping row {line}: {reason}");
                out.rejected += 1;
            }
        }
    }
    Ok(out)
}

/// Sensor id to modality tag, as recorded in long-format input.
pub fn modality_map(records: &[RawRecord]) -> BTreeMap<String, String> {
    records
        .iter()
        .map(|r| (r.sensor_id.clone(), r.modality.clone()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignPolicy {
    #[default]
    DropIncomplete,
    ForwardFill,
}

/// Aligned readings: `values[[t, j]]` is sensor `sensor_ids[j]` at `timestamps[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesMatrix {
    timestamps: Vec<DateTime<Utc>>,
    sensor_ids: Vec<String>,
    values: Array2<f64>,
}

impl TimeSeriesMatrix {
    pub fn new(
        timestamps: Vec<DateTime<Utc>>,
        sensor_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        if values.nrows() != timestamps.len() || values.ncols() != sensor_ids.len() {
            return Err(contract(format!(
                "matrix is {}x{} but there are {} timestamps and {} sensors",
                values.nrows(),
                values.ncols(),
                timestamps.len(),
                sensor_ids.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(contract("timestamps must be strictly increasing"));
        }
        let unique: BTreeSet<&String> = sensor_ids.iter().collect();
        if unique.len() != sensor_ids.len() {
            return Err(contract("duplicate sensor id"));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("matrix cell {v}")));
        }
        Ok(Self { timestamps, sensor_ids, values })
    }

    /// Matrix on a synthetic grid starting at the Unix epoch.
    pub fn from_columns(
        sensor_ids: Vec<String>,
        values: Array2<f64>,
        interval_secs: i64,
    ) -> Result<Self> {
        let timestamps = (0..values.nrows() as i64)
            .map(|i| Utc.timestamp_opt(i * interval_secs, 0).unwrap())
            .collect();
        Self::new(timestamps, sensor_ids, values)
    }

    pub fn timestamps(&self) -> &[DateTime<Utc>] {
        &self.timestamps
    }

    pub fn sensor_ids(&self) -> &[String] {
        &self.sensor_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_sensors(&self) -> usize {
        self.values.ncols()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.sensor_ids.iter().position(|s| s == id)
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn column_by_id(&self, id: &str) -> Result<ArrayView1<'_, f64>> {
        self.index_of(id)
            .map(|j| self.values.column(j))
            .ok_or_else(|| Error::MissingSensor(id.to_string()))
    }

    /// Sub-matrix with the named columns, in the given order.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let idx = ids
            .iter()
            .map(|id| self.index_of(id).ok_or_else(|| Error::MissingSensor(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            timestamps: self.timestamps.clone(),
            sensor_ids: ids.to_vec(),
            values: self.values.select(Axis(1), &idx),
        })
    }

    /// Contiguous row range `[start, end)`.
    pub fn rows(&self, start: usize, end: usize) -> Self {
        Self {
            timestamps: self.timestamps[start..end].to_vec(),
            sensor_ids: self.sensor_ids.clone(),
            values: self.values.slice(ndarray::s![start..end, ..]).to_owned(),
        }
    }
}

fn snap(t: &DateTime<Utc>, interval_secs: i64) -> i64 {
    t.timestamp().div_euclid(interval_secs) * interval_secs
}

/// Aligns readings onto a fixed grid of `interval_secs`.
///
/// Timestamps are floored to the grid; several readings of one sensor in the
/// same cell are averaged. `sensors` restricts (and orders) the output
/// columns; by default every sensor present is used, in ascending id order.
pub fn align(
    records: &[RawRecord],
    interval_secs: i64,
    policy: AlignPolicy,
    sensors: Option<&[String]>,
) -> Result<TimeSeriesMatrix> {
    if interval_secs <= 0 {
        return Err(contract("interval must be positive"));
    }
    // sensor -> cell -> readings
    let mut cells: BTreeMap<&str, BTreeMap<i64, Vec<f64>>> = BTreeMap::new();
    for r in records {
        cells
            .entry(r.sensor_id.as_str())
            .or_default()
            .entry(snap(&r.timestamp, interval_secs))
            .or_default()
            .push(r.value);
    }
    let ids: Vec<String> = match sensors {
        Some(s) => s.to_vec(),
        None => cells.keys().map(|s| s.to_string()).collect(),
    };
    if ids.is_empty() {
        return Err(Error::EmptyResult("no sensors".into()));
    }
    let mut columns: Vec<BTreeMap<i64, f64>> = Vec::with_capacity(ids.len());
    for id in &ids {
        let per_cell = cells
            .get(id.as_str())
            .ok_or_else(|| Error::MissingSensor(id.clone()))?;
        columns.push(
            per_cell
                .iter()
                .map(|(&k, vs)| {
                    let mut vs = vs.clone();
                    vs.sort_by(f64::total_cmp);
                    (k, vs.iter().sum::<f64>() / vs.len() as f64)
                })
                .collect(),
        );
    }

    let mut stamps: Vec<i64> = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    match policy {
        AlignPolicy::DropIncomplete => {
            for &k in columns[0].keys() {
                if columns.iter().all(|c| c.contains_key(&k)) {
                    stamps.push(k);
                    rows.extend(columns.iter().map(|c| c[&k]));
                }
            }
        }
        AlignPolicy::ForwardFill => {
            let first = columns.iter().filter_map(|c| c.keys().next()).min().copied();
            let last = columns.iter().filter_map(|c| c.keys().next_back()).max().copied();
            if let (Some(first), Some(last)) = (first, last) {
                let mut carry: Vec<Option<f64>> = vec![None; columns.len()];
                let mut k = first;
                while k <= last {
                    for (c, slot) in columns.iter().zip(carry.iter_mut()) {
                        if let Some(&v) = c.get(&k) {
                            *slot = Some(v);
                        }
                    }
                    if carry.iter().all(Option::is_some) {
                        stamps.push(k);
                        rows.extend(carry.iter().map(|v| v.unwrap()));
                    }
                    k += interval_secs;
                }
            }
        }
    }
    if stamps.is_empty() {
        return Err(Error::EmptyResult("no complete rows after alignment".into()));
    }
    let values = Array2::from_shape_vec((stamps.len(), ids.len()), rows)
        .expect("row buffer matches shape");
    let timestamps = stamps
        .into_iter()
        .map(|s| Utc.timestamp_opt(s, 0).unwrap())
        .collect();
    TimeSeriesMatrix::new(timestamps, ids, values)
}

/// Downsamples to a coarser grid by averaging the rows that fall in each cell.
pub fn resample_mean(matrix: &TimeSeriesMatrix, interval_secs: i64) -> Result<TimeSeriesMatrix> {
    if interval_secs <= 0 {
        return Err(contract("interval must be positive"));
    }
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, t) in matrix.timestamps.iter().enumerate() {
        groups.entry(snap(t, interval_secs)).or_default().push(i);
    }
    let mut values = Array2::zeros((groups.len(), matrix.n_sensors()));
    let mut timestamps = Vec::with_capacity(groups.len());
    for (r, (k, idx)) in groups.iter().enumerate() {
        timestamps.push(Utc.timestamp_opt(*k, 0).unwrap());
        let block = matrix.values.select(Axis(0), idx);
        values.row_mut(r).assign(&block.mean_axis(Axis(0)).unwrap());
    }
    TimeSeriesMatrix::new(timestamps, matrix.sensor_ids.clone(), values)
}

/// Mean and sample standard deviation (n - 1 denominator).
pub fn mean_std(x: ArrayView1<'_, f64>) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.sum() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn zscore_column(id: &str, x: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
    let (mean, sd) = mean_std(x);
    if x.len() < 2 || sd * sd <= VARIANCE_TOLERANCE {
        return Err(Error::DegenerateSensor(id.to_string()));
    }
    Ok(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Per-column z-score (mean 0, sample variance 1).
pub fn normalize(matrix: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
    let mut values = matrix.values.clone();
    for (j, id) in matrix.sensor_ids.iter().enumerate() {
        let z = zscore_column(id, matrix.values.column(j))?;
        values.column_mut(j).assign(&ArrayView1::from(&z));
    }
    Ok(TimeSeriesMatrix { values, ..matrix.clone() })
}

/// Cuts a series into `floor((T - d) / s) + 1` contiguous frames of length `d`.
pub fn window(series: &[f64], frame_len: usize, stride: usize) -> Result<Array2<f64>> {
    if frame_len == 0 || stride == 0 {
        return Err(contract("frame length and stride must be at least 1"));
    }
    if series.len() < frame_len {
        return Err(Error::InsufficientData(format!(
            "series of length {} is shorter than one frame ({frame_len})",
            series.len()
        )));
    }
    let n = (series.len() - frame_len) / stride + 1;
    let mut frames = Array2::zeros((n, frame_len));
    for (i, mut row) in frames.rows_mut().into_iter().enumerate() {
        let start = i * stride;
        row.assign(&ArrayView1::from(&series[start..start + frame_len]));
    }
    Ok(frames)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Zscore,
    None,
}

/// Fixed-length windows of one sensor (rows are frames).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    pub sensor_id: String,
    pub frames: Array2<f64>,
    pub frame_len: usize,
    pub normalization: Normalization,
}

impl FrameSet {
    /// Normalizes (optionally) and windows a scalar series.
    pub fn from_series(
        sensor_id: &str,
        series: ArrayView1<'_, f64>,
        frame_len: usize,
        stride: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        let data = match normalization {
            Normalization::Zscore => zscore_column(sensor_id, series)?,
            Normalization::None => series.to_vec(),
        };
        let frames = window(&data, frame_len, stride)?;
        if frame_len < 2 || frames.nrows() < 2 {
            return Err(Error::InsufficientData(format!(
                "sensor `{sensor_id}` yields {} frames of length {frame_len}; need at least 2x2",
                frames.nrows()
            )));
        }
        Ok(Self { sensor_id: sensor_id.to_string(), frames, frame_len, normalization })
    }

    /// Frames from an already-windowed matrix (used for multi-channel blocks).
    pub fn from_frames(sensor_id: &str, frames: Array2<f64>, normalization: Normalization) -> Result<Self> {
        if frames.nrows() < 2 || frames.ncols() < 2 {
            return Err(Error::InsufficientData(format!(
                "frame set `{sensor_id}` is {}x{}; need at least 2x2",
                frames.nrows(),
                frames.ncols()
            )));
        }
        Ok(Self {
            sensor_id: sensor_id.to_string(),
            frame_len: frames.ncols(),
            frames,
            normalization,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }
}

/// One frame set per column of the matrix.
pub fn frame_matrix(
    matrix: &TimeSeriesMatrix,
    frame_len: usize,
    stride: usize,
    normalization: Normalization,
) -> Result<Vec<FrameSet>> {
    matrix
        .sensor_ids
        .iter()
        .enumerate()
        .map(|(j, id)| FrameSet::from_series(id, matrix.column(j), frame_len, stride, normalization))
        .collect()
}

/// Reads a wide CSV: `timestamp,<sensor>,<sensor>,...`.
pub fn read_wide_csv<R: Read>(source: R) -> Result<TimeSeriesMatrix> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Schema("wide CSV needs a timestamp column and at least one sensor".into()));
    }
    let ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut stamps = Vec::new();
    let mut cells = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let parse_err = |reason: &str| Error::Parse { row: line, reason: reason.to_string() };
        stamps.push(parse_timestamp(&row[0]).ok_or_else(|| parse_err("unparseable timestamp"))?);
        for c in 1..headers.len() {
            let v = row.get(c).and_then(parse_value).ok_or_else(|| parse_err("bad value"))?;
            cells.push(v);
        }
    }
    let values = Array2::from_shape_vec((stamps.len(), ids.len()), cells)
        .map_err(|e| Error::Schema(e.to_string()))?;
    TimeSeriesMatrix::new(stamps, ids, values)
}

pub fn write_wide_csv<W: Write>(matrix: &TimeSeriesMatrix, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["timestamp".to_string()];
    header.extend(matrix.sensor_ids.iter().cloned());
    w.write_record(&header)?;
    for (t, row) in matrix.timestamps.iter().zip(matrix.values.rows()) {
        let mut rec = vec![format_timestamp(t)];
        rec.extend(row.iter().map(|v| format!("{v}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
