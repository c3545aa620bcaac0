//! CSV loading of univariate series.
//!
//! Input: comma-separated UTF-8 with a header row. Only the configured
//! timestamp and value columns are read; extra columns are ignored.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    #[default]
    None,
    /// Natural logarithm; raw values must be strictly positive.
    Log,
    /// Affine map onto `[0, 1]`.
    Minmax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeriesFile {
    pub path: PathBuf,
    #[serde(default = "default_timestamp_column")]
    pub timestamp_column: String,
    #[serde(default = "default_value_column")]
    pub value_column: String,
    #[serde(default)]
    pub transform: Transform,
}

fn default_timestamp_column() -> String {
    "timestamp".into()
}

fn default_value_column() -> String {
    "value".into()
}

impl SeriesFile {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            timestamp_column: default_timestamp_column(),
            value_column: default_value_column(),
            transform: Transform::None,
        }
    }

    pub fn with_transform(mut self, transform: Transform) -> Self {
        self.transform = transform;
        self
    }
}

/// A loaded series in ascending time order, in transformed units.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub timestamps: Vec<String>,
    pub values: Vec<f64>,
    pub transform: Transform,
}

pub fn load_series(file: &SeriesFile) -> Result<Series> {
    let path = file.path.as_path();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::UnparseableRow {
                path: path.to_path_buf(),
                row: 0,
                reason: format!("{other:?}"),
            },
        })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let ts_idx = col(&file.timestamp_column)?;
    let val_idx = col(&file.value_column)?;

    let mut rows: Vec<(String, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| unparseable(path, row, e.to_string()))?;
        let ts = rec
            .get(ts_idx)
            .ok_or_else(|| unparseable(path, row, "missing timestamp field".into()))?
            .trim()
            .to_string();
        let raw = rec
            .get(val_idx)
            .ok_or_else(|| unparseable(path, row, "missing value field".into()))?
            .trim();
        let v: f64 = raw
            .parse()
            .map_err(|_| unparseable(path, row, format!("cannot parse `{raw}` as a number")))?;
        if !v.is_finite() {
            return Err(unparseable(path, row, format!("non-finite value `{raw}`")));
        }
        if file.transform == Transform::Log && v <= 0.0 {
            return Err(Error::NonPositiveValueForLog {
                path: path.to_path_buf(),
                row,
                value: v,
            });
        }
        rows.push((ts, v));
    }

    if !is_sorted_by_time(&rows) {
        log::warn!(
            "{}: timestamps out of order, sorting ascending",
            path.display()
        );
        rows.sort_by(|a, b| compare_timestamps(&a.0, &b.0));
    }
    let (timestamps, raw): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    let values = apply_transform(&raw, file.transform);
    Ok(Series {
        timestamps,
        values,
        transform: file.transform,
    })
}

fn unparseable(path: &Path, row: usize, reason: String) -> Error {
    Error::UnparseableRow {
        path: path.to_path_buf(),
        row,
        reason,
    }
}

/// Numeric timestamps compare numerically, anything else lexicographically
/// (ISO-8601 dates sort correctly that way).
fn compare_timestamps(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    }
}

fn is_sorted_by_time(rows: &[(String, f64)]) -> bool {
    rows.windows(2)
        .all(|w| compare_timestamps(&w[0].0, &w[1].0) != std::cmp::Ordering::Greater)
}

/// Applies `transform` to already-validated raw values.
pub fn apply_transform(raw: &[f64], transform: Transform) -> Vec<f64> {
    match transform {
        Transform::None => raw.to_vec(),
        Transform::Log => raw.iter().map(|v| v.ln()).collect(),
        Transform::Minmax => {
            let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            if span > 0.0 {
                raw.iter().map(|v| (v - lo) / span).collect()
            } else {
                vec![0.0; raw.len()]
            }
        }
    }
}

/// Writes `timestamp,value` rows in the schema `load_series` reads by default.
pub fn write_series_csv(path: &Path, timestamps: &[String], values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    })?;
    w.write_record(["timestamp", "value"])?;
    for (ts, v) in timestamps.iter().zip(values) {
        w.write_record([ts.as_str(), &v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn log_transform() {
        let e = std::f64::consts::E;
        let f = write(&format!("timestamp,value\n1,1\n2,{}\n3,{}\n", e, e * e));
        let s = load_series(&SeriesFile::new(f.path()).with_transform(Transform::Log)).unwrap();
        assert_eq!(s.values[0], 0.0);
        assert!((s.values[1] - 1.0).abs() < 1e-15);
        assert!((s.values[2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn minmax_transform() {
        let f = write("timestamp,value\na,2\nb,4\nc,6\n");
        let s = load_series(&SeriesFile::new(f.path()).with_transform(Transform::Minmax)).unwrap();
        assert_eq!(s.values, vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn log_rejects_nonpositive() {
        let f = write("timestamp,value\n1,0\n2,1\n");
        let err = load_series(&SeriesFile::new(f.path()).with_transform(Transform::Log)).unwrap_err();
        assert!(matches!(err, Error::NonPositiveValueForLog { row: 1, .. }));
    }

    #[test]
    fn missing_column() {
        let f = write("date,close\n1,2\n");
        let err = load_series(&SeriesFile::new(f.path())).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { ref column, .. } if column == "timestamp"));
    }

    #[test]
    fn unparseable_row_reports_index() {
        let f = write("timestamp,value\n1,2\n2,abc\n");
        let err = load_series(&SeriesFile::new(f.path())).unwrap_err();
        assert!(matches!(err, Error::UnparseableRow { row: 2, .. }));
    }

    #[test]
    fn extra_columns_and_custom_names() {
        let f = write("date,open,close\n2024-01-02,1,10.5\n2024-01-01,1,9.25\n");
        let file = SeriesFile {
            timestamp_column: "date".into(),
            value_column: "close".into(),
            ..SeriesFile::new(f.path())
        };
        let s = load_series(&file).unwrap();
        assert_eq!(s.timestamps, vec!["2024-01-01", "2024-01-02"]);
        assert_eq!(s.values, vec![9.25, 10.5]);
    }

    #[test]
    fn numeric_timestamps_sort_numerically() {
        let f = write("timestamp,value\n10,1\n9,2\n100,3\n");
        let s = load_series(&SeriesFile::new(f.path())).unwrap();
        assert_eq!(s.values, vec![2.0, 1.0, 3.0]);
    }

    #[test]
    fn missing_file_is_io_error_naming_path() {
        let err = load_series(&SeriesFile::new("/nonexistent/series.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/series.csv"));
    }
}
