//! Feature vector files.
//!
//! CSV: a header line of feature names and one line of values, written with
//! the shortest representation that parses back to the same `f64`.
//! Binary: a one-row framed matrix (see [`crate::framed`]) whose `names`
//! metadata entry holds the newline-separated feature names.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::{FeatureError, FeatureVector};
use crate::framed::{self, FramedError, FramedMatrix};

#[derive(Debug, Error)]
pub enum FeatureIoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },
    #[error("{path}: {source}")]
    Framed {
        path: PathBuf,
        #[source]
        source: FramedError,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: FeatureError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeatureIoError + '_ {
    move |source| FeatureIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn schema(path: &Path, detail: impl Into<String>) -> FeatureIoError {
    FeatureIoError::Schema {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

pub fn feature_csv_string(v: &FeatureVector) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(v.names()).expect("in-memory write");
    w.write_record(v.values().iter().map(|x| x.to_string()))
        .expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn parse_feature_csv(text: &str, origin: &Path) -> Result<FeatureVector, FeatureIoError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let names: Vec<String> = r
        .headers()
        .map_err(|e| schema(origin, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut records = r.records();
    let row = records
        .next()
        .ok_or_else(|| schema(origin, "missing value row"))?
        .map_err(|e| schema(origin, e.to_string()))?;
    if records.next().is_some() {
        return Err(schema(origin, "more than one value row"));
    }
    let values = row
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            cell.trim()
                .parse::<f64>()
                .map_err(|_| schema(origin, format!("column {i}: `{cell}` is not a number")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    FeatureVector::new(names, values).map_err(|source| FeatureIoError::Invalid {
        path: origin.to_path_buf(),
        source,
    })
}

pub fn write_feature_csv(path: impl AsRef<Path>, v: &FeatureVector) -> Result<(), FeatureIoError> {
    let path = path.as_ref();
    fs::write(path, feature_csv_string(v)).map_err(io_err(path))
}

pub fn read_feature_csv(path: impl AsRef<Path>) -> Result<FeatureVector, FeatureIoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_feature_csv(&text, path)
}

pub fn feature_to_framed(v: &FeatureVector) -> FramedMatrix {
    FramedMatrix {
        meta: [("names".to_string(), v.names().join("\n"))].into(),
        rows: 1,
        cols: v.len(),
        values: v.values().to_vec(),
    }
}

pub fn feature_from_framed(m: FramedMatrix, origin: &Path) -> Result<FeatureVector, FeatureIoError> {
    if m.rows != 1 {
        return Err(schema(origin, format!("expected 1 row, found {}", m.rows)));
    }
    let names: Vec<String> = match m.meta.get("names") {
        Some(s) if s.is_empty() => Vec::new(),
        Some(s) => s.split('\n').map(str::to_string).collect(),
        None => return Err(schema(origin, "missing `names` metadata")),
    };
    FeatureVector::new(names, m.values).map_err(|source| FeatureIoError::Invalid {
        path: origin.to_path_buf(),
        source,
    })
}

pub fn write_feature_binary(path: impl AsRef<Path>, v: &FeatureVector) -> Result<(), FeatureIoError> {
    let path = path.as_ref();
    fs::write(path, framed::encode(&feature_to_framed(v))).map_err(io_err(path))
}

pub fn read_feature_binary(path: impl AsRef<Path>) -> Result<FeatureVector, FeatureIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let m = framed::decode(&bytes).map_err(|source| FeatureIoError::Framed {
        path: path.to_path_buf(),
        source,
    })?;
    feature_from_framed(m, path)
}

/// Reads either format, chosen by the leading magic bytes.
pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureVector, FeatureIoError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    if framed::is_framed(&bytes) {
        let m = framed::decode(&bytes).map_err(|source| FeatureIoError::Framed {
            path: path.to_path_buf(),
            source,
        })?;
        feature_from_framed(m, path)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| schema(path, "not UTF-8 text"))?;
        parse_feature_csv(&text, path)
    }
}
