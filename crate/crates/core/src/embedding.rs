//! Externally computed embeddings (e.g. wav2vec-family or spectrogram CNN
//! outputs), one matrix of time steps x dim per segment.
//!
//! CSV layout:
//!
//! ```text
//! model_id,segment_id,dim
//! wav2vec2,s01_text_000,4
//! 0.1,0.2,0.3,0.4
//! ...
//! ```
//!
//! Binary layout: a framed matrix with `model_id`, `segment_id` and `dim`
//! metadata entries.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::features::FeatureVector;
use crate::framed::{self, FramedError, FramedMatrix};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {detail}")]
    SchemaViolation { path: PathBuf, detail: String },
    #[error("{path}: non-finite value at row {row}, column {col}")]
    NonFiniteValue { path: PathBuf, row: usize, col: usize },
    #[error("model `{model_id}`: segment `{segment_id}` has dim {got}, cohort uses {expected}")]
    DimensionMismatch {
        model_id: String,
        segment_id: String,
        expected: usize,
        got: usize,
    },
    #[error("embedding matrix has no time steps")]
    EmptyMatrix,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    model_id: String,
    segment_id: String,
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(
        model_id: impl Into<String>,
        segment_id: impl Into<String>,
        dim: usize,
        values: Vec<f64>,
    ) -> Result<Self, EmbeddingError> {
        let origin = PathBuf::from("<memory>");
        if dim == 0 || !values.len().is_multiple_of(dim) {
            return Err(EmbeddingError::SchemaViolation {
                path: origin,
                detail: format!("{} values do not fill rows of {dim}", values.len()),
            });
        }
        if values.is_empty() {
            return Err(EmbeddingError::EmptyMatrix);
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFiniteValue {
                path: origin,
                row: i / dim,
                col: i % dim,
            });
        }
        Ok(Self {
            model_id: model_id.into(),
            segment_id: segment_id.into(),
            dim,
            values,
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn segment_id(&self) -> &str {
        &self.segment_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_steps(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Stacks the time steps of `other` below these.
    pub fn concat(&self, other: &EmbeddingMatrix) -> Result<EmbeddingMatrix, EmbeddingError> {
        check_dim(self.dim, other)?;
        let mut values = self.values.clone();
        values.extend(&other.values);
        Ok(Self { values, ..self.clone() })
    }
}

/// Rejects a matrix whose dim differs from the cohort's.
pub fn check_dim(expected: usize, m: &EmbeddingMatrix) -> Result<(), EmbeddingError> {
    if m.dim != expected {
        return Err(EmbeddingError::DimensionMismatch {
            model_id: m.model_id.clone(),
            segment_id: m.segment_id.clone(),
            expected,
            got: m.dim,
        });
    }
    Ok(())
}

fn violation(path: &Path, detail: impl Into<String>) -> EmbeddingError {
    EmbeddingError::SchemaViolation {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn finish(
    path: &Path,
    model_id: String,
    segment_id: String,
    dim: usize,
    values: Vec<f64>,
) -> Result<EmbeddingMatrix, EmbeddingError> {
    if values.is_empty() {
        return Err(violation(path, "no time steps"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(EmbeddingError::NonFiniteValue {
            path: path.to_path_buf(),
            row: i / dim,
            col: i % dim,
        });
    }
    Ok(EmbeddingMatrix {
        model_id,
        segment_id,
        dim,
        values,
    })
}

pub fn parse_embedding_csv(text: &str, path: &Path) -> Result<EmbeddingMatrix, EmbeddingError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut records = r.records();
    let mut next = |what: &str| -> Result<csv::StringRecord, EmbeddingError> {
        records
            .next()
            .ok_or_else(|| violation(path, format!("missing {what}")))?
            .map_err(|e| violation(path, e.to_string()))
    };
    let header = next("header")?;
    if header.iter().map(str::trim).collect::<Vec<_>>() != ["model_id", "segment_id", "dim"] {
        return Err(violation(path, "header must be `model_id,segment_id,dim`"));
    }
    let ids = next("identity line")?;
    if ids.len() != 3 {
        return Err(violation(path, "identity line needs 3 fields"));
    }
    let model_id = ids[0].trim().to_string();
    let segment_id = ids[1].trim().to_string();
    if model_id.is_empty() || segment_id.is_empty() {
        return Err(violation(path, "empty model_id or segment_id"));
    }
    let dim: usize = ids[2]
        .trim()
        .parse()
        .ok()
        .filter(|&d| d > 0)
        .ok_or_else(|| violation(path, format!("bad dim `{}`", &ids[2])))?;
    let mut values = Vec::new();
    for (row, rec) in records.enumerate() {
        let rec = rec.map_err(|e| violation(path, e.to_string()))?;
        if rec.len() != dim {
            return Err(violation(
                path,
                format!("row {row} has {} values, header dim is {dim}", rec.len()),
            ));
        }
        for (col, cell) in rec.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| violation(path, format!("row {row}, column {col}: `{cell}` is not a number")))?;
            if !v.is_finite() {
                return Err(EmbeddingError::NonFiniteValue {
                    path: path.to_path_buf(),
                    row,
                    col,
                });
            }
            values.push(v);
        }
    }
    finish(path, model_id, segment_id, dim, values)
}

pub fn embedding_from_framed(m: FramedMatrix, path: &Path) -> Result<EmbeddingMatrix, EmbeddingError> {
    let field = |k: &str| {
        m.meta
            .get(k)
            .cloned()
            .ok_or_else(|| violation(path, format!("missing `{k}` metadata")))
    };
    let model_id = field("model_id")?;
    let segment_id = field("segment_id")?;
    let dim: usize = field("dim")?.parse().map_err(|_| violation(path, "bad dim metadata"))?;
    if dim != m.cols {
        return Err(violation(
            path,
            format!("rows of length {}, header dim is {dim}", m.cols),
        ));
    }
    finish(path, model_id, segment_id, dim, m.values)
}

pub fn embedding_to_framed(e: &EmbeddingMatrix) -> FramedMatrix {
    FramedMatrix {
        meta: [
            ("dim".to_string(), e.dim.to_string()),
            ("model_id".to_string(), e.model_id.clone()),
            ("segment_id".to_string(), e.segment_id.clone()),
        ]
        .into(),
        rows: e.n_steps(),
        cols: e.dim,
        values: e.values.clone(),
    }
}

pub fn embedding_csv_string(e: &EmbeddingMatrix) -> String {
    let mut out = format!("model_id,segment_id,dim\n{},{},{}\n", e.model_id, e.segment_id, e.dim);
    for i in 0..e.n_steps() {
        let row: Vec<String> = e.row(i).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Loads an embedding file in either format, chosen by the leading bytes.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix, EmbeddingError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| EmbeddingError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if framed::is_framed(&bytes) {
        let m = framed::decode(&bytes).map_err(|e: FramedError| violation(path, e.to_string()))?;
        embedding_from_framed(m, path)
    } else {
        let text = String::from_utf8(bytes).map_err(|_| violation(path, "not UTF-8 text"))?;
        parse_embedding_csv(&text, path)
    }
}

/// Per-dimension mean over time steps, named `model_id[i]`.
///
/// Column sums are exact before rounding, so the result does not depend on
/// row order and repeating the matrix leaves it unchanged.
pub fn mean_pool(m: &EmbeddingMatrix) -> Result<FeatureVector, EmbeddingError> {
    let n = m.n_steps();
    if n == 0 {
        return Err(EmbeddingError::EmptyMatrix);
    }
    let names = (0..m.dim).map(|i| format!("{}[{i}]", m.model_id)).collect();
    let values = (0..m.dim)
        .map(|c| exact_sum((0..n).map(|r| m.values[r * m.dim + c])) / n as f64)
        .collect();
    Ok(FeatureVector::new(names, values).expect("mean of finite values is finite"))
}

/// Correctly rounded sum using non-overlapping partials (Shewchuk).
fn exact_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in xs {
        let mut i = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        partials.truncate(i);
        partials.push(x);
    }
    // Round the partials to nearest, with the half-way correction.
    let Some(mut hi) = partials.pop() else {
        return 0.0;
    };
    let mut lo = 0.0;
    while let Some(y) = partials.pop() {
        let x = hi;
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if let Some(&next) = partials.last() {
        if (lo < 0.0 && next < 0.0) || (lo > 0.0 && next > 0.0) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
    }
    hi
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("e.csv")
    }

    #[test]
    fn three_by_four_csv() {
        let text = "model_id,segment_id,dim\nw2v,seg1,4\n1,2,3,4\n5,6,7,8\n9,10,11,12\n";
        let m = parse_embedding_csv(text, p()).unwrap();
        assert_eq!((m.n_steps(), m.dim()), (3, 4));
        assert_eq!(m.model_id(), "w2v");
        assert_eq!(embedding_csv_string(&m), text);
    }

    #[test]
    fn nan_cell_is_located() {
        let text = "model_id,segment_id,dim\nw,s,2\n1,2\n3,NaN\n";
        match parse_embedding_csv(text, p()) {
            Err(EmbeddingError::NonFiniteValue { row, col, .. }) => assert_eq!((row, col), (1, 1)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn row_length_must_match_header() {
        let row = vec!["0.5"; 1000].join(",");
        let text = format!("model_id,segment_id,dim\nw,s,1024\n{row}\n");
        assert!(matches!(
            parse_embedding_csv(&text, p()),
            Err(EmbeddingError::SchemaViolation { .. })
        ));
        assert!(matches!(
            parse_embedding_csv("model_id,segment_id\n", p()),
            Err(EmbeddingError::SchemaViolation { .. })
        ));
        assert!(matches!(
            parse_embedding_csv("model_id,segment_id,dim\nw,s,2\n", p()),
            Err(EmbeddingError::SchemaViolation { .. })
        ));
    }

    #[test]
    fn pooling_examples() {
        let one = EmbeddingMatrix::new("m", "s", 3, vec![1.0, -2.0, 0.5]).unwrap();
        let v = mean_pool(&one).unwrap();
        assert_eq!(v.values(), &[1.0, -2.0, 0.5]);
        assert_eq!(v.names()[2], "m[2]");
        let two = EmbeddingMatrix::new("m", "s", 2, vec![1.0, 3.0, 3.0, 1.0]).unwrap();
        assert_eq!(mean_pool(&two).unwrap().values(), &[2.0, 2.0]);
        assert!(matches!(
            EmbeddingMatrix::new("m", "s", 2, vec![]),
            Err(EmbeddingError::EmptyMatrix)
        ));
    }

    #[test]
    fn exact_sum_matches_fsum() {
        assert_eq!(exact_sum([0.1; 10].into_iter()), 1.0);
        assert_eq!(exact_sum([1e100, 1.0, -1e100].into_iter()), 1.0);
        assert_eq!(exact_sum(std::iter::empty()), 0.0);
    }

    #[test]
    fn cohort_dim_check() {
        let m = EmbeddingMatrix::new("m", "s", 2, vec![1.0, 2.0]).unwrap();
        assert!(check_dim(2, &m).is_ok());
        assert!(matches!(
            check_dim(3, &m),
            Err(EmbeddingError::DimensionMismatch {
                expected: 3,
                got: 2,
                ..
            })
        ));
    }

    #[test]
    fn binary_and_csv_files() {
        let dir = tempfile::tempdir().unwrap();
        let m = EmbeddingMatrix::new("deepspec", "seg", 3, vec![0.1, 0.2, 0.3, -1.0, 2.0, 1e-9]).unwrap();
        let b = dir.path().join("e.bin");
        let c = dir.path().join("e.csv");
        fs::write(&b, framed::encode(&embedding_to_framed(&m))).unwrap();
        fs::write(&c, embedding_csv_string(&m)).unwrap();
        assert_eq!(load_embeddings(&b).unwrap(), m);
        assert_eq!(load_embeddings(&c).unwrap(), m);
    }

    proptest! {
        #[test]
        fn pooling_properties(rows in proptest::collection::vec(proptest::collection::vec(-1e3f64..1e3, 4), 1..12), rot in 0usize..12) {
            let flat: Vec<f64> = rows.concat();
            let m = EmbeddingMatrix::new("m", "s", 4, flat).unwrap();
            let pooled = mean_pool(&m).unwrap();
            prop_assert_eq!(pooled.len(), 4);
            // Doubling the matrix leaves the mean unchanged.
            let doubled = mean_pool(&m.concat(&m).unwrap()).unwrap();
            prop_assert_eq!(&doubled, &pooled);
            let mut rotated = rows.clone();
            rotated.rotate_left(rot % rows.len());
            let r = mean_pool(&EmbeddingMatrix::new("m", "s", 4, rotated.concat()).unwrap()).unwrap();
            prop_assert_eq!(&r, &pooled);
        }
    }
}
