//! NSL-KDD ingestion and preprocessing.
//!
//! The pipeline runs parse → encode → binarize, then per data holder:
//! standardize → PCA. Every step that shuffles takes an explicit seed so
//! that a fixed (file, vocabulary, seed, k) produces bit-identical output.

mod container;
mod encode;
mod pca;
mod records;
mod scaler;
mod split;
pub mod synthetic;

pub use container::{read_container, read_container_file, write_container, write_container_file};
pub use encode::{binarize_labels, encode_features, CategoryVocab};
pub use pca::{apply_pca, fit_pca, PcaModel};
pub use records::{parse_bytes, parse_csv, Record, RecordSet, NUMERIC_FEATURES, RAW_FEATURES};
pub use scaler::{apply_scaler, fit_scaler, Scaler};
pub use split::{make_proxy_split, partition_iid, Partition};

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}{}", column.map(|c| format!(" (column {c})")).unwrap_or_default())]
    Malformed {
        line: usize,
        column: Option<usize>,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dimension mismatch: expected {expected} columns, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("bad container: {0}")]
    Container(String),
    #[error("eigendecomposition failed")]
    Eigen,
}

/// Opens and parses an NSL-KDD text file, accepting the difficulty column.
pub fn load_records(path: &Path) -> Result<RecordSet, DataError> {
    let file = File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_csv(BufReader::new(file), true, &name)
}

/// Dense row-major matrix of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self, DataError> {
        if data.len() != n_rows * n_cols {
            return Err(DataError::InvalidArgument(format!(
                "{} values cannot fill a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(DataError::InvalidArgument("non-finite matrix entry".into()));
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, DataError> {
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(DataError::DimensionMismatch {
                expected: n_cols,
                actual: bad.len(),
            });
        }
        Self::from_vec(rows.len(), n_cols, rows.concat())
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        FeatureMatrix {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        self.data.chunks_exact(self.n_cols.max(1)).take(self.n_rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            data,
        }
    }

    /// Stacks matrices vertically; all must share a column count.
    pub fn vstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix, DataError> {
        let n_cols = parts.first().map_or(0, |p| p.n_cols);
        let mut data = Vec::new();
        let mut n_rows = 0;
        for p in parts {
            if p.n_cols != n_cols {
                return Err(DataError::DimensionMismatch {
                    expected: n_cols,
                    actual: p.n_cols,
                });
            }
            data.extend_from_slice(&p.data);
            n_rows += p.n_rows;
        }
        Ok(FeatureMatrix {
            n_rows,
            n_cols,
            data,
        })
    }

    /// Row-major f32 copy, the layout the network consumes.
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&v| v as f32).collect()
    }
}

/// 0 = normal, 1 = intrusion.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelVector {
    labels: Vec<u8>,
}

impl LabelVector {
    pub fn new(labels: Vec<u8>) -> Self {
        debug_assert!(labels.iter().all(|&l| l <= 1));
        LabelVector { labels }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.labels
    }

    pub fn count_normal(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 0).count()
    }

    pub fn select(&self, indices: &[usize]) -> LabelVector {
        LabelVector::new(indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn concat(parts: &[&LabelVector]) -> LabelVector {
        LabelVector::new(parts.iter().flat_map(|p| p.labels.iter().copied()).collect())
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.labels.iter().map(|&l| f32::from(l)).collect()
    }
}

/// Standardization followed by PCA, fitted on one holder's data.
#[derive(Debug, Clone, PartialEq)]
pub struct Preprocessor {
    pub scaler: Scaler,
    pub pca: PcaModel,
}

impl Preprocessor {
    pub fn fit(x: &FeatureMatrix, k: usize) -> Result<Self, DataError> {
        let scaler = fit_scaler(x)?;
        let z = apply_scaler(x, &scaler)?;
        let pca = fit_pca(&z, k)?;
        Ok(Preprocessor { scaler, pca })
    }

    pub fn transform(&self, x: &FeatureMatrix) -> Result<FeatureMatrix, DataError> {
        apply_pca(&apply_scaler(x, &self.scaler)?, &self.pca)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_rejects_ragged_rows() {
        let err = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).unwrap_err();
        assert!(matches!(err, DataError::DimensionMismatch { .. }));
    }

    #[test]
    fn matrix_rejects_nan() {
        assert!(FeatureMatrix::from_vec(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn malformed_message_format() {
        let e = DataError::Malformed {
            line: 1,
            column: None,
            message: "expected 42 or 43 fields, found 40".into(),
        };
        assert_eq!(e.to_string(), "line 1: expected 42 or 43 fields, found 40");
        let e = DataError::Malformed {
            line: 3,
            column: Some(5),
            message: "bad".into(),
        };
        assert_eq!(e.to_string(), "line 3: bad (column 5)");
    }
}
