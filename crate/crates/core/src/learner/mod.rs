//! Fold-safe standardization, linear SVM training, prediction and the
//! balanced-accuracy metric.

mod metrics;
mod model;
mod scaler;
mod select;
mod svm;

pub use metrics::balanced_accuracy;
pub use model::{predict, train_model, TrainedModel, TrainingMeta, MODEL_FORMAT_VERSION};
pub use scaler::{fit_scaler, ScalerParams, STD_FLOOR};
pub(crate) use select::select_c_with_gram;
pub use select::{select_c, stratified_group_folds, CGrid, CSelection};
pub use svm::{train_linear_svm, Gram, LinearSvm, SvmOptions, SvmProblem};

use thiserror::Error;

use crate::cohort::BinaryLabel;

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("training data holds a single class")]
    SingleClassTraining,
    #[error("non-finite input at row {row}, column {col}")]
    NonFiniteInput { row: usize, col: usize },
    #[error("expected {expected} dimensions, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no samples of class `{}`", .0.as_str())]
    MissingClass(BinaryLabel),
    #[error("{0} labels for {1} rows")]
    LengthMismatch(usize, usize),
    #[error("invalid C grid: {0}")]
    InvalidGrid(String),
    #[error("model file: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Checks a rectangular, finite matrix and returns its width.
pub(crate) fn check_matrix(x: &[Vec<f64>]) -> Result<usize, LearnerError> {
    let d = x.first().map_or(0, Vec::len);
    for (row, r) in x.iter().enumerate() {
        if r.len() != d {
            return Err(LearnerError::DimensionMismatch {
                expected: d,
                got: r.len(),
            });
        }
        if let Some(col) = r.iter().position(|v| !v.is_finite()) {
            return Err(LearnerError::NonFiniteInput { row, col });
        }
    }
    Ok(d)
}
