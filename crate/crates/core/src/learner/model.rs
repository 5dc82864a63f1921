use serde::{Deserialize, Serialize};

use super::scaler::{fit_scaler, ScalerParams};
use super::svm::{train_linear_svm, SvmOptions};
use super::LearnerError;
use crate::cohort::BinaryLabel;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub fold_id: Option<String>,
    pub iterations: usize,
    pub duality_gap: f64,
    pub inner_cv_seed: Option<u64>,
}

/// Hyperplane in standardized space plus the scaler that maps raw rows into it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c_value: f64,
    pub class_weighting: bool,
    pub scaler: ScalerParams,
    pub training_meta: TrainingMeta,
}

impl TrainedModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, LearnerError> {
        let m: Self = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnerError::InvalidGrid(format!(
                "unsupported model format {}",
                m.format_version
            )));
        }
        if m.weights.len() != m.scaler.dim() {
            return Err(LearnerError::DimensionMismatch {
                expected: m.scaler.dim(),
                got: m.weights.len(),
            });
        }
        Ok(m)
    }

    pub fn decision(&self, raw: &[f64]) -> Result<f64, LearnerError> {
        let z = self.scaler.transform_row(raw)?;
        Ok(self.weights.iter().zip(&z).map(|(w, x)| w * x).sum::<f64>() + self.bias)
    }
}

/// Fits the scaler on `x_raw`, then the SVM on the standardized rows.
pub fn train_model(
    x_raw: &[Vec<f64>],
    y: &[BinaryLabel],
    c: f64,
    opts: &SvmOptions,
    fold_id: Option<String>,
    inner_cv_seed: Option<u64>,
) -> Result<TrainedModel, LearnerError> {
    let scaler = fit_scaler(x_raw)?;
    let z = scaler.transform(x_raw)?;
    let svm = train_linear_svm(&z, y, c, opts)?;
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        weights: svm.weights,
        bias: svm.bias,
        c_value: c,
        class_weighting: opts.class_weighting,
        scaler,
        training_meta: TrainingMeta {
            fold_id,
            iterations: svm.iterations,
            duality_gap: svm.duality_gap,
            inner_cv_seed,
        },
    })
}

/// Labels and decision values for raw rows; a decision of exactly 0 is high.
pub fn predict(model: &TrainedModel, x_raw: &[Vec<f64>]) -> Result<(Vec<BinaryLabel>, Vec<f64>), LearnerError> {
    let decisions = x_raw.iter().map(|r| model.decision(r)).collect::<Result<Vec<_>, _>>()?;
    Ok((
        decisions.iter().map(|&d| BinaryLabel::from_decision(d)).collect(),
        decisions,
    ))
}
