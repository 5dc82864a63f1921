use serde::{Deserialize, Serialize};

use super::{check_matrix, LearnerError};

/// Standard deviations below this are treated as 1.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-dimension mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub fn fit_scaler(x: &[Vec<f64>]) -> Result<ScalerParams, LearnerError> {
    if x.len() < 2 {
        return Err(LearnerError::TooFewRows {
            needed: 2,
            got: x.len(),
        });
    }
    let d = check_matrix(x)?;
    let n = x.len() as f64;
    let mut means = vec![0.0; d];
    for r in x {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = vec![0.0; d];
    for r in x {
        for ((s, v), m) in vars.iter_mut().zip(r).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    let stds = vars
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd < STD_FLOOR {
                1.0
            } else {
                sd
            }
        })
        .collect();
    Ok(ScalerParams { means, stds })
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.means.len()
    }

    fn check(&self, row: &[f64]) -> Result<(), LearnerError> {
        if row.len() != self.dim() {
            return Err(LearnerError::DimensionMismatch {
                expected: self.dim(),
                got: row.len(),
            });
        }
        Ok(())
    }

    pub fn transform_row(&self, row: &[f64]) -> Result<Vec<f64>, LearnerError> {
        self.check(row)?;
        Ok(row
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, LearnerError> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }

    pub fn inverse_row(&self, row: &[f64]) -> Result<Vec<f64>, LearnerError> {
        self.check(row)?;
        Ok(row
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((v, m), s)| v * s + m)
            .collect())
    }
}
