use super::LearnerError;
use crate::cohort::BinaryLabel;

/// Mean over the two classes of per-class recall.
pub fn balanced_accuracy(y_true: &[BinaryLabel], y_pred: &[BinaryLabel]) -> Result<f64, LearnerError> {
    if y_true.len() != y_pred.len() {
        return Err(LearnerError::LengthMismatch(y_pred.len(), y_true.len()));
    }
    let mut recalls = [0.0; 2];
    for (slot, class) in [BinaryLabel::Low, BinaryLabel::High].into_iter().enumerate() {
        let (mut total, mut hit) = (0usize, 0usize);
        for (t, p) in y_true.iter().zip(y_pred) {
            if *t == class {
                total += 1;
                hit += usize::from(p == t);
            }
        }
        if total == 0 {
            return Err(LearnerError::MissingClass(class));
        }
        recalls[slot] = hit as f64 / total as f64;
    }
    Ok((recalls[0] + recalls[1]) / 2.0)
}
