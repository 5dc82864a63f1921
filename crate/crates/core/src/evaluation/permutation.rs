use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{loso_run, EvaluationError, ExperimentConfig};
use crate::cohort::CohortDataset;

/// Chance band from label-permuted reruns of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationBand {
    /// Headline score of each permutation, in permutation order.
    pub scores: Vec<f64>,
    /// 2.5th percentile.
    pub lower: f64,
    /// 97.5th percentile.
    pub upper: f64,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

/// Reruns the LOSO experiment `n_perm` times with clinician ratings shuffled
/// across subjects. Permutation `i` uses a generator seeded with `seed + i`.
pub fn permutation_band(
    dataset: &CohortDataset,
    config: &ExperimentConfig,
    n_perm: usize,
    seed: u64,
) -> Result<PermutationBand, EvaluationError> {
    if n_perm == 0 {
        return Err(EvaluationError::InvalidConfig("need at least one permutation".into()));
    }
    let ratings: Vec<u8> = dataset.subjects().iter().map(|s| s.clinician_rating).collect();
    let scores = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let mut shuffled = ratings.clone();
            shuffled.shuffle(&mut rng);
            let records = dataset
                .subjects()
                .iter()
                .zip(shuffled)
                .map(|(s, r)| {
                    let mut s = s.clone();
                    s.clinician_rating = r;
                    s
                })
                .collect();
            let permuted = dataset.with_records(records)?;
            Ok(loso_run(&permuted, config)?.headline())
        })
        .collect::<Result<Vec<f64>, EvaluationError>>()?;
    let mut sorted = scores.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(PermutationBand {
        lower: percentile(&sorted, 0.025),
        upper: percentile(&sorted, 0.975),
        scores,
    })
}
