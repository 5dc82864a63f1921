use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::balanced_accuracy;
use super::svm::{Gram, SvmOptions, SvmProblem};
use super::{check_matrix, LearnerError};
use crate::cohort::BinaryLabel;

/// Candidate regularization constants, strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct CGrid(Vec<f64>);

impl CGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, LearnerError> {
        if values.is_empty() {
            return Err(LearnerError::InvalidGrid("empty".into()));
        }
        if values.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(LearnerError::InvalidGrid("values must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(LearnerError::InvalidGrid("values must be strictly decreasing".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn smallest(&self) -> f64 {
        *self.0.last().expect("non-empty grid")
    }
}

impl Default for CGrid {
    /// `1, 1e-1, ..., 1e-7`.
    fn default() -> Self {
        Self((0..8).map(|e| 10f64.powi(-e)).collect())
    }
}

impl TryFrom<Vec<f64>> for CGrid {
    type Error = LearnerError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<CGrid> for Vec<f64> {
    fn from(g: CGrid) -> Self {
        g.0
    }
}

/// Outcome of the inner cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CSelection {
    pub c: f64,
    /// Mean inner balanced accuracy per grid value, in grid order.
    pub scores: Vec<(f64, f64)>,
    pub k_used: usize,
    /// True when cross-validation was impossible and the smallest c was taken.
    pub fallback: bool,
}

/// Assigns each group to one of `k` folds, stratified by the group's class.
/// Groups of each class are shuffled with `seed` and dealt round-robin.
pub fn stratified_group_folds(groups: &[(String, BinaryLabel)], k: usize, seed: u64) -> BTreeMap<String, usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    let mut offset = 0;
    for class in [BinaryLabel::Low, BinaryLabel::High] {
        let mut members: Vec<&String> = groups.iter().filter(|g| g.1 == class).map(|g| &g.0).collect();
        members.sort();
        members.dedup();
        members.shuffle(&mut rng);
        for (i, g) in members.iter().enumerate() {
            out.insert((*g).clone(), (offset + i) % k);
        }
        offset += members.len();
    }
    out
}

/// Picks c by stratified, subject-grouped k-fold cross-validation.
///
/// `groups[i]` names the subject of row `i`. `k` shrinks to the smallest
/// per-class subject count (never below 2); with fewer than two subjects in
/// a class the smallest grid value is returned with `fallback = true`.
/// Ties go to the smaller c.
pub fn select_c(
    x: &[Vec<f64>],
    y: &[BinaryLabel],
    groups: &[String],
    grid: &CGrid,
    k: usize,
    seed: u64,
    opts: &SvmOptions,
) -> Result<CSelection, LearnerError> {
    if x.len() != y.len() || groups.len() != y.len() {
        return Err(LearnerError::LengthMismatch(y.len(), x.len()));
    }
    check_matrix(x)?;
    let gram = Gram::new(x);
    let rows: Vec<usize> = (0..x.len()).collect();
    select_c_with_gram(&gram, &rows, y, groups, grid, k, seed, opts)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn select_c_with_gram(
    gram: &Gram,
    rows: &[usize],
    y: &[BinaryLabel],
    groups: &[String],
    grid: &CGrid,
    k: usize,
    seed: u64,
    opts: &SvmOptions,
) -> Result<CSelection, LearnerError> {
    if !(y.contains(&BinaryLabel::High) && y.contains(&BinaryLabel::Low)) {
        return Err(LearnerError::SingleClassTraining);
    }
    if grid.values().len() == 1 {
        return Ok(CSelection {
            c: grid.values()[0],
            scores: Vec::new(),
            k_used: 0,
            fallback: false,
        });
    }
    let mut group_labels: BTreeMap<&str, BinaryLabel> = BTreeMap::new();
    for (g, &l) in groups.iter().zip(y) {
        group_labels.entry(g.as_str()).or_insert(l);
    }
    let per_class = |c: BinaryLabel| group_labels.values().filter(|&&l| l == c).count();
    let smallest = per_class(BinaryLabel::Low).min(per_class(BinaryLabel::High));
    if smallest < 2 {
        log::warn!("inner CV impossible ({smallest} subject(s) in a class); using smallest c");
        return Ok(CSelection {
            c: grid.smallest(),
            scores: Vec::new(),
            k_used: 0,
            fallback: true,
        });
    }
    let k_used = k.min(smallest).max(2);
    if k_used < k {
        log::warn!("inner CV reduced from {k} to {k_used} folds");
    }
    let pairs: Vec<(String, BinaryLabel)> = group_labels.iter().map(|(g, l)| (g.to_string(), *l)).collect();
    let fold_of = stratified_group_folds(&pairs, k_used, seed);
    let row_fold: Vec<usize> = groups.iter().map(|g| fold_of[g]).collect();

    // Each fold walks the grid from the smallest c up, warm-starting every
    // solve from the previous solution.
    let mut totals = vec![0.0; grid.values().len()];
    for f in 0..k_used {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&i| row_fold[i] != f);
        let train_y: Vec<BinaryLabel> = train.iter().map(|&i| y[i]).collect();
        let problem = SvmProblem::new(gram, train.iter().map(|&i| rows[i]).collect(), &train_y)?;
        let truth: Vec<BinaryLabel> = test.iter().map(|&i| y[i]).collect();
        let mut prev: Option<Vec<f64>> = None;
        for (g, &c) in grid.values().iter().enumerate().rev() {
            let sol = problem.solve_from(c, opts, prev.as_deref());
            let pred: Vec<BinaryLabel> = test
                .iter()
                .map(|&i| BinaryLabel::from_decision(problem.decision(&sol, rows[i])))
                .collect();
            totals[g] += balanced_accuracy(&truth, &pred)?;
            prev = Some(sol.alpha);
        }
    }
    let scores: Vec<(f64, f64)> = grid
        .values()
        .iter()
        .zip(&totals)
        .map(|(&c, t)| (c, t / k_used as f64))
        .collect();
    // Grid is decreasing, so a later equal score is a smaller c.
    let mut best = scores[0];
    for &s in &scores[1..] {
        if s.1 >= best.1 - 1e-12 {
            best = s;
        }
    }
    Ok(CSelection {
        c: best.0,
        scores,
        k_used,
        fallback: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::svm::tests::blobs;
    use BinaryLabel::{High as H, Low as L};

    #[test]
    fn grid_rules() {
        assert_eq!(
            CGrid::default().values(),
            &[1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
        );
        assert!(CGrid::new(vec![]).is_err());
        assert!(CGrid::new(vec![1.0, 1.0]).is_err());
        assert!(CGrid::new(vec![0.1, 1.0]).is_err());
        assert!(CGrid::new(vec![1.0, -1.0]).is_err());
        let json = serde_json::to_string(&CGrid::default()).unwrap();
        assert_eq!(serde_json::from_str::<CGrid>(&json).unwrap(), CGrid::default());
        assert!(serde_json::from_str::<CGrid>("[1, 2]").is_err());
    }

    #[test]
    fn singleton_grid_skips_cv() {
        let (x, y) = blobs(1, 4);
        let groups: Vec<String> = (0..8).map(|i| format!("g{i}")).collect();
        let s = select_c(
            &x,
            &y,
            &groups,
            &CGrid::new(vec![1.0]).unwrap(),
            5,
            0,
            &SvmOptions::default(),
        )
        .unwrap();
        assert_eq!(s.c, 1.0);
        assert!(s.scores.is_empty());
    }

    #[test]
    fn ties_pick_smallest_c() {
        let (x, y) = blobs(2, 10);
        let groups: Vec<String> = (0..20).map(|i| format!("g{i}")).collect();
        let grid = CGrid::new(vec![1.0, 0.1, 0.01]).unwrap();
        let s = select_c(&x, &y, &groups, &grid, 5, 3, &SvmOptions::default()).unwrap();
        assert!(s.scores.iter().all(|&(_, ba)| ba == 1.0));
        assert_eq!(s.c, 0.01);
    }

    #[test]
    fn separable_blobs_reach_perfect_inner_score() {
        let (x, y) = blobs(4, 15);
        let groups: Vec<String> = (0..30).map(|i| format!("g{}", i / 3)).collect();
        let s = select_c(&x, &y, &groups, &CGrid::default(), 5, 9, &SvmOptions::default()).unwrap();
        let chosen = s.scores.iter().find(|p| p.0 == s.c).unwrap();
        assert_eq!(chosen.1, 1.0);
        assert_eq!(s.k_used, 5);
    }

    #[test]
    fn folds_are_grouped_and_stratified() {
        let groups: Vec<(String, BinaryLabel)> = (0..12)
            .map(|i| (format!("s{i:02}"), if i < 5 { H } else { L }))
            .collect();
        let folds = stratified_group_folds(&groups, 5, 42);
        assert_eq!(folds.len(), 12);
        for f in 0..5 {
            let highs = groups.iter().filter(|g| g.1 == H && folds[&g.0] == f).count();
            assert_eq!(highs, 1);
        }
        assert_eq!(folds, stratified_group_folds(&groups, 5, 42));
    }

    #[test]
    fn k_shrinks_and_falls_back() {
        let (x, y) = blobs(5, 6);
        // 3 high subjects, 3 low subjects with 2 rows each.
        let groups: Vec<String> = (0..12).map(|i| format!("g{}", i / 2)).collect();
        let s = select_c(&x, &y, &groups, &CGrid::default(), 5, 0, &SvmOptions::default()).unwrap();
        assert_eq!(s.k_used, 3);
        let lone: Vec<String> = (0..12)
            .map(|i| if i < 6 { "h".to_string() } else { format!("l{i}") })
            .collect();
        let s = select_c(&x, &y, &lone, &CGrid::default(), 5, 0, &SvmOptions::default()).unwrap();
        assert!(s.fallback);
        assert_eq!(s.c, 1e-7);
        assert!(matches!(
            select_c(
                &x[..2],
                &[H, H],
                &lone[..2],
                &CGrid::default(),
                5,
                0,
                &SvmOptions::default()
            ),
            Err(LearnerError::SingleClassTraining)
        ));
    }
}
