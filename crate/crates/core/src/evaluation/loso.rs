use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use super::{
    EvaluationError, ExperimentConfig, ExperimentReport, FoldOutcome, SegmentPrediction, SkippedFold, SpeechScope,
};
use crate::cohort::{metadata_columns, BinaryLabel, CohortDataset, SubjectRecord};
use crate::learner::{
    balanced_accuracy, fit_scaler, select_c_with_gram, CSelection, Gram, ScalerParams, SvmOptions, SvmProblem,
};

/// Majority vote over segment labels; ties go to the sign of the mean
/// decision value, with a mean of exactly 0 counted as high.
pub fn aggregate_subject(per_segment: &[(f64, BinaryLabel)]) -> Result<BinaryLabel, EvaluationError> {
    if per_segment.is_empty() {
        return Err(EvaluationError::EmptyPredictionList);
    }
    let highs = per_segment.iter().filter(|p| p.1 == BinaryLabel::High).count();
    let lows = per_segment.len() - highs;
    Ok(match highs.cmp(&lows) {
        std::cmp::Ordering::Greater => BinaryLabel::High,
        std::cmp::Ordering::Less => BinaryLabel::Low,
        std::cmp::Ordering::Equal => {
            let mean = per_segment.iter().map(|p| p.0).sum::<f64>() / per_segment.len() as f64;
            BinaryLabel::from_decision(mean)
        }
    })
}

/// Keeps segments of the scope's kinds; subjects left without segments are
/// dropped and returned by id.
pub fn speech_scope_filter(
    dataset: &CohortDataset,
    scope: SpeechScope,
) -> Result<(CohortDataset, Vec<String>), EvaluationError> {
    if scope == SpeechScope::All {
        let excluded: Vec<String> = dataset
            .subjects()
            .iter()
            .filter(|s| dataset.segments_of(&s.subject_id).next().is_none())
            .map(|s| s.subject_id.clone())
            .collect();
        for id in &excluded {
            log::warn!("subject {id} has no segments; excluded");
        }
        if dataset.segments().is_empty() {
            return Err(EvaluationError::EmptyScope(scope));
        }
        let keep: BTreeSet<&str> = excluded.iter().map(String::as_str).collect();
        return Ok((
            dataset.with_subjects(&|s| !keep.contains(s.subject_id.as_str())),
            excluded,
        ));
    }
    let scoped = dataset.with_segments(&|seg| scope.includes(seg.kind()));
    if scoped.segments().is_empty() {
        return Err(EvaluationError::EmptyScope(scope));
    }
    let present: BTreeSet<&str> = scoped.segments().iter().map(|s| s.subject_id()).collect();
    let excluded: Vec<String> = scoped
        .subjects()
        .iter()
        .filter(|s| !present.contains(s.subject_id.as_str()))
        .map(|s| s.subject_id.clone())
        .collect();
    for id in &excluded {
        log::warn!("subject {id} has no {scope} segments; excluded");
    }
    let present: BTreeSet<String> = present.into_iter().map(str::to_string).collect();
    Ok((scoped.with_subjects(&|s| present.contains(&s.subject_id)), excluded))
}

/// Preprocessing state of one outer fold, for leakage audits.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldTrace {
    pub held_out_subject: String,
    pub train_subjects: Vec<String>,
    pub scaler: ScalerParams,
    /// Value imputed for each metadata column (training-subject median).
    pub impute_values: Vec<f64>,
    pub selection: CSelection,
}

struct Row {
    subject: usize,
    segment_id: String,
    speech: Vec<f64>,
}

struct Prepared<'a> {
    subjects: Vec<&'a SubjectRecord>,
    labels: Vec<BinaryLabel>,
    /// Metadata columns per subject (missing values `None`).
    meta: Vec<Vec<Option<f64>>>,
    rows: Vec<Row>,
}

fn prepare<'a>(ds: &'a CohortDataset, config: &ExperimentConfig) -> Result<Prepared<'a>, EvaluationError> {
    let subjects: Vec<&SubjectRecord> = ds.subjects().iter().collect();
    let labels = subjects.iter().map(|s| s.label()).collect();
    let meta = subjects
        .iter()
        .map(|s| match config.metadata_level {
            Some(level) => metadata_columns(s, level).into_iter().map(|c| c.1).collect(),
            None => Vec::new(),
        })
        .collect();
    let rows = match config.feature_source.dataset_key() {
        None => subjects
            .iter()
            .enumerate()
            .map(|(i, s)| Row {
                subject: i,
                segment_id: s.subject_id.clone(),
                speech: Vec::new(),
            })
            .collect(),
        Some(key) => {
            let mut rows = Vec::with_capacity(ds.segments().len());
            for (i, s) in subjects.iter().enumerate() {
                for seg in ds.segments_of(&s.subject_id) {
                    let v = seg.features.get(&key).ok_or_else(|| EvaluationError::MissingFeatures {
                        source_name: key.clone(),
                        segment_id: seg.segment_id().to_string(),
                    })?;
                    rows.push(Row {
                        subject: i,
                        segment_id: seg.segment_id().to_string(),
                        speech: v.values().to_vec(),
                    });
                }
            }
            rows
        }
    };
    Ok(Prepared {
        subjects,
        labels,
        meta,
        rows,
    })
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

enum FoldResult {
    Done(Box<(FoldOutcome, FoldTrace)>),
    Skipped(SkippedFold),
}

fn run_fold(
    p: &Prepared,
    held: usize,
    config: &ExperimentConfig,
    opts: &SvmOptions,
) -> Result<FoldResult, EvaluationError> {
    let held_id = p.subjects[held].subject_id.clone();
    let train_subjects: Vec<usize> = (0..p.subjects.len()).filter(|&s| s != held).collect();
    let has = |c: BinaryLabel| train_subjects.iter().any(|&s| p.labels[s] == c);
    if !(has(BinaryLabel::High) && has(BinaryLabel::Low)) {
        log::warn!("fold {held_id}: training partition lost a class; fold skipped");
        return Ok(FoldResult::Skipped(SkippedFold {
            held_out_subject: held_id,
            reason: "training partition holds a single class".into(),
        }));
    }
    let n_meta = p.meta.first().map_or(0, Vec::len);
    let impute_values: Vec<f64> = (0..n_meta)
        .map(|j| {
            let vals: Vec<f64> = train_subjects.iter().filter_map(|&s| p.meta[s][j]).collect();
            median(vals).unwrap_or_else(|| {
                log::warn!("fold {held_id}: metadata column {j} missing for every training subject; imputing 0");
                0.0
            })
        })
        .collect();
    let full_row = |r: &Row| -> Vec<f64> {
        let mut x = r.speech.clone();
        x.extend(
            p.meta[r.subject]
                .iter()
                .zip(&impute_values)
                .map(|(v, m)| v.unwrap_or(*m)),
        );
        x
    };
    let (train_rows, test_rows): (Vec<&Row>, Vec<&Row>) = p.rows.iter().partition(|r| r.subject != held);
    let x_train: Vec<Vec<f64>> = train_rows.iter().map(|r| full_row(r)).collect();
    let y_train: Vec<BinaryLabel> = train_rows.iter().map(|r| p.labels[r.subject]).collect();
    let groups: Vec<String> = train_rows
        .iter()
        .map(|r| p.subjects[r.subject].subject_id.clone())
        .collect();
    let scaler = fit_scaler(&x_train)?;
    let z_train = scaler.transform(&x_train)?;
    let gram = Gram::new(&z_train);
    let all: Vec<usize> = (0..z_train.len()).collect();
    let selection = select_c_with_gram(
        &gram,
        &all,
        &y_train,
        &groups,
        &config.c_grid,
        config.inner_folds,
        config.seed,
        opts,
    )?;
    let problem = SvmProblem::new(&gram, all, &y_train)?;
    let sol = problem.solve(selection.c, opts);
    let w = problem.weights(&sol, &z_train);
    let per_segment = test_rows
        .iter()
        .map(|r| {
            let z = scaler.transform_row(&full_row(r))?;
            let decision = w.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() + sol.bias;
            Ok(SegmentPrediction {
                segment_id: r.segment_id.clone(),
                decision,
                predicted: BinaryLabel::from_decision(decision),
            })
        })
        .collect::<Result<Vec<_>, EvaluationError>>()?;
    let votes: Vec<(f64, BinaryLabel)> = per_segment.iter().map(|s| (s.decision, s.predicted)).collect();
    let subject_pred = aggregate_subject(&votes)?;
    let trace = FoldTrace {
        held_out_subject: held_id.clone(),
        train_subjects: train_subjects
            .iter()
            .map(|&s| p.subjects[s].subject_id.clone())
            .collect(),
        scaler,
        impute_values,
        selection: selection.clone(),
    };
    Ok(FoldResult::Done(Box::new((
        FoldOutcome {
            held_out_subject: held_id,
            chosen_c: selection.c,
            c_selection: selection,
            per_segment,
            subject_pred,
            subject_true: p.labels[held],
        },
        trace,
    ))))
}

pub fn loso_run(dataset: &CohortDataset, config: &ExperimentConfig) -> Result<ExperimentReport, EvaluationError> {
    loso_run_with_trace(dataset, config).map(|r| r.0)
}

/// LOSO evaluation that also returns per-fold preprocessing traces.
///
/// Each fold holds out every in-scope segment of one subject, imputes
/// missing metadata with training-subject medians, fits the scaler on the
/// training rows, picks c by inner cross-validation, trains, predicts and
/// aggregates. Folds run in parallel; results keep subject order.
pub fn loso_run_with_trace(
    dataset: &CohortDataset,
    config: &ExperimentConfig,
) -> Result<(ExperimentReport, Vec<FoldTrace>), EvaluationError> {
    let start = Instant::now();
    config.validate()?;
    let (scoped, excluded_subjects) = speech_scope_filter(dataset, config.speech_scope)?;
    let n = scoped.subjects().len();
    if n < 3 {
        return Err(EvaluationError::TooFewSubjects(n));
    }
    let labels: BTreeSet<BinaryLabel> = scoped.subjects().iter().map(|s| s.label()).collect();
    if labels.len() < 2 {
        return Err(EvaluationError::SingleClassCohort);
    }
    let p = prepare(&scoped, config)?;
    let feature_dim = p.rows.first().map_or(0, |r| r.speech.len()) + p.meta.first().map_or(0, Vec::len);
    if feature_dim == 0 {
        return Err(EvaluationError::InvalidConfig("no features selected".into()));
    }
    let opts = SvmOptions {
        class_weighting: config.class_weighting,
        ..SvmOptions::default()
    };
    let results: Vec<FoldResult> = (0..n)
        .into_par_iter()
        .map(|held| run_fold(&p, held, config, &opts))
        .collect::<Result<_, _>>()?;
    let mut folds = Vec::new();
    let mut traces = Vec::new();
    let mut skipped_folds = Vec::new();
    for r in results {
        match r {
            FoldResult::Done(done) => {
                let (f, t) = *done;
                folds.push(f);
                traces.push(t);
            }
            FoldResult::Skipped(s) => skipped_folds.push(s),
        }
    }
    let (seg_true, seg_pred): (Vec<BinaryLabel>, Vec<BinaryLabel>) = folds
        .iter()
        .flat_map(|f| f.per_segment.iter().map(move |s| (f.subject_true, s.predicted)))
        .unzip();
    let subj_true: Vec<BinaryLabel> = folds.iter().map(|f| f.subject_true).collect();
    let subj_pred: Vec<BinaryLabel> = folds.iter().map(|f| f.subject_pred).collect();
    let report = ExperimentReport {
        config: config.clone(),
        config_hash: config.hash(),
        n_subjects: n,
        feature_dim,
        excluded_subjects,
        balanced_accuracy_segment: balanced_accuracy(&seg_true, &seg_pred)?,
        balanced_accuracy_subject: balanced_accuracy(&subj_true, &subj_pred)?,
        folds,
        skipped_folds,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    Ok((report, traces))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::cohort::{CohortSegment, MetadataLadderLevel};
    use crate::evaluation::FeatureSource;
    use crate::features::FeatureVector;
    use crate::learner::CGrid;
    use crate::segment::{SegmentKind, SegmentRecord, SegmentSpan, Vowel};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use BinaryLabel::{High as H, Low as L};

    /// `n` subjects alternating high/low, each with `per` text and `per`
    /// vowel segments. Feature 0 carries `signal * sign(label)` plus noise.
    pub(crate) fn toy_cohort(n: usize, per: usize, signal: f64, seed: u64) -> CohortDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut subjects = Vec::new();
        let mut segments = Vec::new();
        for i in 0..n {
            let id = format!("s{i:02}");
            let rating = if i % 2 == 0 { 6 } else { 2 };
            let mut rec = SubjectRecord::bare(&id, rating);
            rec.age = Some(20.0 + rng.gen_range(0.0..40.0));
            rec.gender = Some(if rng.gen_bool(0.5) {
                crate::cohort::Gender::Female
            } else {
                crate::cohort::Gender::Male
            });
            rec.height_cm = Some(rng.gen_range(150.0..195.0));
            rec.weight_kg = Some(rng.gen_range(50.0..100.0));
            rec.suicide_attempt_history = Some(rating >= 5);
            subjects.push(rec);
            let sign = if rating >= 5 { 1.0 } else { -1.0 };
            for k in 0..2 * per {
                let span = if k < per {
                    SegmentSpan::new(k as f64, k as f64 + 0.5, SegmentKind::NeutralText)
                } else {
                    SegmentSpan::vowel(k as f64, k as f64 + 0.3, Vowel::ALL[k % 5])
                };
                let values = vec![
                    signal * sign + rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                ];
                segments.push(CohortSegment {
                    record: SegmentRecord {
                        subject_id: id.clone(),
                        recording_id: "r".into(),
                        segment_id: format!("{id}_{k:03}"),
                        span,
                    },
                    features: [(
                        "compact_functionals".to_string(),
                        FeatureVector::new(vec!["a".into(), "b".into(), "c".into()], values).unwrap(),
                    )]
                    .into(),
                });
            }
        }
        CohortDataset::new(subjects, segments).unwrap()
    }

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            c_grid: CGrid::new(vec![1.0, 1e-2, 1e-4]).unwrap(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn aggregation_rules() {
        assert_eq!(aggregate_subject(&[(1.0, H), (0.5, H), (-0.2, L)]).unwrap(), H);
        assert_eq!(aggregate_subject(&[(1.0, H), (-0.7, L)]).unwrap(), H);
        assert_eq!(aggregate_subject(&[(0.2, H), (-0.7, L)]).unwrap(), L);
        assert_eq!(aggregate_subject(&[(0.5, H), (-0.5, L)]).unwrap(), H);
        assert_eq!(aggregate_subject(&[(-0.1, L)]).unwrap(), L);
        assert!(matches!(
            aggregate_subject(&[]),
            Err(EvaluationError::EmptyPredictionList)
        ));
    }

    #[test]
    fn separable_cohort_is_perfect() {
        let ds = toy_cohort(4, 3, 5.0, 1);
        let r = loso_run(&ds, &cfg()).unwrap();
        assert_eq!(r.folds.len(), 4);
        assert_eq!(r.balanced_accuracy_segment, 1.0);
        assert_eq!(r.balanced_accuracy_subject, 1.0);
    }

    #[test]
    fn fold_count_and_coverage() {
        let ds = toy_cohort(7, 2, 1.0, 2);
        let r = loso_run(&ds, &cfg()).unwrap();
        assert_eq!(r.folds.len() + r.skipped_folds.len(), 7);
        for f in &r.folds {
            let want: Vec<&str> = ds.segments_of(&f.held_out_subject).map(|s| s.segment_id()).collect();
            let got: Vec<&str> = f.per_segment.iter().map(|s| s.segment_id.as_str()).collect();
            assert_eq!(got, want);
        }
    }

    #[test]
    fn scope_filter() {
        let ds = toy_cohort(4, 5, 1.0, 3);
        let (v, excluded) = speech_scope_filter(&ds, SpeechScope::Vowels).unwrap();
        assert!(excluded.is_empty());
        for s in v.subjects() {
            assert_eq!(v.segments_of(&s.subject_id).count(), 5);
        }
        let (all, _) = speech_scope_filter(&ds, SpeechScope::All).unwrap();
        assert_eq!(all, ds);
        assert!(matches!(
            speech_scope_filter(&ds, SpeechScope::PictureDescription),
            Err(EvaluationError::EmptyScope(_))
        ));
        let no_vowels = ds.with_segments(&|s| !(s.subject_id() == "s01" && s.kind() == SegmentKind::Vowel));
        let (v, excluded) = speech_scope_filter(&no_vowels, SpeechScope::Vowels).unwrap();
        assert_eq!(excluded, vec!["s01".to_string()]);
        assert_eq!(v.subjects().len(), 3);
    }

    #[test]
    fn metadata_only_uses_one_row_per_subject() {
        let ds = toy_cohort(12, 2, 0.0, 4);
        let c = ExperimentConfig {
            feature_source: FeatureSource::MetadataOnly,
            metadata_level: MetadataLadderLevel::new(2),
            ..cfg()
        };
        let r = loso_run(&ds, &c).unwrap();
        assert!(r.folds.iter().all(|f| f.per_segment.len() == 1));
        assert_eq!(r.balanced_accuracy_subject, 1.0);
        assert_eq!(r.feature_dim, 7);
    }

    #[test]
    fn too_few_and_single_class() {
        let ds = toy_cohort(2, 2, 1.0, 5);
        assert!(matches!(loso_run(&ds, &cfg()), Err(EvaluationError::TooFewSubjects(2))));
        let ds = toy_cohort(5, 2, 1.0, 5);
        let highs = ds.with_subjects(&|s| s.label() == H);
        assert!(matches!(
            loso_run(&highs, &cfg()),
            Err(EvaluationError::SingleClassCohort)
        ));
    }

    #[test]
    fn lone_high_subject_fold_is_skipped() {
        let ds = toy_cohort(6, 2, 2.0, 6);
        let keep_one_high = ds.with_subjects(&|s| s.label() == L || s.subject_id == "s00");
        let p = prepare(&keep_one_high, &cfg()).unwrap();
        let r = run_fold(&p, 0, &cfg(), &SvmOptions::default()).unwrap();
        assert!(matches!(r, FoldResult::Skipped(ref s) if s.held_out_subject == "s00"));
        // Every remaining fold is low, so the metric is undefined.
        assert!(matches!(
            loso_run(&keep_one_high, &cfg()),
            Err(EvaluationError::Learner(crate::learner::LearnerError::MissingClass(H)))
        ));
    }

    #[test]
    fn missing_source_is_reported() {
        let ds = toy_cohort(4, 1, 1.0, 7);
        let c = ExperimentConfig {
            feature_source: FeatureSource::Embedding("w2v".into()),
            ..cfg()
        };
        assert!(matches!(
            loso_run(&ds, &c),
            Err(EvaluationError::MissingFeatures { .. })
        ));
    }

    /// Independent recomputation of a fold's preprocessing from training rows.
    fn recompute(ds: &CohortDataset, trace: &FoldTrace, level: MetadataLadderLevel) -> (Vec<f64>, ScalerParams) {
        let train: Vec<&SubjectRecord> = trace.train_subjects.iter().map(|id| ds.subject(id).unwrap()).collect();
        let cols: Vec<Vec<Option<f64>>> = train
            .iter()
            .map(|s| metadata_columns(s, level).into_iter().map(|c| c.1).collect())
            .collect();
        let medians: Vec<f64> = (0..level.dim())
            .map(|j| median(cols.iter().filter_map(|c| c[j]).collect()).unwrap_or(0.0))
            .collect();
        let mut rows = Vec::new();
        for (s, c) in train.iter().zip(&cols) {
            for seg in ds.segments_of(&s.subject_id) {
                let mut r = seg.features["compact_functionals"].values().to_vec();
                r.extend(c.iter().zip(&medians).map(|(v, m)| v.unwrap_or(*m)));
                rows.push(r);
            }
        }
        (medians, fit_scaler(&rows).unwrap())
    }

    #[test]
    fn preprocessing_uses_training_rows_only() {
        let level = MetadataLadderLevel::new(4).unwrap();
        let mut ds = toy_cohort(8, 2, 1.0, 30);
        let mut records = ds.subjects().to_vec();
        records[2].age = None;
        records[5].hopelessness = None;
        records[6].height_cm = None;
        ds = ds.with_records(records).unwrap();
        let c = ExperimentConfig {
            metadata_level: Some(level),
            ..cfg()
        };
        let (report, traces) = loso_run_with_trace(&ds, &c).unwrap();
        assert_eq!(traces.len(), report.folds.len());
        for t in &traces {
            let (medians, scaler) = recompute(&ds, t, level);
            assert_eq!(t.impute_values, medians);
            assert_eq!(t.scaler, scaler);
            assert!(!t.train_subjects.contains(&t.held_out_subject));
        }
        // Perturbing the held-out subject leaves its fold's preprocessing alone.
        let target = "s03";
        let mut records = ds.subjects().to_vec();
        records[3].age = Some(1e6);
        records[3].hopelessness = None;
        let perturbed = CohortDataset::new(
            records,
            ds.segments()
                .iter()
                .cloned()
                .map(|mut s| {
                    if s.subject_id() == target {
                        let v = &s.features["compact_functionals"];
                        let moved =
                            FeatureVector::new(v.names().to_vec(), v.values().iter().map(|x| x * 50.0 - 3.0).collect());
                        s.features.insert("compact_functionals".into(), moved.unwrap());
                    }
                    s
                })
                .collect(),
        )
        .unwrap();
        let (_, traces2) = loso_run_with_trace(&perturbed, &c).unwrap();
        let a = traces.iter().find(|t| t.held_out_subject == target).unwrap();
        let b = traces2.iter().find(|t| t.held_out_subject == target).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pooled_metric_matches_fold_traces() {
        let ds = toy_cohort(9, 3, 0.7, 31);
        let r = loso_run(&ds, &cfg()).unwrap();
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for f in &r.folds {
            for s in &f.per_segment {
                truth.push(ds.label_of(&f.held_out_subject).unwrap());
                pred.push(BinaryLabel::from_decision(s.decision));
            }
        }
        assert_eq!(balanced_accuracy(&truth, &pred).unwrap(), r.balanced_accuracy_segment);
    }

    #[test]
    fn reports_are_byte_identical() {
        let ds = toy_cohort(7, 2, 0.5, 32);
        let a = loso_run(&ds, &cfg()).unwrap().to_json();
        let b = loso_run(&ds, &cfg()).unwrap().to_json();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = single.install(|| loso_run(&ds, &cfg()).unwrap().to_json());
        assert_eq!(a, c);
        assert_eq!(ExperimentReport::from_json(&a).unwrap().to_json(), a);
    }
}
