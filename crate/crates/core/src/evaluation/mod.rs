//! Leave-one-subject-out evaluation, subject aggregation, the metadata
//! ablation ladder and table rendering.

mod ablation;
mod loso;
mod permutation;
mod tables;

pub use ablation::{ablation_ladder, AblationCell, AblationColumn, AblationResult};
pub use loso::{aggregate_subject, loso_run, loso_run_with_trace, speech_scope_filter, FoldTrace};
pub use permutation::{permutation_band, PermutationBand};
pub use tables::{SpeechTable, Table2};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::cohort::{embedding_source, BinaryLabel, CohortError, MetadataLadderLevel};
use crate::features::AcousticSource;
use crate::learner::{CGrid, CSelection, LearnerError};
use crate::segment::SegmentKind;
use crate::table::TableError;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("LOSO needs at least 3 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("cohort holds a single class")]
    SingleClassCohort,
    #[error("no segments in scope `{0}`")]
    EmptyScope(SpeechScope),
    #[error("no predictions to aggregate")]
    EmptyPredictionList,
    #[error("segment `{segment_id}` lacks features from source `{source_name}`")]
    MissingFeatures { source_name: String, segment_id: String },
    #[error("invalid experiment configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Cohort(#[from] CohortError),
    #[error(transparent)]
    Table(#[from] TableError),
}

/// Where the per-row speech features come from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureSource {
    /// No speech features: one metadata row per subject.
    MetadataOnly,
    Acoustic(AcousticSource),
    Embedding(String),
}

impl FeatureSource {
    /// Key of the source in a cohort segment's feature map.
    pub fn dataset_key(&self) -> Option<String> {
        match self {
            FeatureSource::MetadataOnly => None,
            FeatureSource::Acoustic(a) => Some(a.as_str().to_string()),
            FeatureSource::Embedding(m) => Some(embedding_source(m)),
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSource::MetadataOnly => f.write_str("metadata_only"),
            FeatureSource::Acoustic(a) => f.write_str(a.as_str()),
            FeatureSource::Embedding(m) => write!(f, "embedding:{m}"),
        }
    }
}

impl FromStr for FeatureSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "metadata_only" {
            return Ok(FeatureSource::MetadataOnly);
        }
        if let Some(m) = s.strip_prefix("embedding:") {
            if m.is_empty() {
                return Err("embedding source needs a model id".into());
            }
            return Ok(FeatureSource::Embedding(m.to_string()));
        }
        s.parse::<AcousticSource>()
            .map(FeatureSource::Acoustic)
            .map_err(|_| format!("unknown feature source `{s}`"))
    }
}

impl Serialize for FeatureSource {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureSource {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeechScope {
    All,
    PictureDescription,
    NeutralText,
    Vowels,
}

impl SpeechScope {
    pub const ALL: [SpeechScope; 4] = [
        SpeechScope::All,
        SpeechScope::PictureDescription,
        SpeechScope::NeutralText,
        SpeechScope::Vowels,
    ];

    pub fn includes(self, kind: SegmentKind) -> bool {
        match self {
            SpeechScope::All => true,
            SpeechScope::PictureDescription => kind == SegmentKind::PictureDescription,
            SpeechScope::NeutralText => kind == SegmentKind::NeutralText,
            SpeechScope::Vowels => kind == SegmentKind::Vowel,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpeechScope::All => "all",
            SpeechScope::PictureDescription => "picture_description",
            SpeechScope::NeutralText => "neutral_text",
            SpeechScope::Vowels => "vowels",
        }
    }

    pub fn column_label(self) -> &'static str {
        match self {
            SpeechScope::All => "All Speech",
            SpeechScope::PictureDescription => "Pic. Desc.",
            SpeechScope::NeutralText => "Neut. Texts",
            SpeechScope::Vowels => "Vowels",
        }
    }
}

impl fmt::Display for SpeechScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpeechScope {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown speech scope `{s}`"))
    }
}

/// Granularity used when a single number is reported (tables).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Segment,
    SubjectMajority,
}

impl FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "segment" => Ok(Aggregation::Segment),
            "subject_majority" | "subject" => Ok(Aggregation::SubjectMajority),
            _ => Err(format!("unknown aggregation `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub feature_source: FeatureSource,
    pub speech_scope: SpeechScope,
    pub metadata_level: Option<MetadataLadderLevel>,
    pub c_grid: CGrid,
    /// Seed of the inner cross-validation fold assignment.
    pub seed: u64,
    pub inner_folds: usize,
    pub aggregation: Aggregation,
    pub class_weighting: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            feature_source: FeatureSource::Acoustic(AcousticSource::CompactFunctionals),
            speech_scope: SpeechScope::All,
            metadata_level: None,
            c_grid: CGrid::default(),
            seed: 0,
            inner_folds: 5,
            aggregation: Aggregation::SubjectMajority,
            class_weighting: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), EvaluationError> {
        if self.feature_source == FeatureSource::MetadataOnly && self.metadata_level.is_none() {
            return Err(EvaluationError::InvalidConfig(
                "metadata_only needs a metadata level".into(),
            ));
        }
        if self.inner_folds < 2 {
            return Err(EvaluationError::InvalidConfig("inner_folds must be at least 2".into()));
        }
        Ok(())
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))[..12].to_string()
    }

    /// Short file-name stem, e.g. `compact_functionals-vowels-F2-<hash>`.
    pub fn file_stem(&self) -> String {
        let level = self.metadata_level.map_or("none".to_string(), |l| l.to_string());
        let source = self.feature_source.to_string().replace(':', "_");
        format!("{source}-{}-{level}-{}", self.speech_scope, self.hash())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentPrediction {
    pub segment_id: String,
    pub decision: f64,
    pub predicted: BinaryLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub held_out_subject: String,
    pub chosen_c: f64,
    pub c_selection: CSelection,
    pub per_segment: Vec<SegmentPrediction>,
    pub subject_pred: BinaryLabel,
    pub subject_true: BinaryLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub held_out_subject: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub n_subjects: usize,
    pub feature_dim: usize,
    pub excluded_subjects: Vec<String>,
    pub folds: Vec<FoldOutcome>,
    pub skipped_folds: Vec<SkippedFold>,
    pub balanced_accuracy_segment: f64,
    pub balanced_accuracy_subject: f64,
    /// Wall-clock time; kept out of the serialized report so that reports
    /// are byte-identical across runs.
    #[serde(skip)]
    pub runtime_s: f64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// The metric selected by the configured aggregation.
    pub fn headline(&self) -> f64 {
        match self.config.aggregation {
            Aggregation::Segment => self.balanced_accuracy_segment,
            Aggregation::SubjectMajority => self.balanced_accuracy_subject,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn source_and_scope_names() {
        for s in [
            "metadata_only",
            "compact_functionals",
            "extended_functionals",
            "melspec_summary",
            "embedding:w2v-large",
        ] {
            assert_eq!(s.parse::<FeatureSource>().unwrap().to_string(), s);
        }
        assert!("embedding:".parse::<FeatureSource>().is_err());
        assert!("mfcc".parse::<FeatureSource>().is_err());
        for s in SpeechScope::ALL {
            assert_eq!(s.as_str().parse::<SpeechScope>().unwrap(), s);
        }
    }

    #[test]
    fn config_hash_is_stable_and_sensitive() {
        let a = ExperimentConfig::default();
        assert_eq!(a.hash(), ExperimentConfig::default().hash());
        assert_eq!(a.hash().len(), 12);
        let b = ExperimentConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), a);
    }
}
