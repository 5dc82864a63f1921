//! Subjects, clinical metadata, labels and the incremental metadata ladder.
//!
//! Metadata CSV (one row per subject, empty cell = missing):
//!
//! ```text
//! subject_id,age,gender,height_cm,weight_kg,suicide_attempt_history,firearm_or_lethal_medication_access,hopelessness,sexual_abuse_trauma,stress_situation,substance_abuse,mania,nssi,bdi_score,clinician_rating
//! s01,34,female,168,61,1,0,3,0,1,0,0,1,27,5
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{load_embeddings, mean_pool, EmbeddingError};
use crate::features::io::{read_feature_file, FeatureIoError};
use crate::features::FeatureVector;
use crate::segment::{index_from_csv, SegmentKind, SegmentRecord};
use crate::table::{read_csv, write_csv, TableError};

pub const METADATA_HEADER: [&str; 15] = [
    "subject_id",
    "age",
    "gender",
    "height_cm",
    "weight_kg",
    "suicide_attempt_history",
    "firearm_or_lethal_medication_access",
    "hopelessness",
    "sexual_abuse_trauma",
    "stress_situation",
    "substance_abuse",
    "mania",
    "nssi",
    "bdi_score",
    "clinician_rating",
];

pub const HOPELESSNESS_MAX: u8 = 4;

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("subject `{subject_id}` in {origin} is not in the metadata")]
    UnknownSubjectInFeatures { subject_id: String, origin: String },
    #[error("subject `{subject_id}`: required field `{field}` is missing")]
    MissingRequiredField { subject_id: String, field: String },
    #[error("subject `{subject_id}`: clinician rating {rating} outside 1..=6")]
    RatingOutOfRange { subject_id: String, rating: i64 },
    #[error("subject `{subject_id}`: invalid {field} `{value}`")]
    InvalidField {
        subject_id: String,
        field: String,
        value: String,
    },
    #[error("duplicate subject `{0}`")]
    DuplicateSubject(String),
    #[error("duplicate segment `{0}`")]
    DuplicateSegment(String),
    #[error("duplicate feature name `{0}`")]
    DuplicateFeatureName(String),
    #[error("source `{source_name}`: segment `{segment_id}` has {got} features, cohort uses {expected}")]
    FeatureDimension {
        source_name: String,
        segment_id: String,
        expected: usize,
        got: usize,
    },
    #[error("{path}: {detail}")]
    Schema { path: PathBuf, detail: String },
    #[error(transparent)]
    Features(#[from] FeatureIoError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("{path}: {source}")]
    Table {
        path: PathBuf,
        #[source]
        source: TableError,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CohortError + '_ {
    move |source| CohortError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
    Other,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
            Gender::Other => "other",
        }
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Gender::Female),
            "male" | "m" => Ok(Gender::Male),
            "other" | "unspecified" | "diverse" => Ok(Gender::Other),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    Low,
    High,
}

impl BinaryLabel {
    /// `High` is `+1`, `Low` is `-1`.
    pub fn sign(self) -> f64 {
        match self {
            BinaryLabel::High => 1.0,
            BinaryLabel::Low => -1.0,
        }
    }

    /// `sign(0)` counts as high.
    pub fn from_decision(value: f64) -> Self {
        if value >= 0.0 {
            BinaryLabel::High
        } else {
            BinaryLabel::Low
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BinaryLabel::Low => "low",
            BinaryLabel::High => "high",
        }
    }
}

/// Ratings 1–4 are low risk, 5–6 high.
pub fn binarize_label(rating: i64) -> Result<BinaryLabel, CohortError> {
    match rating {
        1..=4 => Ok(BinaryLabel::Low),
        5 | 6 => Ok(BinaryLabel::High),
        _ => Err(CohortError::RatingOutOfRange {
            subject_id: String::new(),
            rating,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub age: Option<f64>,
    pub gender: Option<Gender>,
    pub height_cm: Option<f64>,
    pub weight_kg: Option<f64>,
    pub suicide_attempt_history: Option<bool>,
    pub firearm_or_lethal_medication_access: Option<bool>,
    pub hopelessness: Option<u8>,
    pub sexual_abuse_trauma: Option<bool>,
    pub stress_situation: Option<bool>,
    pub substance_abuse: Option<bool>,
    pub mania: Option<bool>,
    pub nssi: Option<bool>,
    pub bdi_score: Option<u32>,
    pub clinician_rating: u8,
}

impl SubjectRecord {
    /// A record with every optional field missing.
    pub fn bare(subject_id: impl Into<String>, clinician_rating: u8) -> Self {
        Self {
            subject_id: subject_id.into(),
            age: None,
            gender: None,
            height_cm: None,
            weight_kg: None,
            suicide_attempt_history: None,
            firearm_or_lethal_medication_access: None,
            hopelessness: None,
            sexual_abuse_trauma: None,
            stress_situation: None,
            substance_abuse: None,
            mania: None,
            nssi: None,
            bdi_score: None,
            clinician_rating,
        }
    }

    pub fn label(&self) -> BinaryLabel {
        binarize_label(self.clinician_rating as i64).expect("rating validated on construction")
    }

    fn flag(&self, field: MetadataField) -> Option<bool> {
        match field {
            MetadataField::SuicideAttemptHistory => self.suicide_attempt_history,
            MetadataField::FirearmOrLethalMedicationAccess => self.firearm_or_lethal_medication_access,
            MetadataField::SexualAbuseTrauma => self.sexual_abuse_trauma,
            MetadataField::StressSituation => self.stress_situation,
            MetadataField::SubstanceAbuse => self.substance_abuse,
            MetadataField::Mania => self.mania,
            MetadataField::Nssi => self.nssi,
            _ => None,
        }
    }

    pub fn set_flag(&mut self, field: MetadataField, value: Option<bool>) {
        let slot = match field {
            MetadataField::SuicideAttemptHistory => &mut self.suicide_attempt_history,
            MetadataField::FirearmOrLethalMedicationAccess => &mut self.firearm_or_lethal_medication_access,
            MetadataField::SexualAbuseTrauma => &mut self.sexual_abuse_trauma,
            MetadataField::StressSituation => &mut self.stress_situation,
            MetadataField::SubstanceAbuse => &mut self.substance_abuse,
            MetadataField::Mania => &mut self.mania,
            MetadataField::Nssi => &mut self.nssi,
            other => panic!("{other} is not a boolean field"),
        };
        *slot = value;
    }
}

/// Metadata fields in ladder order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetadataField {
    Age,
    Gender,
    HeightCm,
    WeightKg,
    SuicideAttemptHistory,
    FirearmOrLethalMedicationAccess,
    Hopelessness,
    SexualAbuseTrauma,
    StressSituation,
    SubstanceAbuse,
    Mania,
    Nssi,
    BdiScore,
}

impl MetadataField {
    pub const ALL: [MetadataField; 13] = [
        MetadataField::Age,
        MetadataField::Gender,
        MetadataField::HeightCm,
        MetadataField::WeightKg,
        MetadataField::SuicideAttemptHistory,
        MetadataField::FirearmOrLethalMedicationAccess,
        MetadataField::Hopelessness,
        MetadataField::SexualAbuseTrauma,
        MetadataField::StressSituation,
        MetadataField::SubstanceAbuse,
        MetadataField::Mania,
        MetadataField::Nssi,
        MetadataField::BdiScore,
    ];

    pub const BOOLEAN: [MetadataField; 7] = [
        MetadataField::SuicideAttemptHistory,
        MetadataField::FirearmOrLethalMedicationAccess,
        MetadataField::SexualAbuseTrauma,
        MetadataField::StressSituation,
        MetadataField::SubstanceAbuse,
        MetadataField::Mania,
        MetadataField::Nssi,
    ];

    /// Column name in the metadata CSV.
    pub fn as_str(self) -> &'static str {
        METADATA_HEADER[self as usize + 1]
    }

    /// Encoded column names.
    pub fn encoded_names(self) -> Vec<String> {
        match self {
            MetadataField::Gender => ["female", "male", "other"]
                .iter()
                .map(|g| format!("meta_gender_{g}"))
                .collect(),
            f => vec![format!("meta_{}", f.as_str())],
        }
    }
}

impl fmt::Display for MetadataField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetadataField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown metadata field `{s}`"))
    }
}

/// One of F1..F10. F1 holds the demographics; each later level adds one field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MetadataLadderLevel(u8);

const LADDER_ROW_LABELS: [&str; 10] = [
    "Demographics (F1)",
    "F1 + Suicide Attempts (F2)",
    "F2 + Firearms or Potentially Lethal Medication (F3)",
    "F3 + Hopelessness (F4)",
    "F4 + Sexual Abuse/Trauma (F5)",
    "F5 + Stress Situation (F6)",
    "F6 + Substance Abuse (F7)",
    "F7 + Mania (F8)",
    "F8 + NSSI (F9)",
    "F9 + BDI (F10)",
];

impl MetadataLadderLevel {
    pub fn new(level: u8) -> Option<Self> {
        (1..=10).contains(&level).then_some(Self(level))
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (1..=10).map(Self)
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn row_label(self) -> &'static str {
        LADDER_ROW_LABELS[self.0 as usize - 1]
    }

    /// Fields in encoding order: demographics, then one per level.
    pub fn included_fields(self) -> Vec<MetadataField> {
        MetadataField::ALL[..4 + self.0 as usize - 1].to_vec()
    }

    /// The field this level adds over the previous one.
    pub fn added_field(self) -> Option<MetadataField> {
        (self.0 > 1).then(|| MetadataField::ALL[self.0 as usize + 2])
    }

    pub fn dim(self) -> usize {
        self.included_fields().iter().map(|f| f.encoded_names().len()).sum()
    }
}

impl fmt::Display for MetadataLadderLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.0)
    }
}

impl FromStr for MetadataLadderLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix(['F', 'f'])
            .and_then(|n| n.parse().ok())
            .and_then(Self::new)
            .ok_or_else(|| format!("metadata level must be F1..F10, got `{s}`"))
    }
}

impl Serialize for MetadataLadderLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetadataLadderLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Encoded metadata columns with missing numeric values left as `None`.
/// A missing gender sets the `other` slot.
pub fn metadata_columns(record: &SubjectRecord, level: MetadataLadderLevel) -> Vec<(String, Option<f64>)> {
    let b = |v: Option<bool>| v.map(|x| if x { 1.0 } else { 0.0 });
    let mut out = Vec::with_capacity(level.dim());
    for field in level.included_fields() {
        let mut names = field.encoded_names().into_iter();
        let mut push = |v: Option<f64>| out.push((names.next().expect("encoded name"), v));
        match field {
            MetadataField::Age => push(record.age),
            MetadataField::Gender => {
                let g = record.gender.unwrap_or(Gender::Other);
                for slot in [Gender::Female, Gender::Male, Gender::Other] {
                    push(Some(if g == slot { 1.0 } else { 0.0 }));
                }
            }
            MetadataField::HeightCm => push(record.height_cm),
            MetadataField::WeightKg => push(record.weight_kg),
            MetadataField::Hopelessness => push(record.hopelessness.map(f64::from)),
            MetadataField::BdiScore => push(record.bdi_score.map(f64::from)),
            flag => push(b(record.flag(flag))),
        }
    }
    out
}

/// Strict encoding: every field required by the level must be present.
pub fn encode_metadata(record: &SubjectRecord, level: MetadataLadderLevel) -> Result<FeatureVector, CohortError> {
    if let Some(field) = level
        .included_fields()
        .into_iter()
        .find(|&f| f == MetadataField::Gender && record.gender.is_none())
    {
        return Err(CohortError::MissingRequiredField {
            subject_id: record.subject_id.clone(),
            field: field.as_str().to_string(),
        });
    }
    let (names, values): (Vec<String>, Vec<Option<f64>>) = metadata_columns(record, level).into_iter().unzip();
    let values = values
        .into_iter()
        .zip(&names)
        .map(|(v, n)| {
            v.ok_or_else(|| CohortError::MissingRequiredField {
                subject_id: record.subject_id.clone(),
                field: n.trim_start_matches("meta_").to_string(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FeatureVector::new(names, values).expect("finite metadata"))
}

/// Concatenates speech then metadata features.
pub fn fuse(speech: &FeatureVector, meta: &FeatureVector) -> Result<FeatureVector, CohortError> {
    let mut seen: HashSet<&str> = HashSet::with_capacity(speech.len() + meta.len());
    for n in speech.names().iter().chain(meta.names()) {
        if !seen.insert(n) {
            return Err(CohortError::DuplicateFeatureName(n.clone()));
        }
    }
    let names = speech.names().iter().chain(meta.names()).cloned().collect();
    let values = speech.values().iter().chain(meta.values()).copied().collect();
    Ok(FeatureVector::new(names, values).expect("inputs are valid vectors"))
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_bool(v: Option<bool>) -> String {
    v.map(|x| if x { "1" } else { "0" }.to_string()).unwrap_or_default()
}

pub fn metadata_to_csv(records: &[SubjectRecord]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.subject_id.clone(),
                fmt_opt(r.age),
                r.gender.map(|g| g.as_str().to_string()).unwrap_or_default(),
                fmt_opt(r.height_cm),
                fmt_opt(r.weight_kg),
                fmt_bool(r.suicide_attempt_history),
                fmt_bool(r.firearm_or_lethal_medication_access),
                fmt_opt(r.hopelessness),
                fmt_bool(r.sexual_abuse_trauma),
                fmt_bool(r.stress_situation),
                fmt_bool(r.substance_abuse),
                fmt_bool(r.mania),
                fmt_bool(r.nssi),
                fmt_opt(r.bdi_score),
                r.clinician_rating.to_string(),
            ]
        })
        .collect();
    write_csv(&METADATA_HEADER, &rows)
}

/// Parses the metadata CSV; subjects are returned sorted by id.
pub fn parse_metadata_csv(text: &str, origin: &Path) -> Result<Vec<SubjectRecord>, CohortError> {
    let rows = read_csv(text, &METADATA_HEADER).map_err(|source| CohortError::Table {
        path: origin.to_path_buf(),
        source,
    })?;
    let mut out: Vec<SubjectRecord> = Vec::with_capacity(rows.len());
    let mut ids = HashSet::new();
    for row in rows {
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(CohortError::Schema {
                path: origin.to_path_buf(),
                detail: "empty subject_id".into(),
            });
        }
        if !ids.insert(id.clone()) {
            return Err(CohortError::DuplicateSubject(id));
        }
        let invalid = |field: &str, value: &str| CohortError::InvalidField {
            subject_id: id.clone(),
            field: field.to_string(),
            value: value.to_string(),
        };
        let cell = |i: usize| -> Option<&str> { Some(row[i].trim()).filter(|s| !s.is_empty()) };
        let real = |i: usize| -> Result<Option<f64>, CohortError> {
            cell(i)
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| invalid(METADATA_HEADER[i], s))
                })
                .transpose()
        };
        let flag = |i: usize| -> Result<Option<bool>, CohortError> {
            cell(i)
                .map(|s| match s.to_ascii_lowercase().as_str() {
                    "1" | "true" => Ok(true),
                    "0" | "false" => Ok(false),
                    _ => Err(invalid(METADATA_HEADER[i], s)),
                })
                .transpose()
        };
        let age = real(1)?;
        if let Some(a) = age.filter(|&a| a <= 0.0) {
            return Err(invalid("age", &a.to_string()));
        }
        let gender = cell(2)
            .map(|s| s.parse::<Gender>().map_err(|_| invalid("gender", s)))
            .transpose()?;
        let hopelessness = cell(7)
            .map(|s| {
                s.parse::<u8>()
                    .ok()
                    .filter(|&h| h <= HOPELESSNESS_MAX)
                    .ok_or_else(|| invalid("hopelessness", s))
            })
            .transpose()?;
        let bdi_score = cell(13)
            .map(|s| s.parse::<u32>().map_err(|_| invalid("bdi_score", s)))
            .transpose()?;
        let rating_text = cell(14).ok_or_else(|| CohortError::MissingRequiredField {
            subject_id: id.clone(),
            field: "clinician_rating".into(),
        })?;
        let rating: i64 = rating_text
            .parse()
            .map_err(|_| invalid("clinician_rating", rating_text))?;
        binarize_label(rating).map_err(|_| CohortError::RatingOutOfRange {
            subject_id: id.clone(),
            rating,
        })?;
        out.push(SubjectRecord {
            subject_id: id.clone(),
            age,
            gender,
            height_cm: real(3)?,
            weight_kg: real(4)?,
            suicide_attempt_history: flag(5)?,
            firearm_or_lethal_medication_access: flag(6)?,
            hopelessness,
            sexual_abuse_trauma: flag(8)?,
            stress_situation: flag(9)?,
            substance_abuse: flag(10)?,
            mania: flag(11)?,
            nssi: flag(12)?,
            bdi_score,
            clinician_rating: rating as u8,
        });
    }
    out.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
    Ok(out)
}

pub fn load_metadata(path: impl AsRef<Path>) -> Result<Vec<SubjectRecord>, CohortError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_metadata_csv(&text, path)
}

/// A segment with its features, keyed by source name.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSegment {
    pub record: SegmentRecord,
    pub features: BTreeMap<String, FeatureVector>,
}

impl CohortSegment {
    pub fn subject_id(&self) -> &str {
        &self.record.subject_id
    }

    pub fn segment_id(&self) -> &str {
        &self.record.segment_id
    }

    pub fn kind(&self) -> SegmentKind {
        self.record.span.kind
    }
}

/// Subjects sorted by id and segments sorted by `(subject, segment)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortDataset {
    subjects: Vec<SubjectRecord>,
    segments: Vec<CohortSegment>,
}

impl CohortDataset {
    /// Checks that every segment belongs to a known subject, ids are
    /// unique and each source has one dimension across the cohort.
    pub fn new(mut subjects: Vec<SubjectRecord>, mut segments: Vec<CohortSegment>) -> Result<Self, CohortError> {
        subjects.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        for w in subjects.windows(2) {
            if w[0].subject_id == w[1].subject_id {
                return Err(CohortError::DuplicateSubject(w[0].subject_id.clone()));
            }
        }
        for s in &subjects {
            binarize_label(s.clinician_rating as i64).map_err(|_| CohortError::RatingOutOfRange {
                subject_id: s.subject_id.clone(),
                rating: s.clinician_rating as i64,
            })?;
        }
        let known: HashSet<&str> = subjects.iter().map(|s| s.subject_id.as_str()).collect();
        let mut seg_ids = HashSet::new();
        let mut dims: BTreeMap<&str, usize> = BTreeMap::new();
        for seg in &segments {
            if !known.contains(seg.subject_id()) {
                return Err(CohortError::UnknownSubjectInFeatures {
                    subject_id: seg.subject_id().to_string(),
                    origin: format!("segment `{}`", seg.segment_id()),
                });
            }
            if !seg_ids.insert(seg.segment_id()) {
                return Err(CohortError::DuplicateSegment(seg.segment_id().to_string()));
            }
            for (src, v) in &seg.features {
                let expected = *dims.entry(src.as_str()).or_insert(v.len());
                if v.len() != expected {
                    return Err(CohortError::FeatureDimension {
                        source_name: src.clone(),
                        segment_id: seg.segment_id().to_string(),
                        expected,
                        got: v.len(),
                    });
                }
            }
        }
        segments.sort_by(|a, b| (a.subject_id(), a.segment_id()).cmp(&(b.subject_id(), b.segment_id())));
        Ok(Self { subjects, segments })
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn segments(&self) -> &[CohortSegment] {
        &self.segments
    }

    pub fn subject(&self, id: &str) -> Option<&SubjectRecord> {
        self.subjects
            .binary_search_by(|s| s.subject_id.as_str().cmp(id))
            .ok()
            .map(|i| &self.subjects[i])
    }

    pub fn label_of(&self, subject_id: &str) -> Option<BinaryLabel> {
        self.subject(subject_id).map(SubjectRecord::label)
    }

    pub fn segments_of<'a>(&'a self, subject_id: &'a str) -> impl Iterator<Item = &'a CohortSegment> + 'a {
        self.segments.iter().filter(move |s| s.subject_id() == subject_id)
    }

    /// Feature source names present on any segment.
    pub fn sources(&self) -> BTreeSet<&str> {
        self.segments
            .iter()
            .flat_map(|s| s.features.keys().map(String::as_str))
            .collect()
    }

    /// Same segments, restricted subject list.
    pub fn with_subjects(&self, keep: &dyn Fn(&SubjectRecord) -> bool) -> Self {
        let subjects: Vec<SubjectRecord> = self.subjects.iter().filter(|s| keep(s)).cloned().collect();
        let ids: HashSet<&str> = subjects.iter().map(|s| s.subject_id.as_str()).collect();
        let segments = self
            .segments
            .iter()
            .filter(|s| ids.contains(s.subject_id()))
            .cloned()
            .collect();
        Self { subjects, segments }
    }

    pub fn with_segments(&self, keep: &dyn Fn(&CohortSegment) -> bool) -> Self {
        Self {
            subjects: self.subjects.clone(),
            segments: self.segments.iter().filter(|s| keep(s)).cloned().collect(),
        }
    }

    /// Replaces subject records (e.g. relabelled copies); ids must match.
    pub fn with_records(&self, records: Vec<SubjectRecord>) -> Result<Self, CohortError> {
        Self::new(records, self.segments.clone())
    }
}

/// Name of the embedding feature source for a model.
pub fn embedding_source(model_id: &str) -> String {
    format!("embedding:{model_id}")
}

fn is_feature_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "bin"))
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>, CohortError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()).map_err(io_err(dir)))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.is_file() && is_feature_file(p));
    files.sort();
    Ok(files)
}

/// Loads metadata plus per-segment features.
///
/// `features_dir` holds `index.csv` (the segment index) and
/// `<subject>/<segment>/<source>.{csv,bin}` feature vectors. Each optional
/// `embeddings_dir` file `<subject>/<segment>/<name>.{csv,bin}` is an
/// embedding matrix, mean-pooled into source `embedding:<model_id>`.
pub fn load_cohort_with(
    metadata_path: &Path,
    features_dir: &Path,
    embeddings_dir: Option<&Path>,
) -> Result<CohortDataset, CohortError> {
    let subjects = load_metadata(metadata_path)?;
    let known: HashSet<String> = subjects.iter().map(|s| s.subject_id.clone()).collect();
    let index_path = features_dir.join("index.csv");
    let index_text = fs::read_to_string(&index_path).map_err(io_err(&index_path))?;
    let records = index_from_csv(&index_text).map_err(|source| CohortError::Table {
        path: index_path.clone(),
        source,
    })?;
    let unknown = |subject_id: &str, origin: &Path| CohortError::UnknownSubjectInFeatures {
        subject_id: subject_id.to_string(),
        origin: origin.display().to_string(),
    };
    // Subject directories must also be known.
    for dir in [Some(features_dir), embeddings_dir].into_iter().flatten() {
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let path = entry.map_err(io_err(dir))?.path();
            if path.is_dir() {
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                if !known.contains(name) {
                    return Err(unknown(name, &path));
                }
            }
        }
    }
    let mut segments = Vec::with_capacity(records.len());
    for record in records {
        if !known.contains(&record.subject_id) {
            return Err(unknown(&record.subject_id, &index_path));
        }
        let mut features = BTreeMap::new();
        let seg_dir = features_dir.join(&record.subject_id).join(&record.segment_id);
        if seg_dir.is_dir() {
            for file in sorted_files(&seg_dir)? {
                let source = file
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .unwrap_or_default()
                    .to_string();
                features.insert(source, read_feature_file(&file)?);
            }
        }
        if let Some(emb) = embeddings_dir {
            let dir = emb.join(&record.subject_id).join(&record.segment_id);
            if dir.is_dir() {
                for file in sorted_files(&dir)? {
                    let m = load_embeddings(&file)?;
                    if m.segment_id() != record.segment_id {
                        return Err(CohortError::Schema {
                            path: file,
                            detail: format!("segment_id `{}` does not match `{}`", m.segment_id(), record.segment_id),
                        });
                    }
                    let pooled = mean_pool(&m)?;
                    if let Some(prev) = features.get(&embedding_source(m.model_id())) {
                        if prev.len() != pooled.len() {
                            return Err(EmbeddingError::DimensionMismatch {
                                model_id: m.model_id().to_string(),
                                segment_id: record.segment_id.clone(),
                                expected: prev.len(),
                                got: pooled.len(),
                            }
                            .into());
                        }
                    }
                    features.insert(embedding_source(m.model_id()), pooled);
                }
            }
        }
        segments.push(CohortSegment { record, features });
    }
    let ds = CohortDataset::new(subjects, segments);
    // Surface embedding dimension conflicts with the embedding error kind.
    match ds {
        Err(CohortError::FeatureDimension {
            source_name,
            segment_id,
            expected,
            got,
        }) if source_name.starts_with("embedding:") => Err(EmbeddingError::DimensionMismatch {
            model_id: source_name.trim_start_matches("embedding:").to_string(),
            segment_id,
            expected,
            got,
        }
        .into()),
        other => other,
    }
}

pub fn load_cohort(
    metadata_path: impl AsRef<Path>,
    features_dir: impl AsRef<Path>,
) -> Result<CohortDataset, CohortError> {
    load_cohort_with(metadata_path.as_ref(), features_dir.as_ref(), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::SegmentSpan;
    use proptest::prelude::*;

    pub(crate) fn full_record(id: &str, rating: u8) -> SubjectRecord {
        SubjectRecord {
            subject_id: id.into(),
            age: Some(30.0),
            gender: Some(Gender::Female),
            height_cm: Some(170.0),
            weight_kg: Some(65.0),
            suicide_attempt_history: Some(true),
            firearm_or_lethal_medication_access: Some(false),
            hopelessness: Some(3),
            sexual_abuse_trauma: Some(false),
            stress_situation: Some(true),
            substance_abuse: Some(false),
            mania: Some(false),
            nssi: Some(true),
            bdi_score: Some(21),
            clinician_rating: rating,
        }
    }

    fn level(k: u8) -> MetadataLadderLevel {
        MetadataLadderLevel::new(k).unwrap()
    }

    #[test]
    fn label_bands() {
        assert_eq!(binarize_label(4).unwrap(), BinaryLabel::Low);
        assert_eq!(binarize_label(5).unwrap(), BinaryLabel::High);
        assert_eq!(binarize_label(1).unwrap(), BinaryLabel::Low);
        assert_eq!(binarize_label(6).unwrap(), BinaryLabel::High);
        for r in [0, 7, -1] {
            assert!(matches!(binarize_label(r), Err(CohortError::RatingOutOfRange { .. })));
        }
        for r in 1..=6 {
            assert_eq!(binarize_label(r).unwrap() == BinaryLabel::Low, r < 5);
        }
    }

    #[test]
    fn f1_encoding() {
        let v = encode_metadata(&full_record("s", 3), level(1)).unwrap();
        assert_eq!(v.values(), &[30.0, 1.0, 0.0, 0.0, 170.0, 65.0]);
        assert_eq!(
            v.names(),
            &[
                "meta_age",
                "meta_gender_female",
                "meta_gender_male",
                "meta_gender_other",
                "meta_height_cm",
                "meta_weight_kg"
            ]
        );
    }

    #[test]
    fn ladder_schedule() {
        let added: Vec<&str> = (2..=10).map(|k| level(k).added_field().unwrap().as_str()).collect();
        assert_eq!(
            added,
            [
                "suicide_attempt_history",
                "firearm_or_lethal_medication_access",
                "hopelessness",
                "sexual_abuse_trauma",
                "stress_situation",
                "substance_abuse",
                "mania",
                "nssi",
                "bdi_score"
            ]
        );
        let r = full_record("s", 5);
        let mut prev = encode_metadata(&r, level(1)).unwrap();
        for k in 2..=10 {
            let cur = encode_metadata(&r, level(k)).unwrap();
            assert_eq!(cur.len(), prev.len() + 1, "F{k}");
            assert_eq!(&cur.names()[..prev.len()], prev.names());
            assert_eq!(cur.len(), level(k).dim());
            prev = cur;
        }
        assert_eq!(prev.get("meta_bdi_score"), Some(21.0));
        assert_eq!(prev.get("meta_hopelessness"), Some(3.0));
        assert_eq!(level(10).row_label(), "F9 + BDI (F10)");
        assert_eq!("F7".parse::<MetadataLadderLevel>().unwrap(), level(7));
        assert!("F11".parse::<MetadataLadderLevel>().is_err());
    }

    #[test]
    fn strict_encoding_reports_missing() {
        let mut r = full_record("s", 2);
        r.mania = None;
        assert!(encode_metadata(&r, level(7)).is_ok());
        match encode_metadata(&r, level(8)) {
            Err(CohortError::MissingRequiredField { field, .. }) => assert_eq!(field, "mania"),
            other => panic!("{other:?}"),
        }
        r.gender = None;
        assert!(matches!(
            encode_metadata(&r, level(1)),
            Err(CohortError::MissingRequiredField { .. })
        ));
        let cols = metadata_columns(&r, level(1));
        assert_eq!(cols[3], ("meta_gender_other".to_string(), Some(1.0)));
    }

    #[test]
    fn fuse_examples() {
        let speech = FeatureVector::new((0..88).map(|i| format!("s{i}")).collect(), vec![0.5; 88]).unwrap();
        let meta = encode_metadata(&full_record("s", 1), level(1)).unwrap();
        let f = fuse(&speech, &meta).unwrap();
        assert_eq!(f.len(), 94);
        assert_eq!(f.names()[..88], *speech.names());
        assert_eq!(f.names()[88..], *meta.names());
        assert_eq!(fuse(&speech, &FeatureVector::empty()).unwrap(), speech);
        assert!(matches!(fuse(&meta, &meta), Err(CohortError::DuplicateFeatureName(_))));
    }

    #[test]
    fn metadata_csv_round_trip_and_errors() {
        let mut a = full_record("s02", 5);
        a.bdi_score = None;
        a.gender = None;
        let b = full_record("s01", 2);
        let text = metadata_to_csv(&[a.clone(), b.clone()]);
        let parsed = parse_metadata_csv(&text, Path::new("m.csv")).unwrap();
        assert_eq!(parsed, vec![b, a]);

        let header = METADATA_HEADER.join(",");
        let p = Path::new("m.csv");
        let seven = format!("{header}\nx,30,male,180,80,0,0,1,0,0,0,0,0,5,7\n");
        assert!(matches!(
            parse_metadata_csv(&seven, p),
            Err(CohortError::RatingOutOfRange { rating: 7, .. })
        ));
        let missing = format!("{header}\nx,30,male,180,80,0,0,1,0,0,0,0,0,5,\n");
        assert!(matches!(
            parse_metadata_csv(&missing, p),
            Err(CohortError::MissingRequiredField { .. })
        ));
        let bad_bool = format!("{header}\nx,30,male,180,80,maybe,0,1,0,0,0,0,0,5,3\n");
        assert!(matches!(
            parse_metadata_csv(&bad_bool, p),
            Err(CohortError::InvalidField { .. })
        ));
        let hopeless = format!("{header}\nx,30,male,180,80,0,0,9,0,0,0,0,0,5,3\n");
        assert!(matches!(
            parse_metadata_csv(&hopeless, p),
            Err(CohortError::InvalidField { .. })
        ));
    }

    fn seg(subject: &str, n: usize, dim: usize) -> CohortSegment {
        CohortSegment {
            record: SegmentRecord {
                subject_id: subject.into(),
                recording_id: "text".into(),
                segment_id: format!("{subject}_text_{n:03}"),
                span: SegmentSpan::new(n as f64, n as f64 + 0.5, SegmentKind::NeutralText),
            },
            features: [(
                "compact_functionals".to_string(),
                FeatureVector::new((0..dim).map(|i| format!("f{i}")).collect(), vec![n as f64; dim]).unwrap(),
            )]
            .into(),
        }
    }

    #[test]
    fn dataset_checks() {
        let subjects = vec![full_record("a", 2), full_record("b", 6)];
        let segs: Vec<_> = ["a", "b"]
            .iter()
            .flat_map(|s| (0..3).map(move |n| seg(s, n, 4)))
            .collect();
        let ds = CohortDataset::new(subjects.clone(), segs.clone()).unwrap();
        assert_eq!(ds.segments().len(), 6);
        assert_eq!(ds.label_of("b"), Some(BinaryLabel::High));
        assert_eq!(ds.segments_of("a").count(), 3);

        let mut stray = segs.clone();
        stray.push(seg("zz", 0, 4));
        assert!(matches!(
            CohortDataset::new(subjects.clone(), stray),
            Err(CohortError::UnknownSubjectInFeatures { .. })
        ));
        let mut wide = segs;
        wide.push(seg("a", 9, 5));
        assert!(matches!(
            CohortDataset::new(subjects, wide),
            Err(CohortError::FeatureDimension { .. })
        ));
    }

    proptest! {
        #[test]
        fn relabelling_touches_one_subject(ratings in proptest::collection::vec(1u8..=6, 3..8), who in 0usize..8, new_rating in 1u8..=6) {
            let subjects: Vec<_> = ratings.iter().enumerate().map(|(i, &r)| full_record(&format!("s{i}"), r)).collect();
            let segs: Vec<_> = subjects.iter().flat_map(|s| (0..2).map(|n| seg(&s.subject_id, n, 2)).collect::<Vec<_>>()).collect();
            let ds = CohortDataset::new(subjects.clone(), segs).unwrap();
            let who = who % subjects.len();
            let mut changed = subjects.clone();
            changed[who].clinician_rating = new_rating;
            let ds2 = ds.with_records(changed).unwrap();
            for s in ds.segments() {
                let before = ds.label_of(s.subject_id()).unwrap();
                let after = ds2.label_of(s.subject_id()).unwrap();
                if s.subject_id() == subjects[who].subject_id {
                    prop_assert_eq!(after, binarize_label(new_rating as i64).unwrap());
                } else {
                    prop_assert_eq!(before, after);
                }
            }
        }
    }
}
