use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{loso_run, EvaluationError, ExperimentConfig, ExperimentReport, FeatureSource, SpeechScope};
use crate::cohort::{CohortDataset, MetadataLadderLevel};

/// One column of the metadata fusion table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationColumn {
    OnlyMetadata,
    Fused(SpeechScope),
}

impl AblationColumn {
    pub const ALL: [AblationColumn; 5] = [
        AblationColumn::OnlyMetadata,
        AblationColumn::Fused(SpeechScope::All),
        AblationColumn::Fused(SpeechScope::PictureDescription),
        AblationColumn::Fused(SpeechScope::NeutralText),
        AblationColumn::Fused(SpeechScope::Vowels),
    ];

    pub fn label(self) -> &'static str {
        match self {
            AblationColumn::OnlyMetadata => "Only Metadata",
            AblationColumn::Fused(s) => s.column_label(),
        }
    }

    /// Snake-case key used in CSV headers.
    pub fn key(self) -> &'static str {
        match self {
            AblationColumn::OnlyMetadata => "only_metadata",
            AblationColumn::Fused(SpeechScope::All) => "all_speech",
            AblationColumn::Fused(SpeechScope::PictureDescription) => "picture_description",
            AblationColumn::Fused(SpeechScope::NeutralText) => "neutral_texts",
            AblationColumn::Fused(SpeechScope::Vowels) => "vowels",
        }
    }

    /// Configuration of this column's cell at `level`.
    pub fn config(self, base: &ExperimentConfig, level: MetadataLadderLevel) -> ExperimentConfig {
        let (feature_source, speech_scope) = match self {
            AblationColumn::OnlyMetadata => (FeatureSource::MetadataOnly, SpeechScope::All),
            AblationColumn::Fused(scope) => (base.feature_source.clone(), scope),
        };
        ExperimentConfig {
            feature_source,
            speech_scope,
            metadata_level: Some(level),
            ..base.clone()
        }
    }
}

impl fmt::Display for AblationColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationCell {
    pub level: MetadataLadderLevel,
    pub column: AblationColumn,
    pub report: ExperimentReport,
}

/// All ladder cells, ordered by level then column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub cells: Vec<AblationCell>,
}

impl AblationResult {
    pub fn cell(&self, level: MetadataLadderLevel, column: AblationColumn) -> Option<&AblationCell> {
        self.cells.iter().find(|c| c.level == level && c.column == column)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ablation serializes") + "\n"
    }
}

/// Runs every level F1..F10 against the metadata-only column and the four
/// fused speech scopes. Cells run in parallel.
pub fn ablation_ladder(dataset: &CohortDataset, base: &ExperimentConfig) -> Result<AblationResult, EvaluationError> {
    if base.feature_source == FeatureSource::MetadataOnly {
        return Err(EvaluationError::InvalidConfig(
            "ablation needs a speech feature source".into(),
        ));
    }
    let jobs: Vec<(MetadataLadderLevel, AblationColumn)> = MetadataLadderLevel::all()
        .flat_map(|l| AblationColumn::ALL.into_iter().map(move |c| (l, c)))
        .collect();
    let cells = jobs
        .into_par_iter()
        .map(|(level, column)| {
            let report = loso_run(dataset, &column.config(base, level))?;
            Ok(AblationCell { level, column, report })
        })
        .collect::<Result<Vec<_>, EvaluationError>>()?;
    Ok(AblationResult { cells })
}
