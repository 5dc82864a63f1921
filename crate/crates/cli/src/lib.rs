//! Pipeline orchestration behind the `voxrisk` command.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! schema_version
//! manifests/<subject>/<recording>.json
//! segments/<subject>/<segment>.wav, segments/index.csv
//! stats/table1.{csv,txt}
//! features/<subject>/<segment>/<source>.csv, features/index.csv
//! reports/<stem>.json, reports/<stem>.runtime.txt, reports/table2.{csv,txt}
//! ```

pub mod commands;
pub mod config;

pub use commands::{
    cmd_ablation, cmd_evaluate, cmd_extract, cmd_segment, cmd_stats, cmd_synth, EvaluateOutcome, SCHEMA_VERSION,
};
pub use config::{Paths, RunConfig};

use thiserror::Error;
use voxrisk::audio::AudioError;
use voxrisk::cohort::CohortError;
use voxrisk::evaluation::EvaluationError;
use voxrisk::features::io::FeatureIoError;
use voxrisk::features::FeatureError;
use voxrisk::segment::SegmentError;
use voxrisk::synth::SynthError;
use voxrisk::table::TableError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for configuration errors, 3 for bad or missing data, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    pub(crate) fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_error!(
    AudioError,
    SegmentError,
    CohortError,
    FeatureIoError,
    FeatureError,
    TableError
);

impl From<EvaluationError> for CliError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::InvalidConfig(_) => CliError::Config(e.to_string()),
            EvaluationError::Learner(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
