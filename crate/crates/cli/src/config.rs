use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voxrisk::evaluation::ExperimentConfig;
use voxrisk::features::AcousticSource;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// `<subject>/<recording>.wav` tree.
    pub audio_dir: Option<PathBuf>,
    /// `<subject>/<recording>.json` alignment manifests; VAD is used for
    /// recordings without one.
    pub manifest_dir: Option<PathBuf>,
    pub metadata: Option<PathBuf>,
    pub embeddings_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Run configuration, read from TOML. Command-line flags override file
/// values; unset keys take the documented defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// Sources written by `extract`.
    pub extract_sources: Vec<AcousticSource>,
    pub experiment: ExperimentConfig,
    /// Permutations for the chance band reported with `evaluate --permutations`.
    pub permutations: usize,
    pub log_level: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths {
                out_dir: PathBuf::from("out"),
                ..Paths::default()
            },
            extract_sources: vec![AcousticSource::CompactFunctionals],
            experiment: ExperimentConfig::default(),
            permutations: 0,
            log_level: "info".into(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut cfg.paths;
        for p in [
            &mut paths.audio_dir,
            &mut paths.manifest_dir,
            &mut paths.metadata,
            &mut paths.embeddings_dir,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut paths.out_dir);
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks that a path the command needs is configured and exists.
    pub fn require<'a>(&self, what: &str, p: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        let p = p
            .as_deref()
            .ok_or_else(|| CliError::Config(format!("`paths.{what}` is not set")))?;
        if !p.exists() {
            return Err(CliError::Config(format!(
                "`paths.{what}` does not exist: {}",
                p.display()
            )));
        }
        Ok(p)
    }
}
