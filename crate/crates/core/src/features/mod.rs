//! Interpretable acoustic features.
//!
//! A segment is framed (25 ms / 10 ms by default) and turned into a matrix of
//! low-level descriptors ([`compute_lld`]). Statistical functionals then
//! summarize every descriptor contour into a fixed-length [`FeatureVector`]
//! ([`apply_functionals`]). Two inventories exist: a compact one of 92
//! values and an extended one of 1050 values; see [`FunctionalSet`].
//!
//! Separately, [`mel_spectrogram`] produces 128-band log-mel spectrograms.

mod extract;
mod frames;
mod functionals;
pub mod io;
mod lld;
mod mel;
mod pitch;
mod spectral;
mod voice;

pub use extract::{extract_acoustic, pad_to_frame, AcousticSource};
pub use frames::{frame_signal, window, FrameConfig, WindowKind};
pub use functionals::{apply_functionals, Functional, FunctionalSet, SetId};
pub use lld::{compute_lld, is_voiced_only, LldMatrix, DESCRIPTORS, SEMITONE_REF_HZ};
pub use mel::{hz_to_mel, mel_filterbank, mel_spectrogram, mel_to_hz, melspec_summary, MelSpecConfig, MelSpectrogram};
pub use pitch::{f0_contour, PitchConfig, PitchTrack};
pub use spectral::ENERGY_FLOOR_DB;
pub use voice::{
    cycle_amplitudes, cycle_marks, cycle_periods, hnr_db, jitter_local, shimmer_local, GlottalCycle, HNR_MAX_DB,
    HNR_MIN_DB,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("buffer of {len} samples is shorter than one {frame_len}-sample frame")]
    BufferTooShort { len: usize, frame_len: usize },
    #[error("at least two periods are required, got {0}")]
    TooFewPeriods(usize),
    #[error("amplitude {value} at index {index} is not positive")]
    NonPositiveAmplitude { index: usize, value: f64 },
    #[error("frame is unvoiced")]
    UnvoicedFrame,
    #[error("descriptor matrix has no frames")]
    EmptyLld,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("feature vector has {names} names but {values} values")]
    LengthMismatch { names: usize, values: usize },
    #[error("non-finite value for feature `{0}`")]
    NonFinite(String),
    #[error("descriptor `{0}` missing from the descriptor matrix")]
    MissingDescriptor(String),
}

/// Named, ordered feature values. All values are finite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    names: Vec<String>,
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self, FeatureError> {
        if names.len() != values.len() {
            return Err(FeatureError::LengthMismatch {
                names: names.len(),
                values: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(names[i].clone()));
        }
        Ok(Self { names, values })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn into_parts(self) -> (Vec<String>, Vec<f64>) {
        (self.names, self.values)
    }
}
