use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::functionals::{apply_functionals, FunctionalSet};
use super::lld::compute_lld;
use super::mel::{mel_spectrogram, melspec_summary, MelSpecConfig};
use super::{FeatureError, FeatureVector, FrameConfig};
use crate::audio::AudioBuffer;

/// Acoustic feature sources computed in-process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcousticSource {
    CompactFunctionals,
    ExtendedFunctionals,
    MelspecSummary,
}

impl AcousticSource {
    pub const ALL: [AcousticSource; 3] = [
        AcousticSource::CompactFunctionals,
        AcousticSource::ExtendedFunctionals,
        AcousticSource::MelspecSummary,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AcousticSource::CompactFunctionals => "compact_functionals",
            AcousticSource::ExtendedFunctionals => "extended_functionals",
            AcousticSource::MelspecSummary => "melspec_summary",
        }
    }
}

impl fmt::Display for AcousticSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AcousticSource {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|src| src.as_str() == s)
            .ok_or_else(|| FeatureError::InvalidConfig(format!("unknown feature source `{s}`")))
    }
}

/// Zero-pads the buffer at the end up to `min_len` samples.
pub fn pad_to_frame(buffer: &AudioBuffer, min_len: usize) -> AudioBuffer {
    if buffer.len() >= min_len {
        return buffer.clone();
    }
    let mut samples = buffer.samples().to_vec();
    samples.resize(min_len, 0.0);
    AudioBuffer::new(samples, buffer.sample_rate_hz(), buffer.source_id()).expect("padding keeps samples finite")
}

/// Computes one feature vector for a segment. Segments shorter than one
/// analysis frame are zero-padded to exactly one frame.
pub fn extract_acoustic(
    buffer: &AudioBuffer,
    source: AcousticSource,
    frames: &FrameConfig,
    mel: &MelSpecConfig,
) -> Result<FeatureVector, FeatureError> {
    let rate = buffer.sample_rate_hz();
    match source {
        AcousticSource::CompactFunctionals | AcousticSource::ExtendedFunctionals => {
            frames.validate()?;
            let padded = pad_to_frame(buffer, frames.frame_len(rate));
            let lld = compute_lld(&padded, frames)?;
            let set = if source == AcousticSource::CompactFunctionals {
                FunctionalSet::compact()
            } else {
                FunctionalSet::extended()
            };
            apply_functionals(&lld, &set)
        }
        AcousticSource::MelspecSummary => {
            let win = (mel.win_ms * rate as f64 / 1000.0).round() as usize;
            let padded = pad_to_frame(buffer, win.max(1));
            Ok(melspec_summary(&mel_spectrogram(&padded, mel)?))
        }
    }
}
