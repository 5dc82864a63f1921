//! Utterance segmentation: alignment manifests, an energy-based fallback
//! detector, lossless slicing and per-kind duration statistics.

mod index;
mod manifest;
mod stats;
mod vad;

pub use index::{index_from_csv, index_to_csv, SegmentRecord, INDEX_HEADER};
pub use manifest::{ingest_manifest, parse_manifest, write_manifest, SegmentManifest};
pub use stats::{segment_stats, SegmentStats, StatsRow, StatsTable};
pub use vad::{energy_vad, VadConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioBuffer, AudioError};

#[derive(Debug, Error)]
pub enum SegmentError {
    #[error("manifest schema violation in {path}: {detail}")]
    SchemaViolation { path: String, detail: String },
    #[error("overlapping spans in {recording_id}: [{a_start}, {a_end}) and [{b_start}, {b_end})")]
    OverlappingSpans {
        recording_id: String,
        a_start: f64,
        a_end: f64,
        b_start: f64,
        b_end: f64,
    },
    #[error("span [{start_s}, {end_s}) outside recording of {duration_s} s")]
    SpanOutOfRange { start_s: f64, end_s: f64, duration_s: f64 },
    #[error("buffer of {len} samples is shorter than one {frame_len}-sample frame")]
    BufferTooShort { len: usize, frame_len: usize },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The speech activity a segment was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    PictureDescription,
    NeutralText,
    Vowel,
}

impl SegmentKind {
    pub const ALL: [SegmentKind; 3] = [
        SegmentKind::PictureDescription,
        SegmentKind::NeutralText,
        SegmentKind::Vowel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SegmentKind::PictureDescription => "picture_description",
            SegmentKind::NeutralText => "neutral_text",
            SegmentKind::Vowel => "vowel",
        }
    }

    /// Row label used in the dataset statistics table.
    pub fn table_label(self) -> &'static str {
        match self {
            SegmentKind::PictureDescription => "Pic. Desc.",
            SegmentKind::NeutralText => "Neut. Texts",
            SegmentKind::Vowel => "Vowels",
        }
    }
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SegmentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "picture_description" => Ok(SegmentKind::PictureDescription),
            "neutral_text" => Ok(SegmentKind::NeutralText),
            "vowel" => Ok(SegmentKind::Vowel),
            other => Err(format!("unknown segment kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vowel {
    A,
    E,
    I,
    O,
    U,
}

impl Vowel {
    pub const ALL: [Vowel; 5] = [Vowel::A, Vowel::E, Vowel::I, Vowel::O, Vowel::U];

    pub fn as_str(self) -> &'static str {
        match self {
            Vowel::A => "a",
            Vowel::E => "e",
            Vowel::I => "i",
            Vowel::O => "o",
            Vowel::U => "u",
        }
    }
}

impl FromStr for Vowel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Vowel::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown vowel label `{s}`"))
    }
}

/// A typed time interval within one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: SegmentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vowel_label: Option<Vowel>,
}

impl SegmentSpan {
    pub fn new(start_s: f64, end_s: f64, kind: SegmentKind) -> Self {
        Self {
            start_s,
            end_s,
            kind,
            text: None,
            vowel_label: None,
        }
    }

    pub fn vowel(start_s: f64, end_s: f64, label: Vowel) -> Self {
        Self {
            start_s,
            end_s,
            kind: SegmentKind::Vowel,
            text: None,
            vowel_label: Some(label),
        }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    /// Checks the per-span invariants that do not depend on the recording.
    pub fn check(&self) -> Result<(), String> {
        if !(self.start_s.is_finite() && self.end_s.is_finite()) {
            return Err("non-finite span bounds".into());
        }
        if self.start_s < 0.0 {
            return Err(format!("start_s {} is negative", self.start_s));
        }
        if self.end_s <= self.start_s {
            return Err(format!("end_s {} must exceed start_s {}", self.end_s, self.start_s));
        }
        match (self.kind, self.vowel_label) {
            (SegmentKind::Vowel, None) => Err("vowel span without vowel_label".into()),
            (SegmentKind::Vowel, Some(_)) => Ok(()),
            (_, Some(_)) => Err(format!("vowel_label on a {} span", self.kind)),
            (_, None) => Ok(()),
        }
    }
}

/// Sample range `[start, end)` covered by a span at `rate`.
///
/// Bounds are rounded to the nearest sample so a `(1.0, 2.0)` span at 16 kHz
/// yields exactly 16,000 samples.
pub fn span_sample_range(span: &SegmentSpan, rate: u32) -> (usize, usize) {
    let start = (span.start_s * rate as f64).round() as usize;
    let end = (span.end_s * rate as f64).round() as usize;
    (start, end)
}

/// Copies the samples covered by `span` out of `buffer`.
pub fn slice(buffer: &AudioBuffer, span: &SegmentSpan) -> Result<AudioBuffer, SegmentError> {
    let duration_s = buffer.duration_s();
    let out_of_range = || SegmentError::SpanOutOfRange {
        start_s: span.start_s,
        end_s: span.end_s,
        duration_s,
    };
    if span.start_s < 0.0 || span.end_s <= span.start_s {
        return Err(out_of_range());
    }
    let (start, end) = span_sample_range(span, buffer.sample_rate_hz());
    // Allow half a sample of slack for bounds written with rounded decimals.
    if end > buffer.len() || span.end_s > duration_s + 0.5 / buffer.sample_rate_hz() as f64 {
        return Err(out_of_range());
    }
    let samples = buffer.samples()[start..end].to_vec();
    Ok(AudioBuffer::new(samples, buffer.sample_rate_hz(), buffer.source_id())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(len: usize) -> AudioBuffer {
        AudioBuffer::new((0..len).map(|i| i as f64 / len as f64).collect(), 16_000, "r").unwrap()
    }

    #[test]
    fn identity_slice() {
        let b = ramp(48_000);
        let s = slice(&b, &SegmentSpan::new(0.0, 3.0, SegmentKind::NeutralText)).unwrap();
        assert_eq!(s, b);
    }

    #[test]
    fn one_second_slice_has_rate_samples() {
        let b = ramp(48_000);
        let s = slice(&b, &SegmentSpan::new(1.0, 2.0, SegmentKind::NeutralText)).unwrap();
        assert_eq!(s.len(), 16_000);
        assert_eq!(s.samples(), &b.samples()[16_000..32_000]);
    }

    #[test]
    fn adjacent_slices_partition_the_region() {
        let b = ramp(48_000);
        let cuts = [0.25, 0.7, 1.33, 2.0, 2.9];
        let mut joined = Vec::new();
        for w in cuts.windows(2) {
            let s = slice(&b, &SegmentSpan::new(w[0], w[1], SegmentKind::PictureDescription)).unwrap();
            joined.extend_from_slice(s.samples());
        }
        let (a, _) = span_sample_range(&SegmentSpan::new(0.25, 1.0, SegmentKind::Vowel), 16_000);
        let (_, z) = span_sample_range(&SegmentSpan::new(0.0, 2.9, SegmentKind::Vowel), 16_000);
        assert_eq!(joined.as_slice(), &b.samples()[a..z]);
    }

    #[test]
    fn slice_out_of_range() {
        let b = ramp(16_000);
        assert!(matches!(
            slice(&b, &SegmentSpan::new(0.5, 1.5, SegmentKind::NeutralText)),
            Err(SegmentError::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn vowel_label_iff_vowel() {
        assert!(SegmentSpan::vowel(0.0, 1.0, Vowel::A).check().is_ok());
        assert!(SegmentSpan::new(0.0, 1.0, SegmentKind::Vowel).check().is_err());
        let mut s = SegmentSpan::new(0.0, 1.0, SegmentKind::NeutralText);
        s.vowel_label = Some(Vowel::O);
        assert!(s.check().is_err());
        assert!(SegmentSpan::new(1.0, 1.0, SegmentKind::NeutralText).check().is_err());
    }
}
