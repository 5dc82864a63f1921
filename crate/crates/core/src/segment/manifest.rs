use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SegmentError, SegmentSpan};

/// Alignment output for one recording: which intervals are utterances of what kind.
///
/// Stored as one JSON document per recording:
///
/// ```json
/// {
///   "recording_id": "s01/text",
///   "subject_id": "s01",
///   "duration_s": 12.5,
///   "spans": [
///     {"start_s": 0.4, "end_s": 2.9, "kind": "neutral_text", "text": "..."},
///     {"start_s": 3.0, "end_s": 3.4, "kind": "vowel", "vowel_label": "a"}
///   ]
/// }
/// ```
///
/// `duration_s` is optional; when present, spans are range-checked against it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentManifest {
    pub recording_id: String,
    pub subject_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    pub spans: Vec<SegmentSpan>,
}

impl SegmentManifest {
    /// Sorts spans by start and enforces every manifest invariant.
    pub fn validated(mut self, origin: &str) -> Result<Self, SegmentError> {
        let schema = |detail: String| SegmentError::SchemaViolation {
            path: origin.to_string(),
            detail,
        };
        if self.recording_id.trim().is_empty() {
            return Err(schema("recording_id is empty".into()));
        }
        if self.subject_id.trim().is_empty() {
            return Err(schema("subject_id is empty".into()));
        }
        for (i, span) in self.spans.iter().enumerate() {
            span.check().map_err(|d| schema(format!("spans[{i}]: {d}")))?;
        }
        self.spans
            .sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then(a.end_s.total_cmp(&b.end_s)));
        for w in self.spans.windows(2) {
            if w[1].start_s < w[0].end_s {
                return Err(SegmentError::OverlappingSpans {
                    recording_id: self.recording_id.clone(),
                    a_start: w[0].start_s,
                    a_end: w[0].end_s,
                    b_start: w[1].start_s,
                    b_end: w[1].end_s,
                });
            }
        }
        if let Some(d) = self.duration_s {
            self.check_within(d)?;
        }
        Ok(self)
    }

    /// Ensures every span ends inside a recording of `duration_s` seconds.
    pub fn check_within(&self, duration_s: f64) -> Result<(), SegmentError> {
        match self.spans.iter().find(|s| s.end_s > duration_s + 1e-9) {
            Some(s) => Err(SegmentError::SpanOutOfRange {
                start_s: s.start_s,
                end_s: s.end_s,
                duration_s,
            }),
            None => Ok(()),
        }
    }
}

pub fn parse_manifest(text: &str, origin: &str) -> Result<SegmentManifest, SegmentError> {
    let raw: SegmentManifest = serde_json::from_str(text).map_err(|e| SegmentError::SchemaViolation {
        path: origin.to_string(),
        detail: e.to_string(),
    })?;
    raw.validated(origin)
}

/// Reads, validates and sorts a manifest file.
pub fn ingest_manifest(path: impl AsRef<Path>) -> Result<SegmentManifest, SegmentError> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| SegmentError::Io {
        path: origin.clone(),
        source,
    })?;
    parse_manifest(&text, &origin)
}

/// Writes a manifest as pretty JSON with a trailing newline.
pub fn write_manifest(path: impl AsRef<Path>, manifest: &SegmentManifest) -> Result<(), SegmentError> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(path, text).map_err(|source| SegmentError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::SegmentKind;

    fn doc(spans: &str, duration: Option<f64>) -> String {
        let d = duration.map(|d| format!("\"duration_s\": {d},")).unwrap_or_default();
        format!(r#"{{"recording_id": "r1", "subject_id": "s1", {d} "spans": [{spans}]}}"#)
    }

    #[test]
    fn spans_come_back_sorted() {
        let text = doc(
            r#"{"start_s": 3.0, "end_s": 5.0, "kind": "neutral_text"},
               {"start_s": 0.0, "end_s": 2.5, "kind": "neutral_text"}"#,
            None,
        );
        let m = parse_manifest(&text, "mem").unwrap();
        assert_eq!(m.spans.len(), 2);
        assert_eq!(m.spans[0].start_s, 0.0);
        assert_eq!(m.spans[1].start_s, 3.0);
        assert_eq!(m.spans[0].kind, SegmentKind::NeutralText);
    }

    #[test]
    fn overlap_rejected() {
        let text = doc(
            r#"{"start_s": 0, "end_s": 2, "kind": "picture_description"},
               {"start_s": 1.5, "end_s": 3, "kind": "picture_description"}"#,
            None,
        );
        assert!(matches!(
            parse_manifest(&text, "mem"),
            Err(SegmentError::OverlappingSpans { .. })
        ));
    }

    #[test]
    fn out_of_range_rejected() {
        let text = doc(
            r#"{"start_s": 29.0, "end_s": 31.0, "kind": "neutral_text"}"#,
            Some(30.0),
        );
        assert!(matches!(
            parse_manifest(&text, "mem"),
            Err(SegmentError::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn schema_violations() {
        let missing_end = doc(r#"{"start_s": 0.0, "kind": "neutral_text"}"#, None);
        let bad_kind = doc(r#"{"start_s": 0.0, "end_s": 1.0, "kind": "song"}"#, None);
        let vowel_without_label = doc(r#"{"start_s": 0.0, "end_s": 1.0, "kind": "vowel"}"#, None);
        let empty_subject = r#"{"recording_id": "r", "subject_id": "", "spans": []}"#;
        for text in [
            missing_end.as_str(),
            bad_kind.as_str(),
            vowel_without_label.as_str(),
            empty_subject,
        ] {
            assert!(
                matches!(parse_manifest(text, "mem"), Err(SegmentError::SchemaViolation { .. })),
                "{text}"
            );
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = parse_manifest(
            &doc(
                r#"{"start_s": 0.1, "end_s": 0.4, "kind": "vowel", "vowel_label": "u"}"#,
                Some(1.0),
            ),
            "mem",
        )
        .unwrap();
        write_manifest(&p, &m).unwrap();
        assert_eq!(ingest_manifest(&p).unwrap(), m);
    }
}
