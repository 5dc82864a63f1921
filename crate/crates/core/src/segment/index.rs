use super::{SegmentKind, SegmentSpan};
use crate::table::{read_csv, write_csv, TableError};

pub const INDEX_HEADER: [&str; 8] = [
    "subject_id",
    "recording_id",
    "segment_id",
    "kind",
    "vowel_label",
    "start_s",
    "end_s",
    "text",
];

/// One row of a segment index: which recording a segment came from and where.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentRecord {
    pub subject_id: String,
    pub recording_id: String,
    pub segment_id: String,
    pub span: SegmentSpan,
}

impl SegmentRecord {
    pub fn kind(&self) -> SegmentKind {
        self.span.kind
    }
}

pub fn index_to_csv(records: &[SegmentRecord]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.subject_id.clone(),
                r.recording_id.clone(),
                r.segment_id.clone(),
                r.span.kind.as_str().to_string(),
                r.span.vowel_label.map(|v| v.as_str().to_string()).unwrap_or_default(),
                r.span.start_s.to_string(),
                r.span.end_s.to_string(),
                r.span.text.clone().unwrap_or_default(),
            ]
        })
        .collect();
    write_csv(&INDEX_HEADER, &rows)
}

pub fn index_from_csv(text: &str) -> Result<Vec<SegmentRecord>, TableError> {
    read_csv(text, &INDEX_HEADER)?
        .into_iter()
        .map(|row| {
            if row.len() != INDEX_HEADER.len() {
                return Err(TableError::BadCell(row.join(",")));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| TableError::BadCell(s.to_string()));
            let kind: SegmentKind = row[3].parse().map_err(TableError::BadCell)?;
            let vowel_label = match row[4].as_str() {
                "" => None,
                v => Some(v.parse().map_err(TableError::BadCell)?),
            };
            let span = SegmentSpan {
                start_s: num(&row[5])?,
                end_s: num(&row[6])?,
                kind,
                text: (!row[7].is_empty()).then(|| row[7].clone()),
                vowel_label,
            };
            span.check().map_err(TableError::BadCell)?;
            Ok(SegmentRecord {
                subject_id: row[0].clone(),
                recording_id: row[1].clone(),
                segment_id: row[2].clone(),
                span,
            })
        })
        .collect()
}
