use super::{AblationColumn, AblationResult, Aggregation, ExperimentReport, SpeechScope};
use crate::cohort::MetadataLadderLevel;
use crate::table::{self, TableError};

const TABLE2_CSV_HEADER: [&str; 6] = [
    "metadata_level",
    "only_metadata",
    "all_speech",
    "picture_description",
    "neutral_texts",
    "vowels",
];

const SPEECH_CSV_HEADER: [&str; 5] = ["feature_source", "all", "picture_description", "neutral_text", "vowels"];

fn score(report: &ExperimentReport, granularity: Aggregation) -> f64 {
    match granularity {
        Aggregation::Segment => report.balanced_accuracy_segment,
        Aggregation::SubjectMajority => report.balanced_accuracy_subject,
    }
}

fn parse_cell(s: &str) -> Result<f64, TableError> {
    s.parse().map_err(|_| TableError::BadCell(s.to_string()))
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

/// Balanced accuracy per metadata level (rows F1..F10) and column.
#[derive(Debug, Clone, PartialEq)]
pub struct Table2 {
    pub rows: Vec<(MetadataLadderLevel, [f64; 5])>,
}

impl Table2 {
    pub fn from_ablation(result: &AblationResult, granularity: Aggregation) -> Self {
        let rows = MetadataLadderLevel::all()
            .map(|level| {
                let mut vals = [f64::NAN; 5];
                for (v, col) in vals.iter_mut().zip(AblationColumn::ALL) {
                    if let Some(cell) = result.cell(level, col) {
                        *v = score(&cell.report, granularity);
                    }
                }
                (level, vals)
            })
            .collect();
        Self { rows }
    }

    /// Full-precision CSV that parses back to the same table.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(l, v)| {
                std::iter::once(l.to_string())
                    .chain(v.iter().map(f64::to_string))
                    .collect()
            })
            .collect();
        table::write_csv(&TABLE2_CSV_HEADER, &rows)
    }

    pub fn from_csv(text: &str) -> Result<Self, TableError> {
        let rows = table::read_csv(text, &TABLE2_CSV_HEADER)?
            .into_iter()
            .map(|c| {
                let level = c[0].parse().map_err(|_| TableError::BadCell(c[0].clone()))?;
                let mut vals = [0.0; 5];
                for (v, s) in vals.iter_mut().zip(&c[1..]) {
                    *v = parse_cell(s)?;
                }
                Ok((level, vals))
            })
            .collect::<Result<_, TableError>>()?;
        Ok(Self { rows })
    }

    /// Aligned text with percentages to one decimal.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Metadata"];
        header.extend(AblationColumn::ALL.iter().map(|c| c.label()));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(l, v)| {
                std::iter::once(l.row_label().to_string())
                    .chain(v.iter().map(|&x| pct(x)))
                    .collect()
            })
            .collect();
        table::render_aligned(&header, &rows, None)
    }
}

/// Speech-only balanced accuracy per feature source and scope, the data
/// behind a per-category comparison plot.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeechTable {
    pub rows: Vec<(String, [f64; 4])>,
}

impl SpeechTable {
    /// Groups reports by feature source (first-seen order); missing cells are NaN.
    pub fn from_reports(reports: &[ExperimentReport], granularity: Aggregation) -> Self {
        let mut rows: Vec<(String, [f64; 4])> = Vec::new();
        for r in reports {
            let source = r.config.feature_source.to_string();
            let i = match rows.iter().position(|row| row.0 == source) {
                Some(i) => i,
                None => {
                    rows.push((source, [f64::NAN; 4]));
                    rows.len() - 1
                }
            };
            let col = SpeechScope::ALL
                .iter()
                .position(|&s| s == r.config.speech_scope)
                .expect("known scope");
            rows[i].1[col] = score(r, granularity);
        }
        Self { rows }
    }

    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(s, v)| std::iter::once(s.clone()).chain(v.iter().map(f64::to_string)).collect())
            .collect();
        table::write_csv(&SPEECH_CSV_HEADER, &rows)
    }

    pub fn from_csv(text: &str) -> Result<Self, TableError> {
        let rows = table::read_csv(text, &SPEECH_CSV_HEADER)?
            .into_iter()
            .map(|c| {
                let mut vals = [0.0; 4];
                for (v, s) in vals.iter_mut().zip(&c[1..]) {
                    *v = parse_cell(s)?;
                }
                Ok((c[0].clone(), vals))
            })
            .collect::<Result<_, TableError>>()?;
        Ok(Self { rows })
    }

    pub fn to_text(&self) -> String {
        let mut header = vec!["Features"];
        header.extend(SpeechScope::ALL.iter().map(|s| s.column_label()));
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|(s, v)| std::iter::once(s.clone()).chain(v.iter().map(|&x| pct(x))).collect())
            .collect();
        table::render_aligned(&header, &rows, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table2 {
        Table2 {
            rows: MetadataLadderLevel::all()
                .map(|l| {
                    let k = l.level() as f64;
                    (l, [0.5 + k / 40.0, 0.6, 2.0 / 3.0, 0.55 + k / 100.0, 1.0])
                })
                .collect(),
        }
    }

    #[test]
    fn table2_round_trips() {
        let t = sample();
        assert_eq!(Table2::from_csv(&t.to_csv()).unwrap(), t);
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.starts_with("metadata_level,only_metadata,all_speech,picture_description,neutral_texts,vowels\n"));
    }

    #[test]
    fn table2_text_layout() {
        let text = sample().to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 12);
        assert!(lines[0].starts_with("Metadata"));
        assert!(lines[0].ends_with("Only Metadata  All Speech  Pic. Desc.  Neut. Texts  Vowels"));
        assert!(lines[2].starts_with("Demographics (F1)"));
        assert!(lines[2].ends_with("100.0"));
        assert!(lines[11].starts_with("F9 + BDI (F10)"));
        assert!(lines[3].contains("66.7"));
    }

    #[test]
    fn speech_table_round_trips() {
        let t = SpeechTable {
            rows: vec![
                ("compact_functionals".into(), [0.5, 0.6, 0.7, 0.662]),
                ("embedding:w2v".into(), [0.1, 0.2, 0.3, 1.0 / 3.0]),
            ],
        };
        assert_eq!(SpeechTable::from_csv(&t.to_csv()).unwrap(), t);
        assert!(t.to_text().contains("66.2"));
    }
}
