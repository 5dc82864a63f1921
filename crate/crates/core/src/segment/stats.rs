use serde::{Deserialize, Serialize};

use super::{SegmentKind, SegmentSpan};
use crate::table::{self, TableError};

/// Duration summary of a group of segments.
///
/// The standard deviation is the population one (divides by `count`).
/// Location statistics are absent for an empty group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentStats {
    pub count: usize,
    pub mean_s: Option<f64>,
    pub std_s: Option<f64>,
    pub min_s: Option<f64>,
    pub max_s: Option<f64>,
    pub total_min: f64,
}

impl SegmentStats {
    pub fn from_durations(durations: &[f64]) -> Self {
        let count = durations.len();
        let total: f64 = durations.iter().sum();
        if count == 0 {
            return Self {
                count,
                mean_s: None,
                std_s: None,
                min_s: None,
                max_s: None,
                total_min: 0.0,
            };
        }
        let mean = total / count as f64;
        let var = durations.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / count as f64;
        Self {
            count,
            mean_s: Some(mean),
            std_s: Some(var.sqrt()),
            min_s: durations.iter().cloned().reduce(f64::min),
            max_s: durations.iter().cloned().reduce(f64::max),
            total_min: total / 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub label: String,
    pub stats: SegmentStats,
}

/// Rows in the order picture descriptions, neutral texts, vowels, then `Total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub rows: Vec<StatsRow>,
}

pub const TOTAL_LABEL: &str = "Total";

const CSV_HEADER: [&str; 7] = ["sample_type", "n_utt", "mean_s", "std_s", "min_s", "max_s", "total_min"];

const TEXT_HEADER: [&str; 7] = [
    "Sample Type",
    "# utt.",
    "mu [s]",
    "sigma [s]",
    "min [s]",
    "max [s]",
    "Sum dur. [m]",
];

pub fn segment_stats(spans: &[SegmentSpan], group_by_kind: bool) -> StatsTable {
    let mut rows = Vec::new();
    if group_by_kind {
        for kind in SegmentKind::ALL {
            let d: Vec<f64> = spans
                .iter()
                .filter(|s| s.kind == kind)
                .map(SegmentSpan::duration_s)
                .collect();
            rows.push(StatsRow {
                label: kind.table_label().to_string(),
                stats: SegmentStats::from_durations(&d),
            });
        }
    }
    let all: Vec<f64> = spans.iter().map(SegmentSpan::duration_s).collect();
    rows.push(StatsRow {
        label: TOTAL_LABEL.to_string(),
        stats: SegmentStats::from_durations(&all),
    });
    StatsTable { rows }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt2(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into())
}

impl StatsTable {
    /// Lossless CSV: full-precision numbers, empty cells for absent values.
    pub fn to_csv(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.label.clone(),
                    r.stats.count.to_string(),
                    opt(r.stats.mean_s),
                    opt(r.stats.std_s),
                    opt(r.stats.min_s),
                    opt(r.stats.max_s),
                    r.stats.total_min.to_string(),
                ]
            })
            .collect();
        table::write_csv(&CSV_HEADER, &rows)
    }

    pub fn from_csv(text: &str) -> Result<Self, TableError> {
        let cells = table::read_csv(text, &CSV_HEADER)?;
        let num = |s: &str| -> Result<Option<f64>, TableError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| TableError::BadCell(s.to_string()))
            }
        };
        let rows = cells
            .into_iter()
            .map(|c| {
                Ok(StatsRow {
                    label: c[0].clone(),
                    stats: SegmentStats {
                        count: c[1].parse().map_err(|_| TableError::BadCell(c[1].clone()))?,
                        mean_s: num(&c[2])?,
                        std_s: num(&c[3])?,
                        min_s: num(&c[4])?,
                        max_s: num(&c[5])?,
                        total_min: num(&c[6])?.ok_or_else(|| TableError::BadCell(String::new()))?,
                    },
                })
            })
            .collect::<Result<_, TableError>>()?;
        Ok(Self { rows })
    }

    /// Aligned plain-text rendering with two decimals, `-` for absent values.
    pub fn to_text(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.label.clone(),
                    r.stats.count.to_string(),
                    opt2(r.stats.mean_s),
                    opt2(r.stats.std_s),
                    opt2(r.stats.min_s),
                    opt2(r.stats.max_s),
                    format!("{:.2}", r.stats.total_min),
                ]
            })
            .collect();
        let rule_before = self.rows.len().checked_sub(1).filter(|&i| i > 0);
        table::render_aligned(&TEXT_HEADER, &rows, rule_before)
    }
}
