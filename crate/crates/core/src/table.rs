//! Shared CSV and aligned-text helpers for the emitted tables.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header: expected {expected:?}, found {found:?}")]
    Header { expected: Vec<String>, found: Vec<String> },
    #[error("malformed cell `{0}`")]
    BadCell(String),
}

pub fn write_csv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8 input")
}

/// Parses CSV text, checking the header, and returns the data rows.
pub fn read_csv(text: &str, header: &[&str]) -> Result<Vec<Vec<String>>, TableError> {
    let mut r = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(TableError::Header {
            expected: header.iter().map(|s| s.to_string()).collect(),
            found,
        });
    }
    r.records()
        .map(|rec| Ok(rec?.iter().map(str::to_string).collect()))
        .collect()
}

/// Renders a left-aligned first column and right-aligned remaining columns,
/// with a dashed rule under the header and, optionally, before row `rule_before`.
pub fn render_aligned(header: &[&str], rows: &[Vec<String>], rule_before: Option<usize>) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(
                |(i, (c, &w))| {
                    if i == 0 {
                        format!("{c:<w$}")
                    } else {
                        format!("{c:>w$}")
                    }
                },
            )
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let total = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    let rule = "-".repeat(total);
    let mut out = String::new();
    out.push_str(&line(header.to_vec()));
    out.push('\n');
    out.push_str(&rule);
    out.push('\n');
    for (i, r) in rows.iter().enumerate() {
        if rule_before == Some(i) {
            out.push_str(&rule);
            out.push('\n');
        }
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_quotes() {
        let rows = vec![vec!["a, b".to_string(), "1".to_string()]];
        let text = write_csv(&["x", "y"], &rows);
        assert_eq!(read_csv(&text, &["x", "y"]).unwrap(), rows);
        assert!(matches!(read_csv(&text, &["x", "z"]), Err(TableError::Header { .. })));
    }

    #[test]
    fn aligned_layout() {
        let t = render_aligned(
            &["Name", "v"],
            &[vec!["a".into(), "1.00".into()], vec!["Total".into(), "10.00".into()]],
            Some(1),
        );
        assert_eq!(
            t,
            "Name       v\n------------\na       1.00\n------------\nTotal  10.00\n"
        );
    }
}
