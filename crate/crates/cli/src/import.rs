//! JSON-lines bulk import: one record draft per line, the same fields as a
//! submission. Blank lines are skipped. Each line succeeds or fails on its
//! own and the report names failing lines by their 1-based number.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use revbib_core::domain::RecordDraft;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum LineOutcome {
    Submitted { record_id: i64, status: String },
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineReport {
    pub line: usize,
    #[serde(flatten)]
    pub outcome: LineOutcome,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportReport {
    pub submitted: usize,
    pub failed: usize,
    pub lines: Vec<LineReport>,
}

impl ImportReport {
    pub fn failures(&self) -> impl Iterator<Item = &LineReport> {
        self.lines
            .iter()
            .filter(|l| matches!(l.outcome, LineOutcome::Failed { .. }))
    }
}

pub fn parse_line(text: &str) -> Result<RecordDraft, String> {
    serde_json::from_str(text).map_err(|e| format!("malformed draft: {e}"))
}

/// Feeds every non-blank line to `submit`, which returns the new record's
/// id and status. Only a read error stops the batch.
pub fn import_batch<R, F>(reader: R, mut submit: F) -> std::io::Result<ImportReport>
where
    R: BufRead,
    F: FnMut(&RecordDraft) -> Result<(i64, String), String>,
{
    let mut report = ImportReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let outcome = match parse_line(&line).and_then(|d| submit(&d)) {
            Ok((record_id, status)) => {
                report.submitted += 1;
                LineOutcome::Submitted { record_id, status }
            }
            Err(error) => {
                report.failed += 1;
                LineOutcome::Failed { error }
            }
        };
        report.lines.push(LineReport { line: idx + 1, outcome });
    }
    Ok(report)
}
