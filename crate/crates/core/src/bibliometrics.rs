//! Per-sub-field quantitative summaries.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{ArticleStatus, BibRecord, RecordId, TaxonomyPath, UserId};
use crate::error::Result;
use crate::rating::{overall_score, Rating};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BibliometricsSummary {
    pub area_id: String,
    pub field_id: String,
    pub subfield_id: String,
    pub paper_count: u64,
    pub year_min: Option<i32>,
    /// Also the most recent publication year in the sub-field.
    pub year_max: Option<i32>,
    pub total_citations: u64,
    /// Mean overall score (percent) over articles that have ratings.
    pub avg_rating_score: Option<f64>,
    /// Distinct users who rated any article in the sub-field.
    pub distinct_raters: u64,
    pub computed_at: DateTime<Utc>,
}

impl BibliometricsSummary {
    pub fn path(&self) -> TaxonomyPath {
        TaxonomyPath::new(&self.field_id, &self.subfield_id)
    }

    /// Equality ignoring `computed_at`.
    pub fn same_figures(&self, other: &BibliometricsSummary) -> bool {
        let mut a = self.clone();
        a.computed_at = other.computed_at;
        a == *other
    }
}

/// Aggregates the approved records found in `path`. `ratings` may include
/// ratings of other records; they are ignored.
pub fn summarize(
    area_id: &str,
    path: &TaxonomyPath,
    records: &[BibRecord],
    ratings: &[Rating],
    now: DateTime<Utc>,
) -> Result<BibliometricsSummary> {
    let mut members: Vec<&BibRecord> = records
        .iter()
        .filter(|r| r.status == ArticleStatus::Approved && r.path() == *path)
        .collect();
    members.sort_by_key(|r| r.record_id);

    let ids: BTreeSet<RecordId> = members.iter().map(|r| r.record_id).collect();
    let mut by_record: BTreeMap<RecordId, Vec<Rating>> = BTreeMap::new();
    let mut raters: BTreeSet<UserId> = BTreeSet::new();
    for rating in ratings.iter().filter(|r| ids.contains(&r.record_id)) {
        raters.insert(rating.user_id);
        by_record.entry(rating.record_id).or_default().push(rating.clone());
    }

    let mut score_sum = 0.0;
    let mut scored = 0u64;
    for group in by_record.values() {
        if let Some(v) = overall_score(group)?.value() {
            score_sum += v;
            scored += 1;
        }
    }

    Ok(BibliometricsSummary {
        area_id: area_id.to_string(),
        field_id: path.field_id.clone(),
        subfield_id: path.subfield_id.clone(),
        paper_count: members.len() as u64,
        year_min: members.iter().map(|r| r.year).min(),
        year_max: members.iter().map(|r| r.year).max(),
        total_citations: members.iter().map(|r| r.citation_count.unwrap_or(0)).sum(),
        avg_rating_score: (scored > 0).then(|| score_sum / scored as f64),
        distinct_raters: raters.len() as u64,
        computed_at: now,
    })
}
