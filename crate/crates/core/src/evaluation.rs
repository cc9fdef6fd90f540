//! Social evaluation of pending articles and threshold consensus.
//!
//! Each evaluation answers two nominal questions: is this a review/survey
//! article, and if so under which field/sub-field does it belong. Two
//! evaluations match when they agree on both answers; "not a review"
//! verdicts match on the first answer alone.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::domain::{RecordId, TaxonomyPath, UserId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evaluation {
    pub user_id: UserId,
    pub record_id: RecordId,
    pub is_review: bool,
    /// Required iff `is_review`.
    pub proposed: Option<TaxonomyPath>,
    pub submitted_at: DateTime<Utc>,
}

/// Wire shape of an evaluation submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluationInput {
    pub is_review: bool,
    #[serde(default)]
    pub field_id: Option<String>,
    #[serde(default)]
    pub subfield_id: Option<String>,
}

impl EvaluationInput {
    pub fn review(path: TaxonomyPath) -> Self {
        EvaluationInput {
            is_review: true,
            field_id: Some(path.field_id),
            subfield_id: Some(path.subfield_id),
        }
    }

    pub fn not_review() -> Self {
        EvaluationInput {
            is_review: false,
            field_id: None,
            subfield_id: None,
        }
    }

    pub fn verdict(&self) -> Result<Verdict> {
        match (self.is_review, &self.field_id, &self.subfield_id) {
            (true, Some(f), Some(s)) => Ok(Verdict::Review(TaxonomyPath::new(f, s))),
            (true, _, _) => Err(Error::validation(
                "a review verdict needs both field_id and subfield_id",
            )),
            (false, None, None) => Ok(Verdict::NotReview),
            (false, _, _) => Err(Error::validation(
                "a not-review verdict must not carry a classification",
            )),
        }
    }
}

/// The matching key of an evaluation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    NotReview,
    Review(TaxonomyPath),
}

impl Evaluation {
    pub fn verdict(&self) -> Verdict {
        match (&self.proposed, self.is_review) {
            (Some(path), true) => Verdict::Review(path.clone()),
            _ => Verdict::NotReview,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ConsensusOutcome {
    None,
    Approve(TaxonomyPath),
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusDecision {
    #[serde(flatten)]
    pub outcome: ConsensusOutcome,
    /// Size of the largest matching group.
    pub supporting_count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TallyRow {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub count: u64,
}

/// Matching groups, largest first; equal sizes ordered by verdict.
pub fn tally(evaluations: &[Evaluation]) -> Vec<TallyRow> {
    let mut groups: BTreeMap<Verdict, u64> = BTreeMap::new();
    for e in evaluations {
        *groups.entry(e.verdict()).or_default() += 1;
    }
    let mut rows: Vec<_> = groups
        .into_iter()
        .map(|(verdict, count)| TallyRow { verdict, count })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.verdict.cmp(&b.verdict)));
    rows
}

/// A unique largest group of at least `threshold` matching evaluations
/// decides; a tie for largest waits for more evaluations.
pub fn check_consensus(evaluations: &[Evaluation], threshold: u32) -> ConsensusDecision {
    let rows = tally(evaluations);
    let Some(top) = rows.first() else {
        return ConsensusDecision {
            outcome: ConsensusOutcome::None,
            supporting_count: 0,
        };
    };
    let tied = rows.get(1).is_some_and(|second| second.count == top.count);
    let outcome = if top.count >= u64::from(threshold) && !tied {
        match &top.verdict {
            Verdict::Review(path) => ConsensusOutcome::Approve(path.clone()),
            Verdict::NotReview => ConsensusOutcome::Reject,
        }
    } else {
        ConsensusOutcome::None
    };
    ConsensusDecision {
        outcome,
        supporting_count: top.count,
    }
}
