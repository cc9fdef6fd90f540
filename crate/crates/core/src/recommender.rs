//! User-based collaborative filtering over normalized rating scores.
//!
//! Similarity between two users is the cosine of their rating vectors
//! restricted to the articles both rated. The `k` most similar users with
//! similarity above the floor are the neighbors; an article's predicted
//! score is the similarity-weighted mean of the neighbors' normalized
//! scores for it.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{RecordId, UserId};
use crate::rating::NRS_DENOMINATOR;

/// users -> (article -> `points * value`, i.e. the NRS numerator over 9)
pub type RatingMatrix = BTreeMap<UserId, BTreeMap<RecordId, u32>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfParams {
    pub neighbors: usize,
    /// Neighbors need similarity strictly above this.
    pub min_similarity: f64,
}

impl Default for CfParams {
    fn default() -> Self {
        CfParams {
            neighbors: 10,
            min_similarity: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub record_id: RecordId,
    pub predicted_score: f64,
}

/// Scores that agree to this many decimal places rank as ties.
const RANK_SCALE: f64 = 1e10;

pub fn rank_key(score: f64) -> i64 {
    (score * RANK_SCALE).round() as i64
}

pub fn cosine_similarity(a: &BTreeMap<RecordId, u32>, b: &BTreeMap<RecordId, u32>) -> f64 {
    let (mut dot, mut norm_a, mut norm_b) = (0u64, 0u64, 0u64);
    for (item, &x) in a {
        if let Some(&y) = b.get(item) {
            let (x, y) = (u64::from(x), u64::from(y));
            dot += x * y;
            norm_a += x * x;
            norm_b += y * y;
        }
    }
    if dot == 0 {
        return 0.0;
    }
    dot as f64 / ((norm_a as f64) * (norm_b as f64)).sqrt()
}

/// Top-`n` unrated articles for `user`. Only articles in `candidates` are
/// eligible. Ties on score go to the smaller record id.
pub fn recommend(
    matrix: &RatingMatrix,
    user: UserId,
    candidates: &BTreeSet<RecordId>,
    n: usize,
    params: &CfParams,
) -> Vec<ScoredItem> {
    let Some(mine) = matrix.get(&user).filter(|m| !m.is_empty()) else {
        return Vec::new();
    };

    let mut neighbors: Vec<(UserId, f64)> = matrix
        .iter()
        .filter(|(other, _)| **other != user)
        .map(|(other, theirs)| (*other, cosine_similarity(mine, theirs)))
        .filter(|(_, sim)| *sim > params.min_similarity)
        .collect();
    neighbors.sort_by(|a, b| rank_key(b.1).cmp(&rank_key(a.1)).then(a.0.cmp(&b.0)));
    neighbors.truncate(params.neighbors);

    let mut sums: BTreeMap<RecordId, (f64, f64)> = BTreeMap::new();
    for (neighbor, sim) in &neighbors {
        for (item, &points) in &matrix[neighbor] {
            if mine.contains_key(item) || !candidates.contains(item) {
                continue;
            }
            let nrs = f64::from(points) / f64::from(NRS_DENOMINATOR);
            let entry = sums.entry(*item).or_insert((0.0, 0.0));
            entry.0 += sim * nrs;
            entry.1 += sim;
        }
    }

    let mut items: Vec<ScoredItem> = sums
        .into_iter()
        .map(|(record_id, (num, den))| ScoredItem {
            record_id,
            predicted_score: num / den,
        })
        .collect();
    items.sort_by(|a, b| {
        rank_key(b.predicted_score)
            .cmp(&rank_key(a.predicted_score))
            .then(a.record_id.cmp(&b.record_id))
    });
    items.truncate(n);
    items
}
