//! Brute-force reference implementations. They share no code with the
//! service and favour the obvious computation over the efficient one.

use std::collections::{BTreeMap, BTreeSet};

use revbib_core::domain::{ArticleStatus, Event};

/// Hand-derived NRS for every (quality points, familiarity value) pair:
/// points * value / 9, written out to twelve places.
pub const NRS_TABLE: [(u32, u32, f64); 9] = [
    (1, 1, 0.111111111111),
    (1, 2, 0.222222222222),
    (1, 3, 0.333333333333),
    (2, 1, 0.222222222222),
    (2, 2, 0.444444444444),
    (2, 3, 0.666666666667),
    (3, 1, 0.333333333333),
    (3, 2, 0.666666666667),
    (3, 3, 1.0),
];

/// Score in percent: per-rating NRS, summed, divided by the number of
/// raters, times 100. Floating point at every step.
pub fn score_percent(pairs: &[(u32, u32)]) -> f64 {
    let nts: f64 = pairs.iter().map(|&(q, f)| (q as f64 * f as f64) / 9.0).sum();
    nts / pairs.len() as f64 * 100.0
}

/// Verdict key for consensus counting: `None` is "not a review".
pub type VerdictKey = Option<(String, String)>;

/// Decision after a sequence of evaluations: the single most common verdict,
/// provided it has at least `threshold` votes and no other verdict has as
/// many.
pub fn consensus(votes: &[VerdictKey], threshold: usize) -> Option<VerdictKey> {
    let mut counts: Vec<(VerdictKey, usize)> = Vec::new();
    for v in votes {
        match counts.iter_mut().find(|(k, _)| k == v) {
            Some((_, n)) => *n += 1,
            None => counts.push((v.clone(), 1)),
        }
    }
    let best = counts.iter().map(|(_, n)| *n).max()?;
    let leaders: Vec<_> = counts.iter().filter(|(_, n)| *n == best).collect();
    (best >= threshold && leaders.len() == 1).then(|| leaders[0].0.clone())
}

/// The lifecycle rules as prose turns them into a table: `None` means the
/// event is illegal.
pub fn next_status(
    scenario: u8,
    auto_decide: bool,
    current: ArticleStatus,
    event: Event,
) -> Option<ArticleStatus> {
    use ArticleStatus::*;
    let moderator = (3..=6).contains(&scenario);
    let social = [2, 4, 6].contains(&scenario);
    // Threshold decisions: always in scenario 2 (nobody else decides),
    // in 4/6 only when configured.
    let automatic = scenario == 2 || (social && moderator && auto_decide);
    if matches!(current, Approved | Rejected) {
        return None;
    }
    match event {
        Event::ModeratorApprove | Event::ModeratorReject => {
            let target = if event == Event::ModeratorApprove { Approved } else { Rejected };
            match current {
                PendingModeration if moderator => Some(target),
                PendingEvaluation if moderator && social && !auto_decide => Some(target),
                _ => None,
            }
        }
        Event::ModeratorOpenForEvaluation => {
            (current == PendingModeration && moderator && social).then_some(PendingEvaluation)
        }
        Event::ConsensusApprove => (current == PendingEvaluation && automatic).then_some(Approved),
        Event::ConsensusReject => (current == PendingEvaluation && automatic).then_some(Rejected),
    }
}

pub fn initial(scenario: u8) -> ArticleStatus {
    match scenario {
        1 => ArticleStatus::Approved,
        2 => ArticleStatus::PendingEvaluation,
        _ => ArticleStatus::PendingModeration,
    }
}

/// user -> item -> rating points (quality * familiarity).
pub type Matrix = BTreeMap<i64, BTreeMap<i64, u32>>;

fn cosine(a: &BTreeMap<i64, u32>, b: &BTreeMap<i64, u32>) -> f64 {
    let common: Vec<i64> = a.keys().filter(|k| b.contains_key(k)).copied().collect();
    if common.is_empty() {
        return 0.0;
    }
    let xs: Vec<f64> = common.iter().map(|k| a[k] as f64).collect();
    let ys: Vec<f64> = common.iter().map(|k| b[k] as f64).collect();
    let dot: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
    let nx: f64 = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let ny: f64 = ys.iter().map(|y| y * y).sum::<f64>().sqrt();
    dot / (nx * ny)
}

const TIE: f64 = 1e-9;

/// Sorts by score descending, treating scores within `TIE` as equal and
/// breaking those ties by id ascending.
fn rank(mut v: Vec<(i64, f64)>) -> Vec<(i64, f64)> {
    // Insertion sort so the tie rule is applied pairwise and literally.
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 {
            let (a, b) = (v[j - 1], v[j]);
            let b_first = if (a.1 - b.1).abs() <= TIE { b.0 < a.0 } else { b.1 > a.1 };
            if !b_first {
                break;
            }
            v.swap(j - 1, j);
            j -= 1;
        }
    }
    v
}

/// User-based CF: the `k` most similar users with similarity above zero,
/// then a similarity-weighted mean of their NRS for each unrated candidate.
pub fn recommend(
    m: &Matrix,
    user: i64,
    candidates: &BTreeSet<i64>,
    k: usize,
    n: usize,
) -> Vec<(i64, f64)> {
    let Some(mine) = m.get(&user) else { return vec![] };
    if mine.is_empty() {
        return vec![];
    }
    let sims: Vec<(i64, f64)> = m
        .iter()
        .filter(|(v, _)| **v != user)
        .map(|(v, row)| (*v, cosine(mine, row)))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    let neighbors: Vec<(i64, f64)> = rank(sims).into_iter().take(k).collect();

    let mut preds = Vec::new();
    for &item in candidates {
        if mine.contains_key(&item) {
            continue;
        }
        let raters: Vec<(f64, f64)> = neighbors
            .iter()
            .filter_map(|(v, s)| m[v].get(&item).map(|p| (*s, *p as f64 / 9.0)))
            .collect();
        if raters.is_empty() {
            continue;
        }
        let num: f64 = raters.iter().map(|(s, r)| s * r).sum();
        let den: f64 = raters.iter().map(|(s, _)| s).sum();
        preds.push((item, num / den));
    }
    rank(preds).into_iter().take(n).collect()
}

/// One approved record as the corpus generator knows it.
#[derive(Debug, Clone)]
pub struct Paper {
    pub path: (String, String),
    pub year: i32,
    pub citations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubfieldFigures {
    pub paper_count: u64,
    pub year_min: Option<i32>,
    pub year_max: Option<i32>,
    pub total_citations: u64,
    pub avg_rating_score: Option<f64>,
    pub distinct_raters: u64,
}

/// Figures for one sub-field from approved papers and (user, paper) ->
/// points ratings.
pub fn subfield_figures(
    papers: &BTreeMap<i64, Paper>,
    ratings: &BTreeMap<(i64, i64), u32>,
    path: &(String, String),
) -> SubfieldFigures {
    let ids: Vec<i64> = papers
        .iter()
        .filter(|(_, p)| &p.path == path)
        .map(|(id, _)| *id)
        .collect();
    let mut scores = Vec::new();
    let mut raters = BTreeSet::new();
    for id in &ids {
        let pairs: Vec<u32> = ratings
            .iter()
            .filter(|((_, r), _)| r == id)
            .map(|((u, _), p)| {
                raters.insert(*u);
                *p
            })
            .collect();
        if !pairs.is_empty() {
            let mean_nrs = pairs.iter().map(|&p| p as f64 / 9.0).sum::<f64>() / pairs.len() as f64;
            scores.push(mean_nrs * 100.0);
        }
    }
    SubfieldFigures {
        paper_count: ids.len() as u64,
        year_min: ids.iter().map(|i| papers[i].year).min(),
        year_max: ids.iter().map(|i| papers[i].year).max(),
        total_citations: ids.iter().map(|i| papers[i].citations).sum(),
        avg_rating_score: (!scores.is_empty())
            .then(|| scores.iter().sum::<f64>() / scores.len() as f64),
        distinct_raters: raters.len() as u64,
    }
}
