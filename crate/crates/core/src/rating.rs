//! Article rating: two 3-point scales and the overall percentage score.
//!
//! A single rating's normalized score is `quality points * familiarity value / 9`,
//! so it always lies in `[1/9, 1]`. An article's overall score is the sum of
//! those normalized scores divided by the number of raters, times 100.
//!
//! Scores are kept as an integer numerator (the sum of `points * value`)
//! plus the rater count, so aggregation is exact and the float is only
//! produced on the way out.

use chrono::{DateTime, Utc};
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::domain::{RecordId, UserId};
use crate::error::{Error, Result};

/// Denominator of a normalized rating score: max quality times max familiarity.
pub const NRS_DENOMINATOR: u32 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityLevel {
    Low = 1,
    Medium = 2,
    High = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamiliarityLevel {
    Low = 1,
    Moderate = 2,
    Expert = 3,
}

impl QualityLevel {
    pub const ALL: [QualityLevel; 3] = [QualityLevel::Low, QualityLevel::Medium, QualityLevel::High];

    pub fn points(self) -> u32 {
        self as u32
    }

    pub fn from_points(points: u32) -> Result<Self> {
        match points {
            1 => Ok(QualityLevel::Low),
            2 => Ok(QualityLevel::Medium),
            3 => Ok(QualityLevel::High),
            p => Err(Error::validation(format!("quality points must be 1-3, got {p}"))),
        }
    }
}

impl FamiliarityLevel {
    pub const ALL: [FamiliarityLevel; 3] = [
        FamiliarityLevel::Low,
        FamiliarityLevel::Moderate,
        FamiliarityLevel::Expert,
    ];

    pub fn value(self) -> u32 {
        self as u32
    }

    pub fn from_value(value: u32) -> Result<Self> {
        match value {
            1 => Ok(FamiliarityLevel::Low),
            2 => Ok(FamiliarityLevel::Moderate),
            3 => Ok(FamiliarityLevel::Expert),
            v => Err(Error::validation(format!("familiarity value must be 1-3, got {v}"))),
        }
    }
}

/// Numerator of the normalized rating score (over [`NRS_DENOMINATOR`]).
pub fn nrs_points(quality: QualityLevel, familiarity: FamiliarityLevel) -> u32 {
    quality.points() * familiarity.value()
}

pub fn nrs(quality: QualityLevel, familiarity: FamiliarityLevel) -> f64 {
    f64::from(nrs_points(quality, familiarity)) / f64::from(NRS_DENOMINATOR)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub user_id: UserId,
    pub record_id: RecordId,
    pub quality: QualityLevel,
    pub familiarity: FamiliarityLevel,
    pub rated_at: DateTime<Utc>,
}

impl Rating {
    pub fn nrs_points(&self) -> u32 {
        nrs_points(self.quality, self.familiarity)
    }
}

/// Overall rating score of one article.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScorePercent {
    total_points: u64,
    rating_count: u64,
}

impl ScorePercent {
    pub const EMPTY: ScorePercent = ScorePercent {
        total_points: 0,
        rating_count: 0,
    };

    /// `total_points` is the sum of `points * value` over all ratings.
    pub fn from_parts(total_points: u64, rating_count: u64) -> Result<Self> {
        let max = rating_count * u64::from(NRS_DENOMINATOR);
        if total_points < rating_count || total_points > max {
            return Err(Error::Integrity(format!(
                "score numerator {total_points} impossible for {rating_count} ratings"
            )));
        }
        Ok(ScorePercent {
            total_points,
            rating_count,
        })
    }

    pub fn total_points(&self) -> u64 {
        self.total_points
    }

    pub fn rating_count(&self) -> u64 {
        self.rating_count
    }

    /// Percentage in `[100/9, 100]`, or `None` when nobody has rated.
    pub fn value(&self) -> Option<f64> {
        (self.rating_count > 0).then(|| {
            (self.total_points as f64 * 100.0)
                / (self.rating_count as f64 * f64::from(NRS_DENOMINATOR))
        })
    }

    /// Two-decimal rendering, e.g. `"83.33"`.
    pub fn display(&self) -> Option<String> {
        self.value().map(|v| format!("{v:.2}"))
    }
}

impl Serialize for ScorePercent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut s = serializer.serialize_struct("ScorePercent", 3)?;
        s.serialize_field("value", &self.value())?;
        s.serialize_field("display", &self.display())?;
        s.serialize_field("rating_count", &self.rating_count)?;
        s.end()
    }
}

pub fn overall_score(ratings: &[Rating]) -> Result<ScorePercent> {
    let Some(first) = ratings.first() else {
        return Ok(ScorePercent::EMPTY);
    };
    if let Some(other) = ratings.iter().find(|r| r.record_id != first.record_id) {
        return Err(Error::validation(format!(
            "ratings span records {} and {}",
            first.record_id, other.record_id
        )));
    }
    let total: u64 = ratings.iter().map(|r| u64::from(r.nrs_points())).sum();
    ScorePercent::from_parts(total, ratings.len() as u64)
}
