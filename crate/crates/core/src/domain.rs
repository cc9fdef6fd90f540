//! Entities shared by every deployment scenario and the article lifecycle.
//!
//! A record enters the system in a status decided by the running scenario
//! ([`initial_status`]) and moves only through [`transition`]. `Approved` and
//! `Rejected` are terminal.

use std::fmt;

use chrono::{DateTime, Datelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type RecordId = i64;
pub type UserId = i64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArticleStatus {
    PendingModeration,
    PendingEvaluation,
    Approved,
    Rejected,
}

impl ArticleStatus {
    pub const ALL: [ArticleStatus; 4] = [
        ArticleStatus::PendingModeration,
        ArticleStatus::PendingEvaluation,
        ArticleStatus::Approved,
        ArticleStatus::Rejected,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, ArticleStatus::Approved | ArticleStatus::Rejected)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ArticleStatus::PendingModeration => "pending_moderation",
            ArticleStatus::PendingEvaluation => "pending_evaluation",
            ArticleStatus::Approved => "approved",
            ArticleStatus::Rejected => "rejected",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Integrity(format!("unknown article status {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    AssociateUser,
    Moderator,
}

impl Role {
    /// Associate users only exist without a moderator (scenarios 1-2);
    /// moderators only in scenarios 3-6.
    pub fn exists_in(self, scenario: Scenario) -> bool {
        match self {
            Role::User => true,
            Role::AssociateUser => !scenario.has_moderator(),
            Role::Moderator => scenario.has_moderator(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "user",
            Role::AssociateUser => "associate_user",
            Role::Moderator => "moderator",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(Role::User),
            "associate_user" => Ok(Role::AssociateUser),
            "moderator" => Ok(Role::Moderator),
            other => Err(Error::validation(format!("unknown role {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Private,
    Public,
}

/// Deployment scenario number, always in `1..=6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Scenario(u8);

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario(1),
        Scenario(2),
        Scenario(3),
        Scenario(4),
        Scenario(5),
        Scenario(6),
    ];

    pub fn new(n: u8) -> Result<Self> {
        if (1..=6).contains(&n) {
            Ok(Scenario(n))
        } else {
            Err(Error::Config(format!("scenario must be 1-6, got {n}")))
        }
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn environment(self) -> Environment {
        if self.0 <= 4 {
            Environment::Private
        } else {
            Environment::Public
        }
    }

    pub fn has_moderator(self) -> bool {
        self.0 >= 3
    }

    pub fn has_social_evaluation(self) -> bool {
        matches!(self.0, 2 | 4 | 6)
    }
}

impl TryFrom<u8> for Scenario {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        Scenario::new(n)
    }
}

impl From<Scenario> for u8 {
    fn from(s: Scenario) -> u8 {
        s.0
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const DEFAULT_CONSENSUS_THRESHOLD: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub consensus_threshold: u32,
    /// Threshold auto-decision instead of moderator review of evaluations.
    /// Only meaningful in scenarios 4 and 6; scenario 2 always decides
    /// automatically because nobody else can.
    pub auto_decide: bool,
    pub areas: Vec<String>,
}

impl ScenarioConfig {
    pub fn new(scenario: u8) -> Result<Self> {
        Ok(ScenarioConfig {
            scenario: Scenario::new(scenario)?,
            consensus_threshold: DEFAULT_CONSENSUS_THRESHOLD,
            auto_decide: true,
            areas: Vec::new(),
        })
    }

    pub fn with_threshold(mut self, threshold: u32) -> Result<Self> {
        if threshold == 0 {
            return Err(Error::Config("consensus_threshold must be >= 1".into()));
        }
        self.consensus_threshold = threshold;
        Ok(self)
    }

    pub fn with_auto_decide(mut self, auto_decide: bool) -> Self {
        self.auto_decide = auto_decide;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.consensus_threshold == 0 {
            return Err(Error::Config("consensus_threshold must be >= 1".into()));
        }
        Ok(())
    }

    pub fn environment(&self) -> Environment {
        self.scenario.environment()
    }

    /// Whether reaching the threshold decides a record without a moderator.
    pub fn consensus_is_automatic(&self) -> bool {
        match self.scenario.number() {
            2 => true,
            4 | 6 => self.auto_decide,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Event {
    ModeratorApprove,
    ModeratorReject,
    ModeratorOpenForEvaluation,
    ConsensusApprove,
    ConsensusReject,
}

impl Event {
    pub const ALL: [Event; 5] = [
        Event::ModeratorApprove,
        Event::ModeratorReject,
        Event::ModeratorOpenForEvaluation,
        Event::ConsensusApprove,
        Event::ConsensusReject,
    ];
}

pub fn initial_status(config: &ScenarioConfig) -> ArticleStatus {
    match config.scenario.number() {
        1 => ArticleStatus::Approved,
        2 => ArticleStatus::PendingEvaluation,
        _ => ArticleStatus::PendingModeration,
    }
}

pub fn transition(
    current: ArticleStatus,
    event: Event,
    config: &ScenarioConfig,
) -> Result<ArticleStatus> {
    use ArticleStatus::*;
    let scenario = config.scenario;
    let social = scenario.has_social_evaluation();

    let next = match (current, event) {
        (PendingModeration, Event::ModeratorApprove) if scenario.has_moderator() => Some(Approved),
        (PendingModeration, Event::ModeratorReject) if scenario.has_moderator() => Some(Rejected),
        (PendingModeration, Event::ModeratorOpenForEvaluation)
            if scenario.has_moderator() && social =>
        {
            Some(PendingEvaluation)
        }
        // Moderator review of collected evaluations (no threshold auto-decision).
        (PendingEvaluation, Event::ModeratorApprove)
            if scenario.has_moderator() && social && !config.auto_decide =>
        {
            Some(Approved)
        }
        (PendingEvaluation, Event::ModeratorReject)
            if scenario.has_moderator() && social && !config.auto_decide =>
        {
            Some(Rejected)
        }
        (PendingEvaluation, Event::ConsensusApprove) if config.consensus_is_automatic() => {
            Some(Approved)
        }
        (PendingEvaluation, Event::ConsensusReject) if config.consensus_is_automatic() => {
            Some(Rejected)
        }
        _ => None,
    };

    next.ok_or(Error::Transition {
        from: current,
        event,
        scenario: scenario.number(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaxonomyPath {
    pub field_id: String,
    pub subfield_id: String,
}

impl TaxonomyPath {
    pub fn new(field_id: impl Into<String>, subfield_id: impl Into<String>) -> Self {
        TaxonomyPath {
            field_id: field_id.into(),
            subfield_id: subfield_id.into(),
        }
    }
}

impl fmt::Display for TaxonomyPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.field_id, self.subfield_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BibRecord {
    pub record_id: RecordId,
    pub area_id: String,
    pub field_id: String,
    pub subfield_id: String,
    pub title: String,
    pub authors: Vec<String>,
    pub venue: String,
    pub year: i32,
    pub citation_count: Option<u64>,
    pub keywords: Vec<String>,
    #[serde(rename = "abstract")]
    pub abstract_text: Option<String>,
    pub doi: Option<String>,
    pub submitter_id: UserId,
    pub status: ArticleStatus,
    pub submitted_at: DateTime<Utc>,
    pub decided_at: Option<DateTime<Utc>>,
}

impl BibRecord {
    pub fn path(&self) -> TaxonomyPath {
        TaxonomyPath::new(&self.field_id, &self.subfield_id)
    }

    /// `decided_at` is present exactly when the status is terminal.
    pub fn is_consistent(&self) -> bool {
        self.status.is_terminal() == self.decided_at.is_some()
    }
}

/// A record as submitted by a user: everything except ids and lifecycle.
/// This is also one line of the JSON-lines bulk import format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordDraft {
    pub field_id: String,
    pub subfield_id: String,
    pub title: String,
    pub authors: Vec<String>,
    #[serde(default)]
    pub venue: String,
    pub year: i32,
    #[serde(default)]
    pub citation_count: Option<u64>,
    #[serde(default)]
    pub keywords: Vec<String>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub doi: Option<String>,
}

pub const MIN_YEAR: i32 = 1900;

impl RecordDraft {
    pub fn path(&self) -> TaxonomyPath {
        TaxonomyPath::new(&self.field_id, &self.subfield_id)
    }

    pub fn validate(&self, now: DateTime<Utc>) -> Result<()> {
        validate_fields(&self.title, &self.authors, self.year, now)
    }
}

fn validate_fields(title: &str, authors: &[String], year: i32, now: DateTime<Utc>) -> Result<()> {
    if title.trim().is_empty() {
        return Err(Error::validation("title must not be empty"));
    }
    if authors.is_empty() {
        return Err(Error::validation("at least one author is required"));
    }
    if authors.iter().any(|a| a.trim().is_empty()) {
        return Err(Error::validation("author names must not be empty"));
    }
    let max_year = now.year() + 1;
    if !(MIN_YEAR..=max_year).contains(&year) {
        return Err(Error::validation(format!(
            "year {year} outside {MIN_YEAR}..={max_year}"
        )));
    }
    Ok(())
}

/// Moderator edits applied before approval. Absent fields are left alone.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordEdits {
    #[serde(default)]
    pub field_id: Option<String>,
    #[serde(default)]
    pub subfield_id: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub authors: Option<Vec<String>>,
    #[serde(default)]
    pub venue: Option<String>,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub citation_count: Option<u64>,
    #[serde(default)]
    pub keywords: Option<Vec<String>>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub doi: Option<String>,
}

impl RecordEdits {
    pub fn is_empty(&self) -> bool {
        *self == RecordEdits::default()
    }

    pub fn apply(&self, record: &mut BibRecord, now: DateTime<Utc>) -> Result<()> {
        let mut edited = record.clone();
        if let Some(v) = &self.field_id {
            edited.field_id = v.clone();
        }
        if let Some(v) = &self.subfield_id {
            edited.subfield_id = v.clone();
        }
        if let Some(v) = &self.title {
            edited.title = v.clone();
        }
        if let Some(v) = &self.authors {
            edited.authors = v.clone();
        }
        if let Some(v) = &self.venue {
            edited.venue = v.clone();
        }
        if let Some(v) = self.year {
            edited.year = v;
        }
        if let Some(v) = self.citation_count {
            edited.citation_count = Some(v);
        }
        if let Some(v) = &self.keywords {
            edited.keywords = v.clone();
        }
        if let Some(v) = &self.abstract_text {
            edited.abstract_text = Some(v.clone());
        }
        if let Some(v) = &self.doi {
            edited.doi = Some(v.clone());
        }
        validate_fields(&edited.title, &edited.authors, edited.year, now)?;
        *record = edited;
        Ok(())
    }
}

/// Key used for duplicate detection: lowercase alphanumeric words joined by
/// single spaces.
pub fn normalized_title(title: &str) -> String {
    title
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}
