//! The bibliographic service: every user and admin operation, gated by
//! authentication, the scenario's capability matrix, and role, in that
//! order. Nothing is written before all three checks pass.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, PoisonError, RwLock};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::auth::{
    self, check_verifier, make_verifier, new_token, token_fingerprint, AuthToken, ProfileChanges,
    Registration, UserProfile,
};
use crate::bibliometrics::{summarize, BibliometricsSummary};
use crate::capability::{privileged_role, CapabilityMatrix, Functionality};
use crate::clock::Clock;
use crate::config::ServiceConfig;
use crate::domain::{
    initial_status, transition, ArticleStatus, BibRecord, Event, RecordDraft, RecordEdits,
    RecordId, Role, ScenarioConfig, TaxonomyPath, UserId,
};
use crate::error::{Error, Result};
use crate::evaluation::{
    check_consensus, tally, ConsensusDecision, ConsensusOutcome, Evaluation, EvaluationInput,
    TallyRow, Verdict,
};
use crate::metrics::{LoadMetrics, LoadSnapshot};
use crate::rating::{overall_score, FamiliarityLevel, QualityLevel, Rating, ScorePercent};
use crate::recommender::{recommend, RatingMatrix, ScoredItem};
use crate::store::{area_files, AreaStore, AreaTx, TokenRow, UserStore};
use crate::taxonomy::{AreaSeed, SubfieldAction, TaxonomyArea};

pub const DEFAULT_PAGE_SIZE: u32 = 50;
pub const MAX_PAGE_SIZE: u32 = 500;

/// 1-based page number and page size. Sizes above the maximum are clamped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    #[serde(default = "first_page")]
    pub page: u32,
    #[serde(default = "default_page_size")]
    pub page_size: u32,
}

fn first_page() -> u32 {
    1
}
fn default_page_size() -> u32 {
    DEFAULT_PAGE_SIZE
}

impl Default for Page {
    fn default() -> Self {
        Page {
            page: 1,
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

impl Page {
    /// `(limit, offset)`.
    fn window(self) -> Result<(u64, u64)> {
        if self.page == 0 || self.page_size == 0 {
            return Err(Error::validation("page and page_size start at 1"));
        }
        let size = u64::from(self.page_size.min(MAX_PAGE_SIZE));
        Ok((size, (u64::from(self.page) - 1) * size))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AreaInfo {
    pub area_id: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordView {
    pub record: BibRecord,
    pub score: ScorePercent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingInput {
    pub quality: QualityLevel,
    pub familiarity: FamiliarityLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user_id: UserId,
    pub area_id: String,
    pub items: Vec<ScoredItem>,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub decision: ConsensusDecision,
    /// Whether this evaluation moved the record to a terminal state.
    pub decided: bool,
    pub record: BibRecord,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case", deny_unknown_fields)]
pub enum Decision {
    /// Approve, optionally after correcting the record.
    Approve {
        #[serde(default)]
        edits: Option<RecordEdits>,
    },
    Reject {
        #[serde(default)]
        reason: Option<String>,
    },
    OpenForEvaluation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PendingKind {
    Moderation,
    Evaluation,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub q: String,
    #[serde(default)]
    pub area: Option<String>,
    #[serde(default)]
    pub field: Option<String>,
    #[serde(default)]
    pub subfield: Option<String>,
    #[serde(default)]
    pub year_from: Option<i32>,
    #[serde(default)]
    pub year_to: Option<i32>,
    #[serde(default)]
    pub page: Option<u32>,
    #[serde(default)]
    pub page_size: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub matches: u32,
    pub record: BibRecord,
}

/// An authenticated caller.
#[derive(Debug, Clone)]
pub struct Session {
    pub user: UserProfile,
    /// The stored role if it exists in the running scenario, else `User`.
    pub role: Role,
    token_hash: String,
}

/// Lowercase alphanumeric terms.
pub fn search_terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// Occurrences of any query term among the record's title, keyword, and
/// abstract terms.
pub fn match_count(record: &BibRecord, terms: &BTreeSet<String>) -> u32 {
    let keywords = record.keywords.join(" ");
    let fields = [
        record.title.as_str(),
        keywords.as_str(),
        record.abstract_text.as_deref().unwrap_or(""),
    ];
    fields
        .iter()
        .flat_map(|f| search_terms(f))
        .filter(|t| terms.contains(t))
        .count() as u32
}

pub struct Bibliography {
    config: ServiceConfig,
    scenario: ScenarioConfig,
    capabilities: CapabilityMatrix,
    users: UserStore,
    areas: RwLock<BTreeMap<String, Arc<AreaStore>>>,
    area_creation: Mutex<()>,
    clock: Arc<dyn Clock>,
    metrics: LoadMetrics,
    /// Verifier checked against when the username is unknown, so both
    /// failure paths cost the same.
    decoy_verifier: String,
}

impl std::fmt::Debug for Bibliography {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Bibliography")
            .field("scenario", &self.scenario)
            .field("data_dir", &self.config.data_dir)
            .finish()
    }
}

fn refresh_summary(tx: &AreaTx<'_>, path: &TaxonomyPath, now: DateTime<Utc>) -> Result<()> {
    let records = tx.approved_in_path(path, i64::MAX as u64, 0)?;
    let mut ratings = Vec::new();
    for r in &records {
        ratings.extend(tx.ratings_for(r.record_id)?);
    }
    let summary = summarize(tx.area_id(), path, &records, &ratings, now)?;
    tx.put_summary(&summary)
}

fn load_seed(config: &ServiceConfig, area_id: &str) -> Result<AreaSeed> {
    match config.seeds.get(area_id) {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("seed {}: {e}", path.display())))?;
            AreaSeed::from_toml_str(&text)
        }
        None if area_id == "computing" => Ok(AreaSeed::computing()),
        None => Err(Error::Config(format!(
            "area {area_id:?} has no store and no seed file"
        ))),
    }
}

impl Bibliography {
    /// Opens every area store in the data directory and creates configured
    /// areas that do not exist yet. The directory is created if missing.
    pub fn open(config: ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        config.validate()?;
        let scenario = config.scenario_config()?;
        std::fs::create_dir_all(&config.data_dir)?;
        let users = UserStore::open(&config.data_dir)?;
        users.atomic(|tx| {
            for user in tx.all()? {
                if let Some(role) = config.roles.role_for(&user.username) {
                    if role != user.role {
                        tx.set_role(user.user_id, role)?;
                    }
                }
            }
            Ok(())
        })?;

        let mut areas = BTreeMap::new();
        for id in area_files(&config.data_dir)? {
            let store = AreaStore::open(&config.data_dir, &id)?;
            areas.insert(id, Arc::new(store));
        }
        let now = clock.now();
        for id in &config.areas {
            if areas.contains_key(id) {
                continue;
            }
            let tree = TaxonomyArea::from_seed(&load_seed(&config, id)?)?;
            if tree.area_id != *id {
                return Err(Error::Config(format!(
                    "seed for {id:?} names area {:?}",
                    tree.area_id
                )));
            }
            let store = Self::create_area_store(&config.data_dir, &tree, None, now)?;
            areas.insert(id.clone(), Arc::new(store));
        }

        let decoy_verifier = make_verifier(&"0".repeat(auth::DIGEST_HEX_LEN), config.verifier_iterations);
        Ok(Bibliography {
            capabilities: CapabilityMatrix::for_config(&scenario),
            scenario,
            users,
            areas: RwLock::new(areas),
            area_creation: Mutex::new(()),
            clock,
            metrics: LoadMetrics::default(),
            decoy_verifier,
            config,
        })
    }

    fn create_area_store(
        data_dir: &Path,
        tree: &TaxonomyArea,
        request_id: Option<&str>,
        now: DateTime<Utc>,
    ) -> Result<AreaStore> {
        let store = AreaStore::create(data_dir, tree, request_id)?;
        store.atomic(|tx| {
            for path in tree.paths() {
                refresh_summary(tx, &path, now)?;
            }
            Ok(())
        })?;
        Ok(store)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    pub fn capabilities(&self) -> CapabilityMatrix {
        self.capabilities.clone()
    }

    /// Direct store access for maintenance tooling.
    pub fn area_store(&self, area_id: &str) -> Result<Arc<AreaStore>> {
        self.areas
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .get(area_id)
            .cloned()
            .ok_or_else(|| Error::not_found(format!("area {area_id:?}")))
    }

    pub fn user_store(&self) -> &UserStore {
        &self.users
    }

    fn all_area_stores(&self) -> Vec<Arc<AreaStore>> {
        self.areas
            .read()
            .unwrap_or_else(PoisonError::into_inner)
            .values()
            .cloned()
            .collect()
    }

    fn effective_role(&self, stored: Role) -> Role {
        if stored.exists_in(self.scenario.scenario) {
            stored
        } else {
            Role::User
        }
    }

    // ---- authentication ----

    pub fn authenticate(&self, token: &str) -> Result<Session> {
        let hash = token_fingerprint(token);
        let now = self.clock.now();
        let (row, user) = self.users.read(|tx| {
            let Some(row) = tx.token(&hash)? else {
                return Ok((None, None));
            };
            let user = tx.by_id(row.user_id)?;
            Ok((Some(row), user))
        })?;
        match (row, user) {
            (Some(row), Some(user)) if now < row.expires_at => Ok(Session {
                role: self.effective_role(user.role),
                user,
                token_hash: hash,
            }),
            _ => Err(Error::Unauthorized),
        }
    }

    /// Authentication, then capability, then role.
    fn gate(&self, token: &str, f: Functionality) -> Result<Session> {
        let session = self.authenticate(token)?;
        f.ensure(self.scenario.scenario)?;
        if let Some(required) = f.required_role(self.scenario.scenario) {
            if session.role != required {
                return Err(Error::Forbidden(format!(
                    "{f} requires the {} role",
                    required.as_str()
                )));
            }
        }
        Ok(session)
    }

    /// Runs the access checks of `f` (or authentication alone) without
    /// doing anything, so transports can report access errors ahead of
    /// malformed input.
    pub fn authorize(&self, token: &str, f: Option<Functionality>) -> Result<Session> {
        match f {
            Some(f) => self.gate(token, f),
            None => self.authenticate(token),
        }
    }

    fn require_privileged(&self, session: &Session) -> Result<()> {
        let needed = privileged_role(self.scenario.scenario);
        if session.role == needed {
            Ok(())
        } else {
            Err(Error::Forbidden(format!("requires the {} role", needed.as_str())))
        }
    }

    pub fn register(&self, reg: Registration) -> Result<UserProfile> {
        auth::validate_username(&reg.username)?;
        auth::validate_digest(&reg.password_digest)?;
        auth::validate_email(&reg.email)?;
        let mut profile = UserProfile {
            user_id: 0,
            username: reg.username,
            first_name: reg.first_name,
            last_name: reg.last_name,
            email: reg.email,
            password_verifier: make_verifier(&reg.password_digest, self.config.verifier_iterations),
            role: Role::User,
            created_at: self.clock.now(),
            preferences: BTreeMap::new(),
        };
        if let Some(role) = self.config.roles.role_for(&profile.username) {
            profile.role = role;
        }
        profile.user_id = self.users.atomic(|tx| tx.insert(&profile))?;
        tracing::info!(user_id = profile.user_id, username = %profile.username, "registered");
        Ok(profile)
    }

    pub fn login(&self, username: &str, password_digest: &str) -> Result<AuthToken> {
        auth::validate_digest(password_digest)?;
        let user = self.users.read(|tx| tx.by_username(username))?;
        let verifier = user
            .as_ref()
            .map_or(self.decoy_verifier.as_str(), |u| u.password_verifier.as_str());
        let ok = check_verifier(password_digest, verifier);
        let user = match user {
            Some(u) if ok => u,
            _ => return Err(Error::Authentication),
        };
        let now = self.clock.now();
        let token = new_token();
        let row = TokenRow {
            token_hash: token_fingerprint(&token),
            user_id: user.user_id,
            issued_at: now,
            expires_at: now + Duration::seconds(self.config.token_ttl_secs as i64),
        };
        self.users.atomic(|tx| {
            tx.purge_expired(now)?;
            tx.insert_token(&row)
        })?;
        Ok(AuthToken {
            token,
            user_id: user.user_id,
            issued_at: row.issued_at,
            expires_at: row.expires_at,
        })
    }

    pub fn profile(&self, token: &str) -> Result<UserProfile> {
        Ok(self.authenticate(token)?.user)
    }

    /// A password change revokes every other token of the user.
    pub fn update_profile(&self, token: &str, changes: ProfileChanges) -> Result<UserProfile> {
        let session = self.authenticate(token)?;
        if let Some(d) = &changes.password_digest {
            auth::validate_digest(d)?;
        }
        if let Some(e) = &changes.email {
            auth::validate_email(e)?;
        }
        let verifier = changes
            .password_digest
            .as_deref()
            .map(|d| make_verifier(d, self.config.verifier_iterations));
        self.users.atomic(|tx| {
            let mut user = tx
                .by_id(session.user.user_id)?
                .ok_or(Error::Unauthorized)?;
            if let Some(email) = &changes.email {
                user.email = email.clone();
            }
            if let Some(prefs) = &changes.preferences {
                for (k, v) in prefs {
                    if v.is_empty() {
                        user.preferences.remove(k);
                    } else {
                        user.preferences.insert(k.clone(), v.clone());
                    }
                }
            }
            if let Some(v) = &verifier {
                user.password_verifier = v.clone();
                tx.revoke_other_tokens(user.user_id, &session.token_hash)?;
            }
            tx.update(&user)?;
            Ok(user)
        })
    }

    pub fn grant_role(&self, token: &str, username: &str, role: Role) -> Result<UserProfile> {
        let session = self.authenticate(token)?;
        self.require_privileged(&session)?;
        if !role.exists_in(self.scenario.scenario) {
            return Err(Error::validation(format!(
                "role {} does not exist in scenario {}",
                role.as_str(),
                self.scenario.scenario
            )));
        }
        self.users.atomic(|tx| {
            let mut user = tx
                .by_username(username)?
                .ok_or_else(|| Error::not_found(format!("user {username:?}")))?;
            tx.set_role(user.user_id, role)?;
            user.role = role;
            Ok(user)
        })
    }

    // ---- taxonomy (A3/A4) ----

    pub fn list_areas(&self, token: &str) -> Result<Vec<AreaInfo>> {
        self.authenticate(token)?;
        self.all_area_stores()
            .iter()
            .map(|s| {
                let tree = s.read(|tx| tx.taxonomy())?;
                Ok(AreaInfo {
                    area_id: tree.area_id,
                    name: tree.name,
                })
            })
            .collect()
    }

    /// A retry carrying the `request_id` that created the area returns the
    /// area instead of a conflict.
    pub fn add_area(
        &self,
        token: &str,
        seed: &AreaSeed,
        request_id: Option<&str>,
    ) -> Result<TaxonomyArea> {
        self.gate(token, Functionality::A4)?;
        let tree = TaxonomyArea::from_seed(seed)?;
        let _guard = self
            .area_creation
            .lock()
            .unwrap_or_else(PoisonError::into_inner);
        for store in self.all_area_stores() {
            let (existing, creator) =
                store.read(|tx| Ok((tx.taxonomy()?, tx.meta("created_by_request")?)))?;
            let clash = existing.area_id == tree.area_id
                || existing.name.to_lowercase() == tree.name.to_lowercase();
            if clash {
                if request_id.is_some() && creator.as_deref() == request_id {
                    return Ok(existing);
                }
                return Err(Error::Conflict(format!("area {:?} already exists", tree.name)));
            }
        }
        let store = Self::create_area_store(&self.config.data_dir, &tree, request_id, self.clock.now())?;
        self.areas
            .write()
            .unwrap_or_else(PoisonError::into_inner)
            .insert(tree.area_id.clone(), Arc::new(store));
        tracing::info!(area_id = %tree.area_id, "area added");
        Ok(tree)
    }

    pub fn taxonomy(&self, token: &str, area_id: &str) -> Result<TaxonomyArea> {
        self.authenticate(token)?;
        self.area_store(area_id)?.read(|tx| tx.taxonomy())
    }

    pub fn validate_path(&self, area_id: &str, field_id: &str, subfield_id: &str) -> bool {
        self.area_store(area_id)
            .and_then(|s| s.read(|tx| tx.taxonomy()))
            .is_ok_and(|t| t.validate_path(field_id, subfield_id))
    }

    /// Deleting a sub-field that a live record or an evaluation points at
    /// is refused.
    pub fn modify_subfield(
        &self,
        token: &str,
        area_id: &str,
        field_id: &str,
        action: &SubfieldAction,
        request_id: Option<&str>,
    ) -> Result<TaxonomyArea> {
        self.gate(token, Functionality::A3)?;
        let store = self.area_store(area_id)?;
        let now = self.clock.now();
        store.atomic(|tx| {
            let key = request_id.map(|id| format!("taxonomy:{id}"));
            if let Some(key) = &key {
                if tx.idempotent_response(key)?.is_some() {
                    return tx.taxonomy();
                }
            }
            let mut tree = tx.taxonomy()?;
            let subfield_id = tree.apply(field_id, action)?;
            let path = TaxonomyPath::new(field_id, &subfield_id);
            match action {
                SubfieldAction::Delete { .. } => {
                    let refs = tx.path_references(&path)?;
                    if refs > 0 {
                        return Err(Error::Referential(format!(
                            "{path} is referenced {refs} time(s)"
                        )));
                    }
                    tx.delete_summary(&path)?;
                }
                SubfieldAction::Add { .. } => refresh_summary(tx, &path, now)?,
                SubfieldAction::Rename { .. } => {}
            }
            tx.replace_taxonomy(&tree)?;
            if let Some(key) = &key {
                tx.remember_response(key, &serde_json::to_string(&subfield_id)?)?;
            }
            Ok(tree)
        })
    }

    // ---- records (U1/U2) ----

    /// A repeated `idempotency_key` from the same user returns the record
    /// created by the first call.
    pub fn submit_record(
        &self,
        token: &str,
        area_id: &str,
        draft: &RecordDraft,
        idempotency_key: Option<&str>,
    ) -> Result<BibRecord> {
        let session = self.gate(token, Functionality::U1)?;
        let store = self.area_store(area_id)?;
        let now = self.clock.now();
        draft.validate(now)?;
        let (record, replayed) = store.atomic(|tx| {
            let key = idempotency_key.map(|k| format!("submit:{}:{k}", session.user.user_id));
            if let Some(key) = &key {
                if let Some(prior) = tx.idempotent_response(key)? {
                    let id: RecordId = serde_json::from_str(&prior)?;
                    return Ok((tx.require_record(id)?, true));
                }
            }
            if !tx.taxonomy()?.contains(&draft.path()) {
                return Err(Error::validation(format!(
                    "{} is not a sub-field of area {area_id:?}",
                    draft.path()
                )));
            }
            if let Some(dup) = tx.find_duplicate(&draft.title, draft.year)? {
                return Err(Error::Conflict(format!(
                    "record {dup} already has this title and year"
                )));
            }
            let status = initial_status(&self.scenario);
            let record = tx.insert_record(&BibRecord {
                record_id: 0,
                area_id: area_id.to_string(),
                field_id: draft.field_id.clone(),
                subfield_id: draft.subfield_id.clone(),
                title: draft.title.trim().to_string(),
                authors: draft.authors.iter().map(|a| a.trim().to_string()).collect(),
                venue: draft.venue.clone(),
                year: draft.year,
                citation_count: draft.citation_count,
                keywords: draft.keywords.clone(),
                abstract_text: draft.abstract_text.clone(),
                doi: draft.doi.clone(),
                submitter_id: session.user.user_id,
                status,
                submitted_at: now,
                decided_at: status.is_terminal().then_some(now),
            })?;
            if record.status == ArticleStatus::Approved {
                refresh_summary(tx, &record.path(), now)?;
            }
            if let Some(key) = &key {
                tx.remember_response(key, &record.record_id.to_string())?;
            }
            Ok((record, false))
        })?;
        if !replayed {
            self.metrics.submission(session.role);
        }
        Ok(record)
    }

    pub fn get_record(&self, token: &str, area_id: &str, record_id: RecordId) -> Result<RecordView> {
        self.authenticate(token)?;
        self.area_store(area_id)?.read(|tx| {
            Ok(RecordView {
                record: tx.require_record(record_id)?,
                score: tx.cached_score(record_id)?,
            })
        })
    }

    /// Approved records of a sub-field, newest publication year first.
    pub fn list_by_subfield(
        &self,
        token: &str,
        area_id: &str,
        path: &TaxonomyPath,
        page: Page,
    ) -> Result<Vec<BibRecord>> {
        self.gate(token, Functionality::U2)?;
        let (limit, offset) = page.window()?;
        self.area_store(area_id)?.read(|tx| {
            if !tx.taxonomy()?.contains(path) {
                return Err(Error::not_found(format!("sub-field {path}")));
            }
            tx.approved_in_path(path, limit, offset)
        })
    }

    /// Needs no token. Ranked by match count, then newest year, then
    /// newest record.
    pub fn search(&self, query: &SearchQuery) -> Result<Vec<SearchHit>> {
        let terms: BTreeSet<String> = search_terms(&query.q).collect();
        if terms.is_empty() {
            return Err(Error::validation("search query must contain a word"));
        }
        let (limit, offset) = Page {
            page: query.page.unwrap_or(1),
            page_size: query.page_size.unwrap_or(DEFAULT_PAGE_SIZE),
        }
        .window()?;
        let stores = match &query.area {
            Some(id) => vec![self.area_store(id)?],
            None => self.all_area_stores(),
        };
        let mut hits = Vec::new();
        for store in stores {
            for record in store.read(|tx| tx.approved_records())? {
                let keep = query.field.as_ref().is_none_or(|f| *f == record.field_id)
                    && query.subfield.as_ref().is_none_or(|s| *s == record.subfield_id)
                    && query.year_from.is_none_or(|y| record.year >= y)
                    && query.year_to.is_none_or(|y| record.year <= y);
                if !keep {
                    continue;
                }
                let matches = match_count(&record, &terms);
                if matches > 0 {
                    hits.push(SearchHit { matches, record });
                }
            }
        }
        hits.sort_by(|a, b| {
            b.matches
                .cmp(&a.matches)
                .then(b.record.year.cmp(&a.record.year))
                .then(b.record.record_id.cmp(&a.record.record_id))
                .then(a.record.area_id.cmp(&b.record.area_id))
        });
        Ok(hits
            .into_iter()
            .skip(offset as usize)
            .take(limit as usize)
            .collect())
    }

    // ---- bibliometrics (U3) ----

    pub fn bibliometrics(
        &self,
        token: &str,
        area_id: &str,
        path: &TaxonomyPath,
    ) -> Result<BibliometricsSummary> {
        self.gate(token, Functionality::U3)?;
        let now = self.clock.now();
        self.area_store(area_id)?.read(|tx| {
            if !tx.taxonomy()?.contains(path) {
                return Err(Error::not_found(format!("sub-field {path}")));
            }
            if let Some(cached) = tx.summary(path)? {
                return Ok(cached);
            }
            let records = tx.approved_in_path(path, i64::MAX as u64, 0)?;
            let mut ratings = Vec::new();
            for r in &records {
                ratings.extend(tx.ratings_for(r.record_id)?);
            }
            summarize(area_id, path, &records, &ratings, now)
        })
    }

    /// Recomputes every sub-field summary of the area and drops summaries
    /// of sub-fields that no longer exist. Returns the number written.
    pub fn refresh_bibliometrics(&self, token: &str, area_id: &str) -> Result<usize> {
        self.gate(token, Functionality::U3)?;
        self.refresh_cache(area_id)
    }

    /// Maintenance entry point without a session.
    pub fn refresh_cache(&self, area_id: &str) -> Result<usize> {
        let store = self.area_store(area_id)?;
        let now = self.clock.now();
        store.atomic(|tx| {
            let paths = tx.taxonomy()?.paths();
            let live: BTreeSet<&TaxonomyPath> = paths.iter().collect();
            for stale in tx.summaries()? {
                if !live.contains(&stale.path()) {
                    tx.delete_summary(&stale.path())?;
                }
            }
            for path in &paths {
                refresh_summary(tx, path, now)?;
            }
            Ok(paths.len())
        })
    }

    // ---- rating (U4) ----

    pub fn rate(
        &self,
        token: &str,
        area_id: &str,
        record_id: RecordId,
        input: RatingInput,
    ) -> Result<ScorePercent> {
        let session = self.gate(token, Functionality::U4)?;
        let store = self.area_store(area_id)?;
        let now = self.clock.now();
        store.atomic(|tx| {
            let record = tx.require_record(record_id)?;
            if record.status != ArticleStatus::Approved {
                return Err(Error::State(format!(
                    "record {record_id} is {}; only approved records can be rated",
                    record.status.as_str()
                )));
            }
            tx.upsert_rating(&Rating {
                user_id: session.user.user_id,
                record_id,
                quality: input.quality,
                familiarity: input.familiarity,
                rated_at: now,
            })?;
            let score = overall_score(&tx.ratings_for(record_id)?)?;
            tx.set_cached_score(record_id, score, now)?;
            refresh_summary(tx, &record.path(), now)?;
            Ok(score)
        })
    }

    pub fn score(&self, token: &str, area_id: &str, record_id: RecordId) -> Result<ScorePercent> {
        self.gate(token, Functionality::U4)?;
        self.area_store(area_id)?.read(|tx| {
            tx.require_record(record_id)?;
            tx.cached_score(record_id)
        })
    }

    // ---- recommendation (U5) ----

    pub fn recommend(&self, token: &str, area_id: &str, n: usize) -> Result<RecommendationList> {
        let session = self.gate(token, Functionality::U5)?;
        if n == 0 {
            return Err(Error::validation("n must be positive"));
        }
        let now = self.clock.now();
        let (matrix, candidates) = self.area_store(area_id)?.read(|tx| {
            let mut matrix = RatingMatrix::new();
            for r in tx.all_ratings()? {
                matrix
                    .entry(r.user_id)
                    .or_default()
                    .insert(r.record_id, r.nrs_points());
            }
            let candidates: BTreeSet<RecordId> =
                tx.approved_records()?.iter().map(|r| r.record_id).collect();
            Ok((matrix, candidates))
        })?;
        Ok(RecommendationList {
            user_id: session.user.user_id,
            area_id: area_id.to_string(),
            items: recommend(
                &matrix,
                session.user.user_id,
                &candidates,
                n,
                &self.config.recommender,
            ),
            generated_at: now,
        })
    }

    // ---- social evaluation (U6) ----

    /// Stores the caller's verdict and re-checks consensus. When the
    /// scenario decides automatically, the consensus transition commits in
    /// the same unit as the evaluation that triggered it.
    pub fn submit_evaluation(
        &self,
        token: &str,
        area_id: &str,
        record_id: RecordId,
        input: &EvaluationInput,
    ) -> Result<EvaluationOutcome> {
        let session = self.gate(token, Functionality::U6)?;
        let verdict = input.verdict()?;
        let store = self.area_store(area_id)?;
        let now = self.clock.now();
        let outcome = store.atomic(|tx| {
            let mut record = tx.require_record(record_id)?;
            if record.status != ArticleStatus::PendingEvaluation {
                return Err(Error::State(format!(
                    "record {record_id} is {}, not open for evaluation",
                    record.status.as_str()
                )));
            }
            if record.submitter_id == session.user.user_id {
                return Err(Error::Policy("submitters cannot evaluate their own records".into()));
            }
            let proposed = match verdict {
                Verdict::Review(path) => {
                    if !tx.taxonomy()?.contains(&path) {
                        return Err(Error::validation(format!(
                            "{path} is not a sub-field of area {area_id:?}"
                        )));
                    }
                    Some(path)
                }
                Verdict::NotReview => None,
            };
            tx.upsert_evaluation(&Evaluation {
                user_id: session.user.user_id,
                record_id,
                is_review: proposed.is_some(),
                proposed,
                submitted_at: now,
            })?;
            let decision = check_consensus(&tx.evaluations_for(record_id)?, self.scenario.consensus_threshold);
            let event = match &decision.outcome {
                ConsensusOutcome::Approve(_) => Some(Event::ConsensusApprove),
                ConsensusOutcome::Reject => Some(Event::ConsensusReject),
                ConsensusOutcome::None => None,
            };
            let mut decided = false;
            if let (Some(event), true) = (event, self.scenario.consensus_is_automatic()) {
                record.status = transition(record.status, event, &self.scenario)?;
                record.decided_at = Some(now);
                if let ConsensusOutcome::Approve(path) = &decision.outcome {
                    record.field_id = path.field_id.clone();
                    record.subfield_id = path.subfield_id.clone();
                }
                tx.update_record(&record)?;
                if record.status == ArticleStatus::Approved {
                    refresh_summary(tx, &record.path(), now)?;
                }
                decided = true;
            }
            Ok(EvaluationOutcome {
                decision,
                decided,
                record,
            })
        })?;
        self.metrics.evaluation(session.role);
        if outcome.decided {
            self.metrics.auto_decision();
            tracing::info!(area_id, record_id, status = outcome.record.status.as_str(), "consensus decision");
        }
        Ok(outcome)
    }

    // ---- moderation (A1/A2) ----

    /// Oldest submission first, across all areas unless one is named.
    pub fn list_pending(
        &self,
        token: &str,
        kind: PendingKind,
        area_id: Option<&str>,
    ) -> Result<Vec<BibRecord>> {
        let (f, status) = match kind {
            PendingKind::Moderation => (Functionality::A1, ArticleStatus::PendingModeration),
            PendingKind::Evaluation => (Functionality::U6, ArticleStatus::PendingEvaluation),
        };
        self.gate(token, f)?;
        let stores = match area_id {
            Some(id) => vec![self.area_store(id)?],
            None => self.all_area_stores(),
        };
        let mut out = Vec::new();
        for store in stores {
            out.extend(store.read(|tx| tx.records_with_status(status))?);
        }
        out.sort_by(|a, b| {
            a.submitted_at
                .cmp(&b.submitted_at)
                .then(a.area_id.cmp(&b.area_id))
                .then(a.record_id.cmp(&b.record_id))
        });
        Ok(out)
    }

    /// Matching groups of a record's evaluations, for a moderator deciding
    /// by hand.
    pub fn evaluation_tally(
        &self,
        token: &str,
        area_id: &str,
        record_id: RecordId,
    ) -> Result<Vec<TallyRow>> {
        self.gate(token, Functionality::A1)?;
        self.area_store(area_id)?.read(|tx| {
            tx.require_record(record_id)?;
            Ok(tally(&tx.evaluations_for(record_id)?))
        })
    }

    pub fn moderator_decide(
        &self,
        token: &str,
        area_id: &str,
        record_id: RecordId,
        decision: &Decision,
    ) -> Result<BibRecord> {
        let session = self.gate(token, Functionality::A2)?;
        if *decision == Decision::OpenForEvaluation && !self.scenario.scenario.has_social_evaluation() {
            return Err(Error::Capability {
                scenario: self.scenario.scenario.number(),
                functionality: "A2 open_for_evaluation".into(),
            });
        }
        let store = self.area_store(area_id)?;
        let now = self.clock.now();
        let mut edited = false;
        let record = store.atomic(|tx| {
            let mut record = tx.require_record(record_id)?;
            let event = match decision {
                Decision::Approve { .. } => Event::ModeratorApprove,
                Decision::Reject { .. } => Event::ModeratorReject,
                Decision::OpenForEvaluation => Event::ModeratorOpenForEvaluation,
            };
            let next = transition(record.status, event, &self.scenario)?;
            if let Decision::Approve { edits: Some(edits) } = decision {
                if !edits.is_empty() {
                    edits.apply(&mut record, now)?;
                    edited = true;
                }
            }
            if next == ArticleStatus::Approved {
                if !tx.taxonomy()?.contains(&record.path()) {
                    return Err(Error::validation(format!(
                        "{} is not a sub-field of area {area_id:?}",
                        record.path()
                    )));
                }
                if edited {
                    if let Some(dup) = tx.find_duplicate(&record.title, record.year)? {
                        if dup != record_id {
                            return Err(Error::Conflict(format!(
                                "record {dup} already has this title and year"
                            )));
                        }
                    }
                }
            }
            record.status = next;
            record.decided_at = next.is_terminal().then_some(now);
            tx.update_record(&record)?;
            if next == ArticleStatus::Approved {
                refresh_summary(tx, &record.path(), now)?;
            }
            Ok(record)
        })?;
        if let Decision::Reject { reason: Some(reason) } = decision {
            tracing::info!(area_id, record_id, reason = %reason, "rejected");
        }
        self.metrics.moderator_decision(session.role, edited);
        Ok(record)
    }

    // ---- load metrics ----

    pub fn metrics(&self, token: &str) -> Result<LoadSnapshot> {
        let session = self.authenticate(token)?;
        if session.role == Role::User {
            return Err(Error::Forbidden("load metrics need a privileged role".into()));
        }
        self.metrics_snapshot()
    }

    pub fn metrics_snapshot(&self) -> Result<LoadSnapshot> {
        let (mut moderation, mut evaluation) = (0, 0);
        for store in self.all_area_stores() {
            let counts = store.read(|tx| tx.status_counts())?;
            moderation += counts.get(&ArticleStatus::PendingModeration).copied().unwrap_or(0);
            evaluation += counts.get(&ArticleStatus::PendingEvaluation).copied().unwrap_or(0);
        }
        Ok(self.metrics.snapshot(moderation, evaluation))
    }

    // ---- maintenance ----

    /// Writes `<dir>/users/*.jsonl` and `<dir>/<area_id>/*.jsonl`.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let users_dir = dir.join("users");
        for table in self.users.export_jsonl(&users_dir)? {
            written.push(users_dir.join(format!("{table}.jsonl")));
        }
        for store in self.all_area_stores() {
            let area_dir = dir.join(store.area_id());
            for table in store.export_jsonl(&area_dir)? {
                written.push(area_dir.join(format!("{table}.jsonl")));
            }
        }
        Ok(written)
    }

    /// Every integrity problem in every store, prefixed with its store.
    pub fn integrity_problems(&self) -> Result<Vec<String>> {
        let mut problems: Vec<String> = self
            .users
            .integrity_problems()?
            .into_iter()
            .map(|p| format!("users: {p}"))
            .collect();
        for store in self.all_area_stores() {
            problems.extend(
                store
                    .integrity_problems()?
                    .into_iter()
                    .map(|p| format!("{}: {p}", store.area_id())),
            );
        }
        Ok(problems)
    }
}
