use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};

use super::{area_path, parse_ts, ts, Db};
use crate::bibliometrics::BibliometricsSummary;
use crate::domain::{ArticleStatus, BibRecord, RecordId, TaxonomyPath, UserId};
use crate::error::{Error, Result};
use crate::evaluation::Evaluation;
use crate::rating::{overall_score, FamiliarityLevel, QualityLevel, Rating, ScorePercent};
use crate::taxonomy::{Subfield, TaxonomyArea, TaxonomyField};

const AREA_SCHEMA: &str = r#"
CREATE TABLE meta (
    key   TEXT PRIMARY KEY,
    value TEXT NOT NULL
);
CREATE TABLE classification_fields (
    field_id TEXT PRIMARY KEY,
    name     TEXT NOT NULL,
    position INTEGER NOT NULL
);
CREATE TABLE classification_subfields (
    field_id    TEXT NOT NULL REFERENCES classification_fields(field_id),
    subfield_id TEXT NOT NULL,
    name        TEXT NOT NULL,
    position    INTEGER NOT NULL,
    PRIMARY KEY (field_id, subfield_id)
);
CREATE TABLE review_articles (
    record_id      INTEGER PRIMARY KEY,
    field_id       TEXT NOT NULL,
    subfield_id    TEXT NOT NULL,
    title          TEXT NOT NULL,
    title_key      TEXT NOT NULL,
    authors        TEXT NOT NULL,
    venue          TEXT NOT NULL,
    year           INTEGER NOT NULL,
    citation_count INTEGER,
    keywords       TEXT NOT NULL,
    abstract       TEXT,
    doi            TEXT,
    submitter_id   INTEGER NOT NULL,
    status         TEXT NOT NULL,
    submitted_at   TEXT NOT NULL,
    decided_at     TEXT,
    CHECK ((status IN ('approved', 'rejected')) = (decided_at IS NOT NULL))
);
CREATE INDEX review_articles_by_path ON review_articles(field_id, subfield_id, status);
CREATE INDEX review_articles_by_title ON review_articles(title_key, year);
CREATE TABLE bibliometrics (
    field_id         TEXT NOT NULL,
    subfield_id      TEXT NOT NULL,
    paper_count      INTEGER NOT NULL,
    year_min         INTEGER,
    year_max         INTEGER,
    total_citations  INTEGER NOT NULL,
    avg_rating_score REAL,
    distinct_raters  INTEGER NOT NULL,
    computed_at      TEXT NOT NULL,
    PRIMARY KEY (field_id, subfield_id)
);
CREATE TABLE article_rating (
    record_id    INTEGER PRIMARY KEY REFERENCES review_articles(record_id),
    total_points INTEGER NOT NULL,
    rating_count INTEGER NOT NULL,
    updated_at   TEXT NOT NULL
);
CREATE TABLE article_rating_detailed (
    user_id     INTEGER NOT NULL,
    record_id   INTEGER NOT NULL REFERENCES review_articles(record_id),
    quality     INTEGER NOT NULL CHECK (quality BETWEEN 1 AND 3),
    familiarity INTEGER NOT NULL CHECK (familiarity BETWEEN 1 AND 3),
    rated_at    TEXT NOT NULL,
    PRIMARY KEY (user_id, record_id)
);
CREATE TABLE article_evaluations (
    user_id      INTEGER NOT NULL,
    record_id    INTEGER NOT NULL REFERENCES review_articles(record_id),
    is_review    INTEGER NOT NULL,
    field_id     TEXT,
    subfield_id  TEXT,
    submitted_at TEXT NOT NULL,
    PRIMARY KEY (user_id, record_id),
    CHECK (is_review = (field_id IS NOT NULL)),
    CHECK ((field_id IS NULL) = (subfield_id IS NULL))
);
CREATE TABLE idempotency (
    key      TEXT PRIMARY KEY,
    response TEXT NOT NULL
);
"#;

const RECORD_COLUMNS: &str = "record_id, field_id, subfield_id, title, authors, venue, year, \
     citation_count, keywords, abstract, doi, submitter_id, status, submitted_at, decided_at";

/// Article database of one science-and-technology area.
#[derive(Debug)]
pub struct AreaStore {
    area_id: String,
    db: Db,
}

impl AreaStore {
    /// Creates the store for a new area with its classification tree.
    /// Reuses a file left behind by an interrupted creation.
    pub fn create(data_dir: &Path, area: &TaxonomyArea, request_id: Option<&str>) -> Result<Self> {
        std::fs::create_dir_all(data_dir)?;
        let path = area_path(data_dir, &area.area_id);
        let (db, _) = Db::open(&path, AREA_SCHEMA, true)?;
        let store = AreaStore {
            area_id: area.area_id.clone(),
            db,
        };
        store.atomic(|tx| {
            if tx.meta("area_id")?.is_some() {
                return Err(Error::Conflict(format!("area {:?} already exists", area.area_id)));
            }
            tx.set_meta("area_id", &area.area_id)?;
            tx.set_meta("name", &area.name)?;
            if let Some(id) = request_id {
                tx.set_meta("created_by_request", id)?;
            }
            tx.replace_taxonomy(area)
        })?;
        Ok(store)
    }

    /// Opens an existing area store.
    pub fn open(data_dir: &Path, area_id: &str) -> Result<Self> {
        let path = area_path(data_dir, area_id);
        let (db, _) = Db::open(&path, AREA_SCHEMA, false)?;
        let store = AreaStore {
            area_id: area_id.to_string(),
            db,
        };
        match store.read(|tx| tx.meta("area_id"))? {
            Some(id) if id == area_id => Ok(store),
            Some(id) => Err(Error::Integrity(format!(
                "{} belongs to area {id:?}",
                path.display()
            ))),
            None => Err(Error::not_found(format!("area {area_id:?}"))),
        }
    }

    pub fn area_id(&self) -> &str {
        &self.area_id
    }

    pub fn path(&self) -> &Path {
        self.db.path()
    }

    pub fn atomic<T>(&self, f: impl FnOnce(&AreaTx<'_>) -> Result<T>) -> Result<T> {
        self.db.atomic(|tx| {
            f(&AreaTx {
                conn: tx,
                area_id: &self.area_id,
            })
        })
    }

    pub fn read<T>(&self, f: impl FnOnce(&AreaTx<'_>) -> Result<T>) -> Result<T> {
        self.db.read(|conn| {
            f(&AreaTx {
                conn,
                area_id: &self.area_id,
            })
        })
    }

    pub fn export_jsonl(&self, dir: &Path) -> Result<Vec<String>> {
        self.db.export_jsonl(dir)
    }

    /// Structural and referential checks; returns every problem found.
    pub fn integrity_problems(&self) -> Result<Vec<String>> {
        self.read(|tx| {
            let mut problems = Vec::new();
            Db::sqlite_integrity(tx.conn, &mut problems)?;
            let taxonomy = tx.taxonomy()?;
            for record in tx.all_records()? {
                if !record.is_consistent() {
                    problems.push(format!("record {} decided_at/status mismatch", record.record_id));
                }
                if record.status != ArticleStatus::Rejected && !taxonomy.contains(&record.path()) {
                    problems.push(format!(
                        "record {} references missing path {}",
                        record.record_id,
                        record.path()
                    ));
                }
            }
            let cached = tx.cached_scores()?;
            let derived = tx.derived_scores()?;
            if cached != derived {
                problems.push("article_rating cache differs from detailed ratings".into());
            }
            for rating in tx.all_ratings()? {
                let status = tx.record(rating.record_id)?.map(|r| r.status);
                if status != Some(ArticleStatus::Approved) {
                    problems.push(format!("rating on non-approved record {}", rating.record_id));
                }
            }
            for e in tx.all_evaluations()? {
                if let Some(path) = &e.proposed {
                    if !taxonomy.contains(path) {
                        problems.push(format!("evaluation references missing path {path}"));
                    }
                }
            }
            Ok(problems)
        })
    }

    pub fn check_integrity(&self) -> Result<()> {
        let problems = self.integrity_problems()?;
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Integrity(problems.join("; ")))
        }
    }
}

/// Typed access to an area store inside a transaction or read snapshot.
pub struct AreaTx<'a> {
    conn: &'a Connection,
    area_id: &'a str,
}

fn json_list(values: &[String]) -> Result<String> {
    Ok(serde_json::to_string(values)?)
}

fn parse_list(text: &str) -> Result<Vec<String>> {
    serde_json::from_str(text).map_err(|e| Error::Integrity(format!("bad list column: {e}")))
}

struct RawRecord {
    record_id: RecordId,
    field_id: String,
    subfield_id: String,
    title: String,
    authors: String,
    venue: String,
    year: i32,
    citation_count: Option<i64>,
    keywords: String,
    abstract_text: Option<String>,
    doi: Option<String>,
    submitter_id: UserId,
    status: String,
    submitted_at: String,
    decided_at: Option<String>,
}

impl RawRecord {
    fn from_row(row: &Row<'_>) -> rusqlite::Result<Self> {
        Ok(RawRecord {
            record_id: row.get(0)?,
            field_id: row.get(1)?,
            subfield_id: row.get(2)?,
            title: row.get(3)?,
            authors: row.get(4)?,
            venue: row.get(5)?,
            year: row.get(6)?,
            citation_count: row.get(7)?,
            keywords: row.get(8)?,
            abstract_text: row.get(9)?,
            doi: row.get(10)?,
            submitter_id: row.get(11)?,
            status: row.get(12)?,
            submitted_at: row.get(13)?,
            decided_at: row.get(14)?,
        })
    }

    fn into_record(self, area_id: &str) -> Result<BibRecord> {
        Ok(BibRecord {
            record_id: self.record_id,
            area_id: area_id.to_string(),
            field_id: self.field_id,
            subfield_id: self.subfield_id,
            title: self.title,
            authors: parse_list(&self.authors)?,
            venue: self.venue,
            year: self.year,
            citation_count: self.citation_count.map(|c| c as u64),
            keywords: parse_list(&self.keywords)?,
            abstract_text: self.abstract_text,
            doi: self.doi,
            submitter_id: self.submitter_id,
            status: ArticleStatus::parse(&self.status)?,
            submitted_at: parse_ts(&self.submitted_at)?,
            decided_at: self.decided_at.as_deref().map(parse_ts).transpose()?,
        })
    }
}

fn rating_from_row(row: &Row<'_>) -> rusqlite::Result<(UserId, RecordId, u32, u32, String)> {
    Ok((row.get(0)?, row.get(1)?, row.get(2)?, row.get(3)?, row.get(4)?))
}

fn build_rating(raw: (UserId, RecordId, u32, u32, String)) -> Result<Rating> {
    let (user_id, record_id, q, f, at) = raw;
    Ok(Rating {
        user_id,
        record_id,
        quality: QualityLevel::from_points(q).map_err(|e| Error::Integrity(e.to_string()))?,
        familiarity: FamiliarityLevel::from_value(f).map_err(|e| Error::Integrity(e.to_string()))?,
        rated_at: parse_ts(&at)?,
    })
}

type RawEvaluation = (UserId, RecordId, bool, Option<String>, Option<String>, String);

fn build_evaluation(raw: RawEvaluation) -> Result<Evaluation> {
    let (user_id, record_id, is_review, field, sub, at) = raw;
    Ok(Evaluation {
        user_id,
        record_id,
        is_review,
        proposed: field.zip(sub).map(|(f, s)| TaxonomyPath::new(f, s)),
        submitted_at: parse_ts(&at)?,
    })
}

impl AreaTx<'_> {
    pub fn area_id(&self) -> &str {
        self.area_id
    }

    pub fn meta(&self, key: &str) -> Result<Option<String>> {
        Ok(self
            .conn
            .query_row("SELECT value FROM meta WHERE key = ?1", [key], |r| r.get(0))
            .optional()?)
    }

    pub fn set_meta(&self, key: &str, value: &str) -> Result<()> {
        self.conn.execute(
            "INSERT INTO meta (key, value) VALUES (?1, ?2)
             ON CONFLICT(key) DO UPDATE SET value = excluded.value",
            params![key, value],
        )?;
        Ok(())
    }

    // ---- classification ----

    pub fn taxonomy(&self) -> Result<TaxonomyArea> {
        let name = self.meta("name")?.unwrap_or_default();
        let mut fields: Vec<TaxonomyField> = self
            .conn
            .prepare("SELECT field_id, name FROM classification_fields ORDER BY position")?
            .query_map([], |r| {
                Ok(TaxonomyField {
                    field_id: r.get(0)?,
                    name: r.get(1)?,
                    subfields: Vec::new(),
                })
            })?
            .collect::<rusqlite::Result<_>>()?;
        let mut stmt = self.conn.prepare(
            "SELECT field_id, subfield_id, name FROM classification_subfields ORDER BY position",
        )?;
        let subs = stmt.query_map([], |r| {
            Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?, r.get::<_, String>(2)?))
        })?;
        let index: BTreeMap<String, usize> = fields
            .iter()
            .enumerate()
            .map(|(i, f)| (f.field_id.clone(), i))
            .collect();
        for sub in subs {
            let (field_id, subfield_id, name) = sub?;
            let i = *index
                .get(&field_id)
                .ok_or_else(|| Error::Integrity(format!("orphan sub-field {subfield_id}")))?;
            fields[i].subfields.push(Subfield { subfield_id, name });
        }
        Ok(TaxonomyArea {
            area_id: self.area_id.to_string(),
            name,
            fields,
        })
    }

    pub fn replace_taxonomy(&self, area: &TaxonomyArea) -> Result<()> {
        self.conn.execute("DELETE FROM classification_subfields", [])?;
        self.conn.execute("DELETE FROM classification_fields", [])?;
        let mut pos = 0i64;
        for (i, field) in area.fields.iter().enumerate() {
            self.conn.execute(
                "INSERT INTO classification_fields (field_id, name, position) VALUES (?1, ?2, ?3)",
                params![field.field_id, field.name, i as i64],
            )?;
            for sub in &field.subfields {
                self.conn.execute(
                    "INSERT INTO classification_subfields (field_id, subfield_id, name, position)
                     VALUES (?1, ?2, ?3, ?4)",
                    params![field.field_id, sub.subfield_id, sub.name, pos],
                )?;
                pos += 1;
            }
        }
        Ok(())
    }

    /// Non-rejected records plus evaluations that point at `path`.
    pub fn path_references(&self, path: &TaxonomyPath) -> Result<u64> {
        let records: i64 = self.conn.query_row(
            "SELECT COUNT(*) FROM review_articles
             WHERE field_id = ?1 AND subfield_id = ?2 AND status != 'rejected'",
            params![path.field_id, path.subfield_id],
            |r| r.get(0),
        )?;
        let evaluations: i64 = self.conn.query_row(
            "SELECT COUNT(*) FROM article_evaluations WHERE field_id = ?1 AND subfield_id = ?2",
            params![path.field_id, path.subfield_id],
            |r| r.get(0),
        )?;
        Ok((records + evaluations) as u64)
    }

    // ---- review articles ----

    /// Inserts `record` ignoring its `record_id`; returns it with the
    /// assigned id.
    pub fn insert_record(&self, record: &BibRecord) -> Result<BibRecord> {
        self.conn.execute(
            "INSERT INTO review_articles (field_id, subfield_id, title, title_key, authors, venue,
                year, citation_count, keywords, abstract, doi, submitter_id, status,
                submitted_at, decided_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?11, ?12, ?13, ?14, ?15)",
            params![
                record.field_id,
                record.subfield_id,
                record.title,
                crate::domain::normalized_title(&record.title),
                json_list(&record.authors)?,
                record.venue,
                record.year,
                record.citation_count.map(|c| c as i64),
                json_list(&record.keywords)?,
                record.abstract_text,
                record.doi,
                record.submitter_id,
                record.status.as_str(),
                ts(record.submitted_at),
                record.decided_at.map(ts),
            ],
        )?;
        let mut stored = record.clone();
        stored.record_id = self.conn.last_insert_rowid();
        stored.area_id = self.area_id.to_string();
        Ok(stored)
    }

    pub fn update_record(&self, record: &BibRecord) -> Result<()> {
        let changed = self.conn.execute(
            "UPDATE review_articles SET field_id = ?2, subfield_id = ?3, title = ?4, title_key = ?5,
                authors = ?6, venue = ?7, year = ?8, citation_count = ?9, keywords = ?10,
                abstract = ?11, doi = ?12, status = ?13, decided_at = ?14
             WHERE record_id = ?1",
            params![
                record.record_id,
                record.field_id,
                record.subfield_id,
                record.title,
                crate::domain::normalized_title(&record.title),
                json_list(&record.authors)?,
                record.venue,
                record.year,
                record.citation_count.map(|c| c as i64),
                json_list(&record.keywords)?,
                record.abstract_text,
                record.doi,
                record.status.as_str(),
                record.decided_at.map(ts),
            ],
        )?;
        if changed == 0 {
            return Err(Error::not_found(format!("record {}", record.record_id)));
        }
        Ok(())
    }

    pub fn record(&self, record_id: RecordId) -> Result<Option<BibRecord>> {
        self.conn
            .query_row(
                &format!("SELECT {RECORD_COLUMNS} FROM review_articles WHERE record_id = ?1"),
                [record_id],
                RawRecord::from_row,
            )
            .optional()?
            .map(|raw| raw.into_record(self.area_id))
            .transpose()
    }

    pub fn require_record(&self, record_id: RecordId) -> Result<BibRecord> {
        self.record(record_id)?
            .ok_or_else(|| Error::not_found(format!("record {record_id} in area {:?}", self.area_id)))
    }

    fn query_records(&self, sql_tail: &str, params: impl rusqlite::Params) -> Result<Vec<BibRecord>> {
        let mut stmt = self
            .conn
            .prepare(&format!("SELECT {RECORD_COLUMNS} FROM review_articles {sql_tail}"))?;
        let raws: Vec<RawRecord> = stmt
            .query_map(params, RawRecord::from_row)?
            .collect::<rusqlite::Result<_>>()?;
        raws.into_iter().map(|r| r.into_record(self.area_id)).collect()
    }

    pub fn all_records(&self) -> Result<Vec<BibRecord>> {
        self.query_records("ORDER BY record_id", [])
    }

    /// Oldest submission first.
    pub fn records_with_status(&self, status: ArticleStatus) -> Result<Vec<BibRecord>> {
        self.query_records(
            "WHERE status = ?1 ORDER BY submitted_at, record_id",
            [status.as_str()],
        )
    }

    pub fn approved_records(&self) -> Result<Vec<BibRecord>> {
        self.records_with_status(ArticleStatus::Approved)
    }

    /// Approved records under `path`, newest publication year first.
    pub fn approved_in_path(
        &self,
        path: &TaxonomyPath,
        limit: u64,
        offset: u64,
    ) -> Result<Vec<BibRecord>> {
        self.query_records(
            "WHERE field_id = ?1 AND subfield_id = ?2 AND status = 'approved'
             ORDER BY year DESC, record_id DESC LIMIT ?3 OFFSET ?4",
            params![path.field_id, path.subfield_id, limit as i64, offset as i64],
        )
    }

    pub fn find_duplicate(&self, title: &str, year: i32) -> Result<Option<RecordId>> {
        Ok(self
            .conn
            .query_row(
                "SELECT record_id FROM review_articles WHERE title_key = ?1 AND year = ?2
                 ORDER BY record_id LIMIT 1",
                params![crate::domain::normalized_title(title), year],
                |r| r.get(0),
            )
            .optional()?)
    }

    pub fn status_counts(&self) -> Result<BTreeMap<ArticleStatus, u64>> {
        let mut stmt = self
            .conn
            .prepare("SELECT status, COUNT(*) FROM review_articles GROUP BY status")?;
        let rows: Vec<(String, i64)> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?)))?
            .collect::<rusqlite::Result<_>>()?;
        rows.into_iter()
            .map(|(s, n)| Ok((ArticleStatus::parse(&s)?, n as u64)))
            .collect()
    }

    // ---- ratings ----

    pub fn upsert_rating(&self, rating: &Rating) -> Result<()> {
        self.conn.execute(
            "INSERT INTO article_rating_detailed (user_id, record_id, quality, familiarity, rated_at)
             VALUES (?1, ?2, ?3, ?4, ?5)
             ON CONFLICT(user_id, record_id) DO UPDATE SET
                quality = excluded.quality, familiarity = excluded.familiarity,
                rated_at = excluded.rated_at",
            params![
                rating.user_id,
                rating.record_id,
                rating.quality.points(),
                rating.familiarity.value(),
                ts(rating.rated_at),
            ],
        )?;
        Ok(())
    }

    pub fn ratings_for(&self, record_id: RecordId) -> Result<Vec<Rating>> {
        let mut stmt = self.conn.prepare(
            "SELECT user_id, record_id, quality, familiarity, rated_at
             FROM article_rating_detailed WHERE record_id = ?1 ORDER BY user_id",
        )?;
        let raws: Vec<_> = stmt
            .query_map([record_id], rating_from_row)?
            .collect::<rusqlite::Result<_>>()?;
        raws.into_iter().map(build_rating).collect()
    }

    pub fn all_ratings(&self) -> Result<Vec<Rating>> {
        let mut stmt = self.conn.prepare(
            "SELECT user_id, record_id, quality, familiarity, rated_at
             FROM article_rating_detailed ORDER BY record_id, user_id",
        )?;
        let raws: Vec<_> = stmt
            .query_map([], rating_from_row)?
            .collect::<rusqlite::Result<_>>()?;
        raws.into_iter().map(build_rating).collect()
    }

    pub fn set_cached_score(
        &self,
        record_id: RecordId,
        score: ScorePercent,
        now: DateTime<Utc>,
    ) -> Result<()> {
        self.conn.execute(
            "INSERT INTO article_rating (record_id, total_points, rating_count, updated_at)
             VALUES (?1, ?2, ?3, ?4)
             ON CONFLICT(record_id) DO UPDATE SET total_points = excluded.total_points,
                rating_count = excluded.rating_count, updated_at = excluded.updated_at",
            params![
                record_id,
                score.total_points() as i64,
                score.rating_count() as i64,
                ts(now)
            ],
        )?;
        Ok(())
    }

    pub fn cached_score(&self, record_id: RecordId) -> Result<ScorePercent> {
        let parts: Option<(i64, i64)> = self
            .conn
            .query_row(
                "SELECT total_points, rating_count FROM article_rating WHERE record_id = ?1",
                [record_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        match parts {
            Some((p, n)) => ScorePercent::from_parts(p as u64, n as u64),
            None => Ok(ScorePercent::EMPTY),
        }
    }

    /// Cached scores keyed by record, from the `article_rating` table.
    pub fn cached_scores(&self) -> Result<BTreeMap<RecordId, ScorePercent>> {
        let mut stmt = self
            .conn
            .prepare("SELECT record_id, total_points, rating_count FROM article_rating")?;
        let rows: Vec<(RecordId, i64, i64)> = stmt
            .query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)))?
            .collect::<rusqlite::Result<_>>()?;
        rows.into_iter()
            .map(|(id, p, n)| Ok((id, ScorePercent::from_parts(p as u64, n as u64)?)))
            .collect()
    }

    /// Scores recomputed from `article_rating_detailed`.
    pub fn derived_scores(&self) -> Result<BTreeMap<RecordId, ScorePercent>> {
        let mut grouped: BTreeMap<RecordId, Vec<Rating>> = BTreeMap::new();
        for r in self.all_ratings()? {
            grouped.entry(r.record_id).or_default().push(r);
        }
        grouped
            .into_iter()
            .map(|(id, rs)| Ok((id, overall_score(&rs)?)))
            .collect()
    }

    /// Drops and rebuilds the cached score table from detailed ratings.
    pub fn rebuild_score_cache(&self, now: DateTime<Utc>) -> Result<usize> {
        self.conn.execute("DELETE FROM article_rating", [])?;
        let derived = self.derived_scores()?;
        for (id, score) in &derived {
            self.set_cached_score(*id, *score, now)?;
        }
        Ok(derived.len())
    }

    // ---- evaluations ----

    pub fn upsert_evaluation(&self, e: &Evaluation) -> Result<()> {
        let (field, sub) = match &e.proposed {
            Some(p) => (Some(p.field_id.as_str()), Some(p.subfield_id.as_str())),
            None => (None, None),
        };
        self.conn.execute(
            "INSERT INTO article_evaluations (user_id, record_id, is_review, field_id, subfield_id, submitted_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)
             ON CONFLICT(user_id, record_id) DO UPDATE SET is_review = excluded.is_review,
                field_id = excluded.field_id, subfield_id = excluded.subfield_id,
                submitted_at = excluded.submitted_at",
            params![e.user_id, e.record_id, e.is_review, field, sub, ts(e.submitted_at)],
        )?;
        Ok(())
    }

    fn query_evaluations(&self, tail: &str, params: impl rusqlite::Params) -> Result<Vec<Evaluation>> {
        let mut stmt = self.conn.prepare(&format!(
            "SELECT user_id, record_id, is_review, field_id, subfield_id, submitted_at
             FROM article_evaluations {tail}"
        ))?;
        let raws: Vec<RawEvaluation> = stmt
            .query_map(params, |r| {
                Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?))
            })?
            .collect::<rusqlite::Result<_>>()?;
        raws.into_iter().map(build_evaluation).collect()
    }

    pub fn evaluations_for(&self, record_id: RecordId) -> Result<Vec<Evaluation>> {
        self.query_evaluations("WHERE record_id = ?1 ORDER BY user_id", [record_id])
    }

    pub fn all_evaluations(&self) -> Result<Vec<Evaluation>> {
        self.query_evaluations("ORDER BY record_id, user_id", [])
    }

    // ---- bibliometrics cache ----

    pub fn put_summary(&self, s: &BibliometricsSummary) -> Result<()> {
        self.conn.execute(
            "INSERT INTO bibliometrics (field_id, subfield_id, paper_count, year_min, year_max,
                total_citations, avg_rating_score, distinct_raters, computed_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9)
             ON CONFLICT(field_id, subfield_id) DO UPDATE SET paper_count = excluded.paper_count,
                year_min = excluded.year_min, year_max = excluded.year_max,
                total_citations = excluded.total_citations,
                avg_rating_score = excluded.avg_rating_score,
                distinct_raters = excluded.distinct_raters, computed_at = excluded.computed_at",
            params![
                s.field_id,
                s.subfield_id,
                s.paper_count as i64,
                s.year_min,
                s.year_max,
                s.total_citations as i64,
                s.avg_rating_score,
                s.distinct_raters as i64,
                ts(s.computed_at),
            ],
        )?;
        Ok(())
    }

    pub fn delete_summary(&self, path: &TaxonomyPath) -> Result<()> {
        self.conn.execute(
            "DELETE FROM bibliometrics WHERE field_id = ?1 AND subfield_id = ?2",
            params![path.field_id, path.subfield_id],
        )?;
        Ok(())
    }

    pub fn summary(&self, path: &TaxonomyPath) -> Result<Option<BibliometricsSummary>> {
        let mut all = self.query_summaries(
            "WHERE field_id = ?1 AND subfield_id = ?2",
            params![path.field_id, path.subfield_id],
        )?;
        Ok(all.pop())
    }

    pub fn summaries(&self) -> Result<Vec<BibliometricsSummary>> {
        self.query_summaries("ORDER BY field_id, subfield_id", [])
    }

    fn query_summaries(
        &self,
        tail: &str,
        params: impl rusqlite::Params,
    ) -> Result<Vec<BibliometricsSummary>> {
        let mut stmt = self.conn.prepare(&format!(
            "SELECT field_id, subfield_id, paper_count, year_min, year_max, total_citations,
                avg_rating_score, distinct_raters, computed_at FROM bibliometrics {tail}"
        ))?;
        type Raw = (String, String, i64, Option<i32>, Option<i32>, i64, Option<f64>, i64, String);
        let raws: Vec<Raw> = stmt
            .query_map(params, |r| {
                Ok((
                    r.get(0)?,
                    r.get(1)?,
                    r.get(2)?,
                    r.get(3)?,
                    r.get(4)?,
                    r.get(5)?,
                    r.get(6)?,
                    r.get(7)?,
                    r.get(8)?,
                ))
            })?
            .collect::<rusqlite::Result<_>>()?;
        raws.into_iter()
            .map(|(f, s, n, ymin, ymax, cit, avg, raters, at)| {
                Ok(BibliometricsSummary {
                    area_id: self.area_id.to_string(),
                    field_id: f,
                    subfield_id: s,
                    paper_count: n as u64,
                    year_min: ymin,
                    year_max: ymax,
                    total_citations: cit as u64,
                    avg_rating_score: avg,
                    distinct_raters: raters as u64,
                    computed_at: parse_ts(&at)?,
                })
            })
            .collect()
    }

    // ---- idempotency ----

    pub fn idempotent_response(&self, key: &str) -> Result<Option<String>> {
        Ok(self
            .conn
            .query_row("SELECT response FROM idempotency WHERE key = ?1", [key], |r| r.get(0))
            .optional()?)
    }

    pub fn remember_response(&self, key: &str, response: &str) -> Result<()> {
        self.conn.execute(
            "INSERT INTO idempotency (key, response) VALUES (?1, ?2)",
            params![key, response],
        )?;
        Ok(())
    }
}
