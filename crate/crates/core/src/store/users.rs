use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Utc};
use rusqlite::{params, Connection, OptionalExtension, Row};

use super::{parse_ts, ts, Db, USERS_FILE};
use crate::auth::UserProfile;
use crate::domain::{Role, UserId};
use crate::error::{Error, Result};

const USERS_SCHEMA: &str = r#"
CREATE TABLE user_profiles (
    user_id           INTEGER PRIMARY KEY,
    username          TEXT NOT NULL UNIQUE,
    first_name        TEXT NOT NULL,
    last_name         TEXT NOT NULL,
    email             TEXT NOT NULL,
    password_verifier TEXT NOT NULL,
    role              TEXT NOT NULL,
    created_at        TEXT NOT NULL,
    preferences       TEXT NOT NULL
);
CREATE TABLE auth_tokens (
    token_hash TEXT PRIMARY KEY,
    user_id    INTEGER NOT NULL REFERENCES user_profiles(user_id),
    issued_at  TEXT NOT NULL,
    expires_at TEXT NOT NULL
);
CREATE INDEX auth_tokens_by_user ON auth_tokens(user_id);
"#;

const PROFILE_COLUMNS: &str =
    "user_id, username, first_name, last_name, email, password_verifier, role, created_at, preferences";

/// Shared identity store: profiles and issued tokens for every area.
#[derive(Debug)]
pub struct UserStore {
    db: Db,
}

/// A stored token, identified by the fingerprint of the bearer string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenRow {
    pub token_hash: String,
    pub user_id: UserId,
    pub issued_at: DateTime<Utc>,
    pub expires_at: DateTime<Utc>,
}

impl UserStore {
    pub fn open(data_dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(data_dir)?;
        let (db, _) = Db::open(&data_dir.join(USERS_FILE), USERS_SCHEMA, true)?;
        Ok(UserStore { db })
    }

    pub fn path(&self) -> &Path {
        self.db.path()
    }

    pub fn atomic<T>(&self, f: impl FnOnce(&UserTx<'_>) -> Result<T>) -> Result<T> {
        self.db.atomic(|tx| f(&UserTx { conn: tx }))
    }

    pub fn read<T>(&self, f: impl FnOnce(&UserTx<'_>) -> Result<T>) -> Result<T> {
        self.db.read(|conn| f(&UserTx { conn }))
    }

    pub fn export_jsonl(&self, dir: &Path) -> Result<Vec<String>> {
        self.db.export_jsonl(dir)
    }

    pub fn integrity_problems(&self) -> Result<Vec<String>> {
        self.db.read(|conn| {
            let mut problems = Vec::new();
            Db::sqlite_integrity(conn, &mut problems)?;
            Ok(problems)
        })
    }
}

pub struct UserTx<'a> {
    conn: &'a Connection,
}

type RawProfile = (UserId, String, String, String, String, String, String, String, String);

fn raw_profile(r: &Row<'_>) -> rusqlite::Result<RawProfile> {
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
}

fn build_profile(raw: RawProfile) -> Result<UserProfile> {
    let (user_id, username, first_name, last_name, email, verifier, role, created, prefs) = raw;
    Ok(UserProfile {
        user_id,
        username,
        first_name,
        last_name,
        email,
        password_verifier: verifier,
        role: Role::parse(&role).map_err(|e| Error::Integrity(e.to_string()))?,
        created_at: parse_ts(&created)?,
        preferences: serde_json::from_str::<BTreeMap<String, String>>(&prefs)
            .map_err(|e| Error::Integrity(format!("bad preferences for user {user_id}: {e}")))?,
    })
}

impl UserTx<'_> {
    /// Inserts ignoring `profile.user_id`; returns the assigned id.
    pub fn insert(&self, profile: &UserProfile) -> Result<UserId> {
        if self.by_username(&profile.username)?.is_some() {
            return Err(Error::Conflict(format!(
                "username {:?} is taken",
                profile.username
            )));
        }
        self.conn.execute(
            "INSERT INTO user_profiles (username, first_name, last_name, email, password_verifier,
                role, created_at, preferences)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
            params![
                profile.username,
                profile.first_name,
                profile.last_name,
                profile.email,
                profile.password_verifier,
                profile.role.as_str(),
                ts(profile.created_at),
                serde_json::to_string(&profile.preferences)?,
            ],
        )?;
        Ok(self.conn.last_insert_rowid())
    }

    pub fn update(&self, profile: &UserProfile) -> Result<()> {
        let n = self.conn.execute(
            "UPDATE user_profiles SET first_name = ?2, last_name = ?3, email = ?4,
                password_verifier = ?5, role = ?6, preferences = ?7
             WHERE user_id = ?1",
            params![
                profile.user_id,
                profile.first_name,
                profile.last_name,
                profile.email,
                profile.password_verifier,
                profile.role.as_str(),
                serde_json::to_string(&profile.preferences)?,
            ],
        )?;
        if n == 0 {
            return Err(Error::not_found(format!("user {}", profile.user_id)));
        }
        Ok(())
    }

    fn profile_where(&self, clause: &str, p: impl rusqlite::Params) -> Result<Option<UserProfile>> {
        self.conn
            .query_row(
                &format!("SELECT {PROFILE_COLUMNS} FROM user_profiles WHERE {clause}"),
                p,
                raw_profile,
            )
            .optional()?
            .map(build_profile)
            .transpose()
    }

    pub fn by_username(&self, username: &str) -> Result<Option<UserProfile>> {
        self.profile_where("username = ?1", [username])
    }

    pub fn by_id(&self, user_id: UserId) -> Result<Option<UserProfile>> {
        self.profile_where("user_id = ?1", [user_id])
    }

    pub fn all(&self) -> Result<Vec<UserProfile>> {
        let mut stmt = self
            .conn
            .prepare(&format!("SELECT {PROFILE_COLUMNS} FROM user_profiles ORDER BY user_id"))?;
        let raws: Vec<RawProfile> = stmt
            .query_map([], raw_profile)?
            .collect::<rusqlite::Result<_>>()?;
        raws.into_iter().map(build_profile).collect()
    }

    pub fn set_role(&self, user_id: UserId, role: Role) -> Result<()> {
        let n = self.conn.execute(
            "UPDATE user_profiles SET role = ?2 WHERE user_id = ?1",
            params![user_id, role.as_str()],
        )?;
        if n == 0 {
            return Err(Error::not_found(format!("user {user_id}")));
        }
        Ok(())
    }

    pub fn insert_token(&self, row: &TokenRow) -> Result<()> {
        self.conn.execute(
            "INSERT INTO auth_tokens (token_hash, user_id, issued_at, expires_at)
             VALUES (?1, ?2, ?3, ?4)",
            params![row.token_hash, row.user_id, ts(row.issued_at), ts(row.expires_at)],
        )?;
        Ok(())
    }

    pub fn token(&self, token_hash: &str) -> Result<Option<TokenRow>> {
        let raw: Option<(String, UserId, String, String)> = self
            .conn
            .query_row(
                "SELECT token_hash, user_id, issued_at, expires_at FROM auth_tokens
                 WHERE token_hash = ?1",
                [token_hash],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)),
            )
            .optional()?;
        raw.map(|(token_hash, user_id, issued, expires)| {
            Ok(TokenRow {
                token_hash,
                user_id,
                issued_at: parse_ts(&issued)?,
                expires_at: parse_ts(&expires)?,
            })
        })
        .transpose()
    }

    /// Revokes every token of `user_id` except `keep`. Returns how many.
    pub fn revoke_other_tokens(&self, user_id: UserId, keep: &str) -> Result<usize> {
        Ok(self.conn.execute(
            "DELETE FROM auth_tokens WHERE user_id = ?1 AND token_hash != ?2",
            params![user_id, keep],
        )?)
    }

    pub fn purge_expired(&self, now: DateTime<Utc>) -> Result<usize> {
        Ok(self
            .conn
            .execute("DELETE FROM auth_tokens WHERE expires_at <= ?1", [ts(now)])?)
    }
}
