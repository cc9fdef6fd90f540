//! Durable storage: one SQLite file per area (`<data>/<area_id>.db`) plus a
//! shared `<data>/users.db`.
//!
//! Every mutation goes through [`Db::atomic`], which holds the store's single
//! writer connection for an immediate transaction. Readers check out pooled
//! connections and see a consistent WAL snapshot without blocking writers.

mod area;
mod users;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, PoisonError};

use chrono::{DateTime, SecondsFormat, Utc};
use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags, Transaction, TransactionBehavior};
use serde_json::{Map, Value};

pub use area::{AreaStore, AreaTx};
pub use users::{TokenRow, UserStore, UserTx};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: i32 = 1;
pub const USERS_FILE: &str = "users.db";
const DB_EXTENSION: &str = "db";

pub(crate) fn ts(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Micros, true)
}

pub(crate) fn parse_ts(s: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::Integrity(format!("bad timestamp {s:?}: {e}")))
}

/// Store file for an area id.
pub fn area_path(data_dir: &Path, area_id: &str) -> PathBuf {
    data_dir.join(format!("{area_id}.{DB_EXTENSION}"))
}

/// Area ids that have a store file in `data_dir`.
pub fn area_files(data_dir: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    if !data_dir.exists() {
        return Ok(ids);
    }
    for entry in fs::read_dir(data_dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some(DB_EXTENSION) {
            continue;
        }
        if path.file_name().and_then(|n| n.to_str()) == Some(USERS_FILE) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            ids.push(stem.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

fn connect(path: &Path, create: bool) -> Result<Connection> {
    let mut flags = OpenFlags::SQLITE_OPEN_READ_WRITE
        | OpenFlags::SQLITE_OPEN_NO_MUTEX
        | OpenFlags::SQLITE_OPEN_URI;
    if create {
        flags |= OpenFlags::SQLITE_OPEN_CREATE;
    }
    let conn = Connection::open_with_flags(path, flags).map_err(|e| diagnose(path, e))?;
    conn.busy_timeout(std::time::Duration::from_secs(10))?;
    conn.pragma_update(None, "foreign_keys", "ON")?;
    let mode: String = conn
        .query_row("PRAGMA journal_mode = WAL", [], |r| r.get(0))
        .map_err(|e| diagnose(path, e))?;
    if !mode.eq_ignore_ascii_case("wal") {
        return Err(Error::Integrity(format!(
            "{}: cannot enable WAL (journal_mode={mode})",
            path.display()
        )));
    }
    conn.pragma_update(None, "synchronous", "NORMAL")?;
    Ok(conn)
}

fn diagnose(path: &Path, err: rusqlite::Error) -> Error {
    match Error::from(err) {
        Error::Integrity(msg) => Error::Integrity(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// One SQLite file: a serialized writer and a pool of readers.
pub struct Db {
    path: PathBuf,
    writer: Mutex<Connection>,
    readers: Mutex<Vec<Connection>>,
}

impl std::fmt::Debug for Db {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Db").field("path", &self.path).finish()
    }
}

impl Db {
    /// Opens `path`, creating it with `schema` when `create` is set and the
    /// file is new. Refuses files written by a newer schema version.
    pub(crate) fn open(path: &Path, schema: &str, create: bool) -> Result<(Db, bool)> {
        if !create && !path.exists() {
            return Err(Error::not_found(format!("{}", path.display())));
        }
        let mut conn = connect(path, create)?;
        let version: i32 = conn
            .query_row("PRAGMA user_version", [], |r| r.get(0))
            .map_err(|e| diagnose(path, e))?;
        let fresh = version == 0;
        if version > SCHEMA_VERSION {
            return Err(Error::Integrity(format!(
                "{}: schema version {version} is newer than supported {SCHEMA_VERSION}",
                path.display()
            )));
        }
        if fresh {
            let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
            tx.execute_batch(schema)?;
            tx.pragma_update(None, "user_version", SCHEMA_VERSION)?;
            tx.commit()?;
        }
        Ok((
            Db {
                path: path.to_path_buf(),
                writer: Mutex::new(conn),
                readers: Mutex::new(Vec::new()),
            },
            fresh,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Runs `f` inside one immediate transaction: all of its writes commit
    /// together or, on error or panic, none do.
    pub fn atomic<T>(&self, f: impl FnOnce(&Transaction<'_>) -> Result<T>) -> Result<T> {
        let mut conn = self.writer.lock().unwrap_or_else(PoisonError::into_inner);
        let tx = conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let out = f(&tx)?;
        tx.commit()?;
        Ok(out)
    }

    /// Runs `f` against a read-only snapshot.
    pub fn read<T>(&self, f: impl FnOnce(&Connection) -> Result<T>) -> Result<T> {
        let pooled = self
            .readers
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .pop();
        let conn = match pooled {
            Some(c) => c,
            None => {
                let c = connect(&self.path, false)?;
                c.pragma_update(None, "query_only", "ON")?;
                c
            }
        };
        let result = (|| {
            let tx = conn.unchecked_transaction()?;
            let out = f(&tx);
            tx.rollback()?;
            out
        })();
        self.readers
            .lock()
            .unwrap_or_else(PoisonError::into_inner)
            .push(conn);
        result
    }

    /// Writes each table as `<dir>/<table>.jsonl`, rows in rowid order.
    /// Returns the tables written.
    pub fn export_jsonl(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        self.read(|conn| {
            let tables: Vec<String> = conn
                .prepare("SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY name")?
                .query_map([], |r| r.get(0))?
                .collect::<rusqlite::Result<_>>()?;
            for table in &tables {
                let file = fs::File::create(dir.join(format!("{table}.jsonl")))?;
                let mut out = BufWriter::new(file);
                for row in dump_table(conn, table)? {
                    serde_json::to_writer(&mut out, &row)?;
                    out.write_all(b"\n")?;
                }
                out.flush()?;
            }
            Ok(tables)
        })
    }

    pub(crate) fn sqlite_integrity(conn: &Connection, problems: &mut Vec<String>) -> Result<()> {
        let verdicts: Vec<String> = conn
            .prepare("PRAGMA integrity_check")?
            .query_map([], |r| r.get(0))?
            .collect::<rusqlite::Result<_>>()?;
        if verdicts != ["ok"] {
            problems.extend(verdicts);
        }
        let mut stmt = conn.prepare("PRAGMA foreign_key_check")?;
        let mut rows = stmt.query([])?;
        while let Some(row) = rows.next()? {
            let table: String = row.get(0)?;
            problems.push(format!("dangling foreign key in {table}"));
        }
        Ok(())
    }
}

pub(crate) fn dump_table(conn: &Connection, table: &str) -> Result<Vec<Map<String, Value>>> {
    let mut stmt = conn.prepare(&format!("SELECT * FROM \"{table}\" ORDER BY rowid"))?;
    let names: Vec<String> = stmt.column_names().iter().map(|s| s.to_string()).collect();
    let mut rows = stmt.query([])?;
    let mut out = Vec::new();
    while let Some(row) = rows.next()? {
        let mut obj = Map::new();
        for (i, name) in names.iter().enumerate() {
            let v = match row.get_ref(i)? {
                ValueRef::Null => Value::Null,
                ValueRef::Integer(n) => Value::from(n),
                ValueRef::Real(x) => Value::from(x),
                ValueRef::Text(t) => Value::from(String::from_utf8_lossy(t).into_owned()),
                ValueRef::Blob(b) => Value::from(hex::encode(b)),
            };
            obj.insert(name.clone(), v);
        }
        out.push(obj);
    }
    Ok(out)
}
