//! Single-file SQLite backend.

use std::collections::{BTreeSet, HashSet};
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rusqlite::types::Type;
use rusqlite::{params, Connection, OpenFlags, OptionalExtension, Row, ToSql, Transaction, TransactionBehavior};
use uuid::Uuid;

use super::{
    validate_config, CommitFailure, FileQuery, FileRecord, FileStatus, Ledger, MachineConfig, ReminderRecord,
    ScanCounts, ScanLock, ScanStaging, ScanSummary,
};
use crate::error::{Error, Result};
use crate::fingerprint::Digest;
use crate::format::FileFormat;
use crate::ledger::{is_stale, Observation};
use crate::machine::MachineId;
use crate::scanner::diff::{diff_observations, Change};
use crate::time::Timestamp;

const SCHEMA_VERSION: i64 = 1;

pub const SCHEMA: &str = "
CREATE TABLE mac_log (
    username       TEXT    NOT NULL,
    mac            TEXT    NOT NULL,
    paths          TEXT    NOT NULL,
    formats        TEXT    NOT NULL,
    scan_frequency INTEGER NOT NULL CHECK (scan_frequency > 0),
    last_scanned   TEXT,
    stale          INTEGER NOT NULL,
    PRIMARY KEY (username, mac)
);

CREATE TABLE file_log (
    record_id     TEXT    NOT NULL PRIMARY KEY,
    mac           TEXT    NOT NULL,
    filepath      TEXT    NOT NULL,
    format        TEXT    NOT NULL,
    file_hash     TEXT    NOT NULL,
    meta_hash     TEXT,
    pixel_hash    TEXT,
    version       INTEGER NOT NULL CHECK (version > 0),
    status        TEXT    NOT NULL CHECK (status IN ('LATEST', 'OLD', 'DELETED')),
    last_modified TEXT    NOT NULL,
    last_scanned  TEXT    NOT NULL,
    UNIQUE (mac, filepath, version)
);
CREATE INDEX file_log_current ON file_log (mac, status);

CREATE TABLE reminders (
    id         TEXT    NOT NULL PRIMARY KEY,
    username   TEXT    NOT NULL,
    mac        TEXT    NOT NULL,
    created_at TEXT    NOT NULL,
    note       TEXT    NOT NULL,
    delivered  INTEGER NOT NULL DEFAULT 0,
    FOREIGN KEY (username, mac) REFERENCES mac_log (username, mac)
);
";

const FILE_COLUMNS: &str =
    "record_id, mac, filepath, format, file_hash, meta_hash, pixel_hash, version, status, last_modified, last_scanned";

pub struct SqliteLedger {
    conn: Connection,
    path: Option<PathBuf>,
    memory_locks: Arc<Mutex<HashSet<String>>>,
    fault_at: Option<usize>,
}

impl std::fmt::Debug for SqliteLedger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SqliteLedger")
            .field("path", &self.path)
            .finish_non_exhaustive()
    }
}

impl SqliteLedger {
    /// Opens (creating if needed) a read-write store.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
        let conn = Connection::open(path)?;
        Self::init(conn, Some(path.to_path_buf()))
    }

    /// Opens an existing store without write access.
    pub fn open_read_only(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let conn =
            Connection::open_with_flags(path, OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX)?;
        conn.busy_timeout(Duration::from_secs(5))?;
        let version: i64 = conn.query_row("PRAGMA user_version", [], |r| r.get(0))?;
        if version != SCHEMA_VERSION {
            return Err(Error::CorruptRow(format!(
                "{} has schema version {version}, expected {SCHEMA_VERSION}",
                path.display()
            )));
        }
        Ok(SqliteLedger {
            conn,
            path: Some(path.to_path_buf()),
            memory_locks: Arc::default(),
            fault_at: None,
        })
    }

    pub fn in_memory() -> Result<Self> {
        Self::init(Connection::open_in_memory()?, None)
    }

    fn init(conn: Connection, path: Option<PathBuf>) -> Result<Self> {
        conn.busy_timeout(Duration::from_secs(5))?;
        conn.pragma_update(None, "foreign_keys", true)?;
        let mode: String = conn.query_row("PRAGMA journal_mode", [], |r| r.get(0))?;
        if path.is_some() && !mode.eq_ignore_ascii_case("delete") {
            conn.pragma_update(None, "journal_mode", "DELETE")?;
        }
        let version: i64 = conn.query_row("PRAGMA user_version", [], |r| r.get(0))?;
        match version {
            0 => {
                conn.execute_batch(&format!(
                    "BEGIN; {SCHEMA} PRAGMA user_version = {SCHEMA_VERSION}; COMMIT;"
                ))?;
            }
            SCHEMA_VERSION => {}
            other => {
                return Err(Error::CorruptRow(format!(
                    "store schema version {other} is newer than supported {SCHEMA_VERSION}"
                )))
            }
        }
        Ok(SqliteLedger {
            conn,
            path,
            memory_locks: Arc::default(),
            fault_at: None,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Makes the `n`th store write (0-based) of the next commits fail, or
    /// clears the fault with `None`. Write points are every row-level write
    /// plus the final `COMMIT`.
    #[doc(hidden)]
    pub fn inject_fault_at(&mut self, n: Option<usize>) {
        self.fault_at = n;
    }

    fn lock_machine(&self, mac: &MachineId) -> Result<ScanLock> {
        match &self.path {
            Some(path) => {
                let lock_path = format!("{}.scan-{}.lock", path.display(), mac);
                let file = OpenOptions::new()
                    .create(true)
                    .truncate(false)
                    .write(true)
                    .open(&lock_path)
                    .map_err(|e| Error::io(lock_path.clone(), e))?;
                match file.try_lock() {
                    Ok(()) => Ok(ScanLock::File(file)),
                    Err(std::fs::TryLockError::WouldBlock) => Err(Error::ScanInProgress(mac.to_string())),
                    Err(std::fs::TryLockError::Error(e)) => Err(Error::io(lock_path, e)),
                }
            }
            None => {
                let mut held = self.memory_locks.lock().expect("scan lock registry poisoned");
                if !held.insert(mac.to_string()) {
                    return Err(Error::ScanInProgress(mac.to_string()));
                }
                Ok(ScanLock::Memory {
                    held: Arc::clone(&self.memory_locks),
                    mac: mac.to_string(),
                })
            }
        }
    }

    pub fn count_by_status(&self, status: FileStatus) -> Result<u64> {
        let n: i64 = self.conn.query_row(
            "SELECT COUNT(*) FROM file_log WHERE status = ?1",
            [status.as_str()],
            |r| r.get(0),
        )?;
        Ok(n as u64)
    }

    fn apply_scan(
        &self,
        tx: &Transaction<'_>,
        staging: &ScanStaging,
        scan_time: Timestamp,
        would_be: &mut Option<ScanCounts>,
    ) -> Result<ScanSummary> {
        let current = select_files(
            tx,
            "WHERE mac = ?1 AND status != 'OLD' ORDER BY filepath",
            &[&staging.mac.as_str()],
        )?;
        let changes = diff_observations(&staging.observations, &current, &staging.scope);
        let counts = changes.counts();
        *would_be = Some(counts);

        let mut writes = Writes {
            next: 0,
            fault_at: self.fault_at,
        };
        let scan = scan_time.to_string();

        for change in &changes.changes {
            match *change {
                Change::New(observation) => {
                    writes.point()?;
                    insert_file(
                        tx,
                        &staging.mac,
                        observation_row(observation),
                        1,
                        FileStatus::Latest,
                        &scan,
                    )?;
                }
                Change::Resurrected { observation, previous } | Change::Modified { observation, previous } => {
                    writes.point()?;
                    demote(tx, &previous.record_id)?;
                    writes.point()?;
                    insert_file(
                        tx,
                        &staging.mac,
                        observation_row(observation),
                        previous.version + 1,
                        FileStatus::Latest,
                        &scan,
                    )?;
                }
                Change::Unchanged { previous, .. } | Change::DeletionConfirmed { previous } => {
                    writes.point()?;
                    tx.prepare_cached("UPDATE file_log SET last_scanned = ?1 WHERE record_id = ?2")?
                        .execute(params![scan, previous.record_id])?;
                }
                Change::Deleted { previous } => {
                    writes.point()?;
                    demote(tx, &previous.record_id)?;
                    writes.point()?;
                    let row = RowValues {
                        filepath: previous.filepath.clone(),
                        format: previous.format,
                        file_hash: previous.file_hash,
                        meta_hash: previous.meta_hash,
                        pixel_hash: previous.pixel_hash,
                    };
                    insert_file(tx, &staging.mac, row, previous.version + 1, FileStatus::Deleted, &scan)?;
                }
            }
        }

        writes.point()?;
        tx.prepare_cached("UPDATE mac_log SET last_scanned = ?1 WHERE username = ?2 AND mac = ?3")?
            .execute(params![scan, staging.username, staging.mac.as_str()])?;

        let stale_machines = recompute_all(tx, scan_time, &mut writes)?;
        writes.point()?;

        Ok(ScanSummary {
            counts,
            scan_time,
            stale_machines,
        })
    }
}

struct Writes {
    next: usize,
    fault_at: Option<usize>,
}

impl Writes {
    fn point(&mut self) -> Result<()> {
        let n = self.next;
        self.next += 1;
        if self.fault_at == Some(n) {
            return Err(Error::InjectedFault(n));
        }
        Ok(())
    }
}

struct RowValues {
    filepath: String,
    format: FileFormat,
    file_hash: Digest,
    meta_hash: Option<Digest>,
    pixel_hash: Option<Digest>,
}

fn observation_row(o: &Observation) -> RowValues {
    RowValues {
        filepath: o.path.to_string(),
        format: o.format,
        file_hash: o.fingerprint.file_hash,
        meta_hash: o.fingerprint.meta_hash,
        pixel_hash: o.fingerprint.pixel_hash,
    }
}

fn insert_file(
    tx: &Transaction<'_>,
    mac: &MachineId,
    row: RowValues,
    version: u32,
    status: FileStatus,
    scan: &str,
) -> Result<()> {
    tx.prepare_cached(&format!(
        "INSERT INTO file_log ({FILE_COLUMNS}) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8, ?9, ?10, ?10)"
    ))?
    .execute(params![
        Uuid::new_v4().to_string(),
        mac.as_str(),
        row.filepath,
        row.format.as_str(),
        row.file_hash.to_string(),
        row.meta_hash.map(|d| d.to_string()),
        row.pixel_hash.map(|d| d.to_string()),
        version,
        status.as_str(),
        scan,
    ])?;
    Ok(())
}

fn demote(tx: &Transaction<'_>, record_id: &str) -> Result<()> {
    tx.prepare_cached("UPDATE file_log SET status = 'OLD' WHERE record_id = ?1")?
        .execute([record_id])?;
    Ok(())
}

fn recompute_all(tx: &Transaction<'_>, now: Timestamp, writes: &mut Writes) -> Result<usize> {
    let rows: Vec<(String, String, Option<String>, i64)> = {
        let mut stmt =
            tx.prepare("SELECT username, mac, last_scanned, scan_frequency FROM mac_log ORDER BY username, mac")?;
        let rows = stmt.query_map([], |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?)))?;
        rows.collect::<rusqlite::Result<_>>()?
    };
    let mut stale_count = 0;
    for (username, mac, last, freq) in rows {
        let last = last.map(|s| parse_time(&s)).transpose()?;
        let stale = is_stale(now, last, freq as u64);
        stale_count += usize::from(stale);
        writes.point()?;
        tx.prepare_cached("UPDATE mac_log SET stale = ?1 WHERE username = ?2 AND mac = ?3")?
            .execute(params![stale, username, mac])?;
    }
    Ok(stale_count)
}

fn parse_time(s: &str) -> Result<Timestamp> {
    s.parse().map_err(|_| Error::CorruptRow(format!("bad timestamp {s:?}")))
}

fn conversion<E: std::error::Error + Send + Sync + 'static>(col: usize, e: E) -> rusqlite::Error {
    rusqlite::Error::FromSqlConversionFailure(col, Type::Text, Box::new(e))
}

fn parsed<T: std::str::FromStr>(row: &Row<'_>, col: usize) -> rusqlite::Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let s: String = row.get(col)?;
    s.parse().map_err(|e| conversion(col, e))
}

fn parsed_opt<T: std::str::FromStr>(row: &Row<'_>, col: usize) -> rusqlite::Result<Option<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    let s: Option<String> = row.get(col)?;
    s.map(|s| s.parse().map_err(|e| conversion(col, e))).transpose()
}

fn file_from_row(row: &Row<'_>) -> rusqlite::Result<FileRecord> {
    Ok(FileRecord {
        record_id: row.get(0)?,
        mac: parsed(row, 1)?,
        filepath: row.get(2)?,
        format: parsed(row, 3)?,
        file_hash: parsed(row, 4)?,
        meta_hash: parsed_opt(row, 5)?,
        pixel_hash: parsed_opt(row, 6)?,
        version: row.get(7)?,
        status: parsed(row, 8)?,
        last_modified: parsed(row, 9)?,
        last_scanned: parsed(row, 10)?,
    })
}

fn machine_from_row(row: &Row<'_>) -> rusqlite::Result<MachineConfig> {
    let paths: String = row.get(2)?;
    let formats: String = row.get(3)?;
    let freq: i64 = row.get(4)?;
    Ok(MachineConfig {
        username: row.get(0)?,
        mac: parsed(row, 1)?,
        paths: serde_json::from_str(&paths).map_err(|e| conversion(2, e))?,
        formats: serde_json::from_str(&formats).map_err(|e| conversion(3, e))?,
        scan_frequency: freq as u64,
        last_scanned: parsed_opt(row, 5)?,
        stale: row.get(6)?,
    })
}

fn reminder_from_row(row: &Row<'_>) -> rusqlite::Result<ReminderRecord> {
    Ok(ReminderRecord {
        id: row.get(0)?,
        username: row.get(1)?,
        mac: parsed(row, 2)?,
        created_at: parsed(row, 3)?,
        note: row.get(4)?,
        delivered: row.get(5)?,
    })
}

fn select_files(conn: &Connection, clause: &str, args: &[&dyn ToSql]) -> Result<Vec<FileRecord>> {
    let mut stmt = conn.prepare_cached(&format!("SELECT {FILE_COLUMNS} FROM file_log {clause}"))?;
    let rows = stmt.query_map(args, file_from_row)?;
    Ok(rows.collect::<rusqlite::Result<_>>()?)
}

const MACHINE_COLUMNS: &str = "username, mac, paths, formats, scan_frequency, last_scanned, stale";

fn where_clause(filter: &FileQuery) -> (String, Vec<Box<dyn ToSql>>) {
    let mut terms = Vec::new();
    let mut args: Vec<Box<dyn ToSql>> = Vec::new();
    let mut push = |term: &str, arg: Box<dyn ToSql>| {
        args.push(arg);
        terms.push(format!("{term} ?{}", args.len()));
    };
    if let Some(mac) = &filter.mac {
        push("mac =", Box::new(mac.to_string()));
    }
    if let Some(format) = filter.format {
        push("format =", Box::new(format.as_str()));
    }
    if let Some(status) = filter.status {
        push("status =", Box::new(status.as_str()));
    }
    if let Some(t) = filter.scanned_after {
        push("last_scanned >", Box::new(t.to_string()));
    }
    if let Some(t) = filter.scanned_before {
        push("last_scanned <", Box::new(t.to_string()));
    }
    if let Some(v) = filter.version {
        push("version =", Box::new(v));
    }
    let clause = if terms.is_empty() {
        String::new()
    } else {
        format!("WHERE {}", terms.join(" AND "))
    };
    (clause, args)
}

impl Ledger for SqliteLedger {
    fn upsert_machine_config(
        &mut self,
        username: &str,
        mac: &MachineId,
        paths: &[PathBuf],
        formats: &BTreeSet<FileFormat>,
        scan_frequency: u64,
    ) -> Result<MachineConfig> {
        let paths = validate_config(username, paths, formats, scan_frequency)?;
        let paths_json = serde_json::to_string(&paths).expect("paths serialize");
        let formats_json = serde_json::to_string(formats).expect("formats serialize");
        self.conn
            .prepare_cached(
                "INSERT INTO mac_log (username, mac, paths, formats, scan_frequency, last_scanned, stale)
                 VALUES (?1, ?2, ?3, ?4, ?5, NULL, 1)
                 ON CONFLICT (username, mac) DO UPDATE SET
                     paths = excluded.paths,
                     formats = excluded.formats,
                     scan_frequency = excluded.scan_frequency",
            )?
            .execute(params![
                username,
                mac.as_str(),
                paths_json,
                formats_json,
                scan_frequency as i64
            ])?;
        self.machine_config(username, mac)?
            .ok_or_else(|| Error::CorruptRow("mac_log row vanished after upsert".into()))
    }

    fn machine_config(&self, username: &str, mac: &MachineId) -> Result<Option<MachineConfig>> {
        Ok(self
            .conn
            .prepare_cached(&format!(
                "SELECT {MACHINE_COLUMNS} FROM mac_log WHERE username = ?1 AND mac = ?2"
            ))?
            .query_row(params![username, mac.as_str()], machine_from_row)
            .optional()?)
    }

    fn list_machines(&self) -> Result<Vec<MachineConfig>> {
        let mut stmt = self
            .conn
            .prepare_cached(&format!("SELECT {MACHINE_COLUMNS} FROM mac_log ORDER BY username, mac"))?;
        let rows = stmt.query_map([], machine_from_row)?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }

    fn begin_scan(&self, username: &str, mac: &MachineId, started_at: Timestamp) -> Result<ScanStaging> {
        let config = self.machine_config(username, mac)?.ok_or_else(|| Error::Unregistered {
            username: username.to_string(),
            mac: mac.to_string(),
        })?;
        let lock = self.lock_machine(mac)?;
        Ok(ScanStaging::new(&config, started_at, Some(lock)))
    }

    fn commit_scan(&mut self, staging: ScanStaging, scan_time: Timestamp) -> Result<ScanSummary, CommitFailure> {
        let mut would_be = None;
        if scan_time < staging.started_at {
            let error = Error::validation("scan_time", "earlier than the scan start");
            return Err(CommitFailure {
                staging,
                error,
                would_be,
            });
        }
        let result = (|| {
            let tx = Transaction::new_unchecked(&self.conn, TransactionBehavior::Immediate)?;
            let summary = self.apply_scan(&tx, &staging, scan_time, &mut would_be)?;
            tx.commit()?;
            Ok(summary)
        })();
        match result {
            Ok(summary) => {
                log::info!(
                    "committed scan for {} on {}: {:?}",
                    staging.username,
                    staging.mac,
                    summary.counts
                );
                Ok(summary)
            }
            Err(error) => Err(CommitFailure {
                staging,
                error,
                would_be,
            }),
        }
    }

    fn recompute_staleness(&mut self, now: Timestamp) -> Result<usize> {
        let tx = self.conn.transaction_with_behavior(TransactionBehavior::Immediate)?;
        let mut writes = Writes {
            next: 0,
            fault_at: None,
        };
        let stale = recompute_all(&tx, now, &mut writes)?;
        tx.commit()?;
        Ok(stale)
    }

    fn query_files(&self, filter: &FileQuery) -> Result<Vec<FileRecord>> {
        let (clause, args) = where_clause(filter);
        let args: Vec<&dyn ToSql> = args.iter().map(|a| a.as_ref()).collect();
        select_files(&self.conn, &format!("{clause} ORDER BY mac, filepath, version"), &args)
    }

    fn query_files_page(&self, filter: &FileQuery, limit: u64, offset: u64) -> Result<(Vec<FileRecord>, u64)> {
        let (clause, mut args) = where_clause(filter);
        // one read transaction so the page and the total agree
        let tx = Transaction::new_unchecked(&self.conn, TransactionBehavior::Deferred)?;
        let total: i64 = {
            let refs: Vec<&dyn ToSql> = args.iter().map(|a| a.as_ref()).collect();
            tx.query_row(
                &format!("SELECT COUNT(*) FROM file_log {clause}"),
                refs.as_slice(),
                |r| r.get(0),
            )?
        };
        let n = args.len();
        args.push(Box::new(limit.min(i64::MAX as u64) as i64));
        args.push(Box::new(offset.min(i64::MAX as u64) as i64));
        let refs: Vec<&dyn ToSql> = args.iter().map(|a| a.as_ref()).collect();
        let rows = select_files(
            &tx,
            &format!(
                "{clause} ORDER BY mac, filepath, version LIMIT ?{} OFFSET ?{}",
                n + 1,
                n + 2
            ),
            &refs,
        )?;
        tx.finish()?;
        Ok((rows, total as u64))
    }

    fn file_history(&self, mac: &MachineId, filepath: &str) -> Result<Vec<FileRecord>> {
        select_files(
            &self.conn,
            "WHERE mac = ?1 AND filepath = ?2 ORDER BY version",
            &[&mac.as_str(), &filepath],
        )
    }

    fn current_records(&self, mac: &MachineId) -> Result<Vec<FileRecord>> {
        select_files(
            &self.conn,
            "WHERE mac = ?1 AND status != 'OLD' ORDER BY filepath",
            &[&mac.as_str()],
        )
    }

    fn add_reminder(&mut self, username: &str, mac: &MachineId, note: &str, now: Timestamp) -> Result<ReminderRecord> {
        if self.machine_config(username, mac)?.is_none() {
            return Err(Error::Unregistered {
                username: username.to_string(),
                mac: mac.to_string(),
            });
        }
        let record = ReminderRecord {
            id: Uuid::new_v4().to_string(),
            username: username.to_string(),
            mac: mac.clone(),
            created_at: now,
            note: note.to_string(),
            delivered: false,
        };
        self.conn.execute(
            "INSERT INTO reminders (id, username, mac, created_at, note, delivered) VALUES (?1, ?2, ?3, ?4, ?5, 0)",
            params![record.id, record.username, mac.as_str(), now.to_string(), record.note],
        )?;
        Ok(record)
    }

    fn list_reminders(&self) -> Result<Vec<ReminderRecord>> {
        let mut stmt = self.conn.prepare_cached(
            "SELECT id, username, mac, created_at, note, delivered FROM reminders ORDER BY created_at, id",
        )?;
        let rows = stmt.query_map([], reminder_from_row)?;
        Ok(rows.collect::<rusqlite::Result<_>>()?)
    }
}
