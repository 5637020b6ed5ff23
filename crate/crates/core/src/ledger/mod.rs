//! The scan ledger: per-user-per-machine scan configuration (`mac_log`)
//! and per-file version history (`file_log`).
//!
//! Rows in `file_log` for one `(mac, filepath)` form versions `1..=N`.
//! Exactly one of them is `LATEST` or `DELETED` and carries the highest
//! version; the rest are `OLD`. Deletion appends a `DELETED` tombstone
//! rather than flipping a status in place.

mod audit;
mod sqlite;

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use audit::{check_invariants, AuditViolation};
pub use sqlite::SqliteLedger;

use crate::discovery::{normalize_root, LogicalPath};
use crate::error::{Error, Result};
use crate::fingerprint::{Digest, Fingerprint};
use crate::format::FileFormat;
use crate::machine::MachineId;
use crate::time::Timestamp;

/// `stale = now - last_scanned > scan_frequency`; never scanned is stale.
pub fn is_stale(now: Timestamp, last_scanned: Option<Timestamp>, scan_frequency: u64) -> bool {
    match last_scanned {
        None => true,
        Some(last) => i128::from(now.secs_since(last)) > i128::from(scan_frequency),
    }
}

/// One `mac_log` row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub username: String,
    pub mac: MachineId,
    pub paths: Vec<PathBuf>,
    pub formats: BTreeSet<FileFormat>,
    /// Seconds.
    pub scan_frequency: u64,
    pub last_scanned: Option<Timestamp>,
    pub stale: bool,
}

impl MachineConfig {
    /// Copy with `stale` evaluated at `now`.
    pub fn with_staleness_at(mut self, now: Timestamp) -> Self {
        self.stale = is_stale(now, self.last_scanned, self.scan_frequency);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FileStatus {
    Latest,
    Old,
    Deleted,
}

impl FileStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FileStatus::Latest => "LATEST",
            FileStatus::Old => "OLD",
            FileStatus::Deleted => "DELETED",
        }
    }
}

impl fmt::Display for FileStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FileStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "LATEST" => Ok(FileStatus::Latest),
            "OLD" => Ok(FileStatus::Old),
            "DELETED" => Ok(FileStatus::Deleted),
            _ => Err(Error::validation(
                "status",
                format!("{s:?} is not one of LATEST, OLD, DELETED"),
            )),
        }
    }
}

/// One `file_log` row. There is no username column: rows for
/// a folder shared by several users on one machine are not duplicated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub record_id: String,
    pub mac: MachineId,
    pub filepath: String,
    pub format: FileFormat,
    pub file_hash: Digest,
    pub meta_hash: Option<Digest>,
    pub pixel_hash: Option<Digest>,
    pub version: u32,
    pub status: FileStatus,
    /// Scan time at which this version was first observed.
    pub last_modified: Timestamp,
    /// Most recent scan that confirmed this row's status.
    pub last_scanned: Timestamp,
}

impl FileRecord {
    pub fn logical_path(&self) -> Option<LogicalPath> {
        self.filepath.parse().ok()
    }
}

/// A fingerprinted file seen by a scan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub path: LogicalPath,
    pub format: FileFormat,
    pub fingerprint: Fingerprint,
}

/// Which existing rows a scan can vouch for: deletion is only inferred for
/// paths under `roots`, with a format in `formats`, and not beneath any
/// `protected` path (listed but unreadable).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanScope {
    pub roots: Vec<PathBuf>,
    pub formats: BTreeSet<FileFormat>,
    pub protected: Vec<LogicalPath>,
}

impl ScanScope {
    /// Covers every absolute path and every format.
    pub fn everything() -> Self {
        ScanScope {
            roots: vec![PathBuf::from("/")],
            formats: FileFormat::ALL.into_iter().collect(),
            protected: Vec::new(),
        }
    }

    pub fn covers(&self, record: &FileRecord) -> bool {
        if !self.formats.contains(&record.format) {
            return false;
        }
        let Some(path) = record.logical_path() else {
            return false;
        };
        self.roots.iter().any(|root| path.is_under_root(root)) && !self.protected.iter().any(|p| path.is_within(p))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanCounts {
    /// First sightings, resurrections included.
    pub new: u64,
    pub modified: u64,
    pub unchanged: u64,
    pub deleted: u64,
    /// The subset of `new` that reappeared at a path with a tombstone.
    pub resurrected: u64,
}

/// In-flight scan state. Nothing here reaches `file_log` until
/// [`Ledger::commit_scan`]; dropping it (or [`Ledger::abort_scan`])
/// discards it and releases the machine's scan lock.
#[derive(Debug)]
pub struct ScanStaging {
    pub(crate) username: String,
    pub(crate) mac: MachineId,
    pub(crate) started_at: Timestamp,
    pub(crate) scope: ScanScope,
    pub(crate) observations: Vec<Observation>,
    seen: HashSet<String>,
    _lock: Option<ScanLock>,
}

impl ScanStaging {
    pub(crate) fn new(config: &MachineConfig, started_at: Timestamp, lock: Option<ScanLock>) -> Self {
        ScanStaging {
            username: config.username.clone(),
            mac: config.mac.clone(),
            started_at,
            scope: ScanScope {
                roots: config.paths.clone(),
                formats: config.formats.clone(),
                protected: Vec::new(),
            },
            observations: Vec::new(),
            seen: HashSet::new(),
            _lock: lock,
        }
    }

    pub fn username(&self) -> &str {
        &self.username
    }

    pub fn mac(&self) -> &MachineId {
        &self.mac
    }

    pub fn started_at(&self) -> Timestamp {
        self.started_at
    }

    pub fn scope(&self) -> &ScanScope {
        &self.scope
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    /// Rejects a second observation of the same logical path.
    pub fn stage_observation(&mut self, observation: Observation) -> Result<()> {
        let key = observation.path.to_string();
        if !self.seen.insert(key.clone()) {
            return Err(Error::DuplicateObservation(key));
        }
        self.observations.push(observation);
        Ok(())
    }

    /// Marks a path whose existing rows must keep their status.
    pub fn protect(&mut self, path: LogicalPath) {
        self.scope.protected.push(path);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ScanSummary {
    pub counts: ScanCounts,
    pub scan_time: Timestamp,
    /// `mac_log` rows stale after the end-of-scan recompute.
    pub stale_machines: usize,
}

/// A commit that did not apply. The staging comes back for a retry.
#[derive(Debug)]
pub struct CommitFailure {
    pub staging: ScanStaging,
    pub error: Error,
    /// Counts the commit would have produced, when planning got that far.
    pub would_be: Option<ScanCounts>,
}

impl fmt::Display for CommitFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scan commit rolled back: {}", self.error)
    }
}

impl std::error::Error for CommitFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Conjunctive `file_log` filter; `None` fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileQuery {
    pub mac: Option<MachineId>,
    pub format: Option<FileFormat>,
    pub status: Option<FileStatus>,
    /// Strict: `last_scanned > t`.
    pub scanned_after: Option<Timestamp>,
    /// Strict: `last_scanned < t`.
    pub scanned_before: Option<Timestamp>,
    pub version: Option<u32>,
}

impl FileQuery {
    pub fn matches(&self, r: &FileRecord) -> bool {
        self.mac.as_ref().is_none_or(|m| *m == r.mac)
            && self.format.is_none_or(|f| f == r.format)
            && self.status.is_none_or(|s| s == r.status)
            && self.scanned_after.is_none_or(|t| r.last_scanned > t)
            && self.scanned_before.is_none_or(|t| r.last_scanned < t)
            && self.version.is_none_or(|v| v == r.version)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReminderRecord {
    pub id: String,
    pub username: String,
    pub mac: MachineId,
    pub created_at: Timestamp,
    pub note: String,
    /// Always false: reminders are flagged, never emailed.
    pub delivered: bool,
}

#[derive(Debug)]
pub(crate) enum ScanLock {
    File(#[allow(dead_code)] std::fs::File),
    Memory {
        held: std::sync::Arc<std::sync::Mutex<HashSet<String>>>,
        mac: String,
    },
}

impl Drop for ScanLock {
    fn drop(&mut self) {
        if let ScanLock::Memory { held, mac } = self {
            if let Ok(mut held) = held.lock() {
                held.remove(mac);
            }
        }
    }
}

/// Storage backend contract for the two-table ledger.
pub trait Ledger {
    fn upsert_machine_config(
        &mut self,
        username: &str,
        mac: &MachineId,
        paths: &[PathBuf],
        formats: &BTreeSet<FileFormat>,
        scan_frequency: u64,
    ) -> Result<MachineConfig>;

    fn machine_config(&self, username: &str, mac: &MachineId) -> Result<Option<MachineConfig>>;

    /// All `mac_log` rows ordered by `(username, mac)`, with stored staleness.
    fn list_machines(&self) -> Result<Vec<MachineConfig>>;

    /// Opens a scan for a registered `(username, mac)` and takes the
    /// machine's scan lock.
    fn begin_scan(&self, username: &str, mac: &MachineId, started_at: Timestamp) -> Result<ScanStaging>;

    /// Applies a staged scan all-or-nothing.
    #[allow(clippy::result_large_err)]
    fn commit_scan(&mut self, staging: ScanStaging, scan_time: Timestamp) -> Result<ScanSummary, CommitFailure>;

    fn abort_scan(&self, staging: ScanStaging) {
        drop(staging);
    }

    /// Re-evaluates `stale` on every `mac_log` row; returns how many are stale.
    fn recompute_staleness(&mut self, now: Timestamp) -> Result<usize>;

    /// Rows matching `filter`, ordered by `(mac, filepath, version)`.
    fn query_files(&self, filter: &FileQuery) -> Result<Vec<FileRecord>>;

    /// One page of [`Ledger::query_files`] plus the unpaged total.
    fn query_files_page(&self, filter: &FileQuery, limit: u64, offset: u64) -> Result<(Vec<FileRecord>, u64)>;

    /// Every version of one file, ascending.
    fn file_history(&self, mac: &MachineId, filepath: &str) -> Result<Vec<FileRecord>>;

    /// The `LATEST` / `DELETED` row of each file on `mac`.
    fn current_records(&self, mac: &MachineId) -> Result<Vec<FileRecord>>;

    fn add_reminder(&mut self, username: &str, mac: &MachineId, note: &str, now: Timestamp) -> Result<ReminderRecord>;

    fn list_reminders(&self) -> Result<Vec<ReminderRecord>>;

    /// Store-wide invariant check over `file_log`.
    fn audit(&self) -> Result<Vec<AuditViolation>> {
        Ok(check_invariants(&self.query_files(&FileQuery::default())?))
    }
}

/// Validates and normalizes `mac_log` input shared by all backends.
pub(crate) fn validate_config(
    username: &str,
    paths: &[PathBuf],
    formats: &BTreeSet<FileFormat>,
    scan_frequency: u64,
) -> Result<Vec<PathBuf>> {
    if username.trim().is_empty() {
        return Err(Error::validation("username", "must not be empty"));
    }
    if paths.is_empty() {
        return Err(Error::validation("paths", "at least one scan root is required"));
    }
    if formats.is_empty() {
        return Err(Error::validation("formats", "at least one format is required"));
    }
    if let Some(f) = formats.iter().find(|f| !f.is_sensitive()) {
        return Err(Error::validation(
            "formats",
            format!("{f} is not a tracked sensitive format (DICOM, NIFTI1)"),
        ));
    }
    if scan_frequency == 0 || scan_frequency > i64::MAX as u64 {
        return Err(Error::validation(
            "scan_frequency",
            "must be a positive number of seconds",
        ));
    }
    let mut normalized = Vec::with_capacity(paths.len());
    for path in paths {
        let path = normalize_root(path)?;
        if !normalized.contains(&path) {
            normalized.push(path);
        }
    }
    Ok(normalized)
}
