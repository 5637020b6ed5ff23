//! Pure classification of a scan's observations against the current ledger.

use std::collections::{HashMap, HashSet};

use crate::ledger::{FileRecord, FileStatus, Observation, ScanCounts, ScanScope};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Change<'a> {
    /// Path never seen before: version 1.
    New(&'a Observation),
    /// Path with a tombstone observed again.
    Resurrected {
        observation: &'a Observation,
        previous: &'a FileRecord,
    },
    Modified {
        observation: &'a Observation,
        previous: &'a FileRecord,
    },
    Unchanged {
        observation: &'a Observation,
        previous: &'a FileRecord,
    },
    /// In scope, `LATEST`, and not observed: gets a tombstone.
    Deleted { previous: &'a FileRecord },
    /// In scope, already `DELETED`, still absent.
    DeletionConfirmed { previous: &'a FileRecord },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChangeSet<'a> {
    pub changes: Vec<Change<'a>>,
}

impl ChangeSet<'_> {
    pub fn counts(&self) -> ScanCounts {
        let mut c = ScanCounts::default();
        for change in &self.changes {
            match change {
                Change::New(_) => c.new += 1,
                Change::Resurrected { .. } => {
                    c.new += 1;
                    c.resurrected += 1;
                }
                Change::Modified { .. } => c.modified += 1,
                Change::Unchanged { .. } => c.unchanged += 1,
                Change::Deleted { .. } => c.deleted += 1,
                Change::DeletionConfirmed { .. } => {}
            }
        }
        c
    }
}

/// Classifies each observation against the current (`LATEST`/`DELETED`)
/// row at its path, then tombstones current `LATEST` rows that `scope`
/// covers but the scan did not observe. `current` must hold only non-`OLD`
/// rows of a single machine.
pub fn diff_observations<'a>(
    observed: &'a [Observation],
    current: &'a [FileRecord],
    scope: &ScanScope,
) -> ChangeSet<'a> {
    let by_path: HashMap<&str, &FileRecord> = current.iter().map(|r| (r.filepath.as_str(), r)).collect();
    let mut seen: HashSet<String> = HashSet::with_capacity(observed.len());
    let mut changes = Vec::with_capacity(observed.len());

    for observation in observed {
        let key = observation.path.to_string();
        let change = match by_path.get(key.as_str()) {
            None => Change::New(observation),
            Some(previous) if previous.status == FileStatus::Deleted => Change::Resurrected { observation, previous },
            Some(previous) if previous.file_hash == observation.fingerprint.file_hash => {
                Change::Unchanged { observation, previous }
            }
            Some(previous) => Change::Modified { observation, previous },
        };
        seen.insert(key);
        changes.push(change);
    }

    for previous in current {
        if seen.contains(&previous.filepath) || !scope.covers(previous) {
            continue;
        }
        match previous.status {
            FileStatus::Latest => changes.push(Change::Deleted { previous }),
            FileStatus::Deleted => changes.push(Change::DeletionConfirmed { previous }),
            FileStatus::Old => {}
        }
    }

    ChangeSet { changes }
}
