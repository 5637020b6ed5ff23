//! One end-to-end scan: walk, fingerprint, stage, commit.

pub mod diff;

use serde::Serialize;

pub use diff::{diff_observations, Change, ChangeSet};

use crate::discovery::{walk_roots_with, IssueKind, WalkLimits};
use crate::error::Result;
use crate::exec::ExecMode;
use crate::fingerprint::fingerprint;
use crate::ledger::{Ledger, Observation, ScanCounts};
use crate::machine::MachineId;
use crate::time::Timestamp;

#[derive(Debug, Clone, Default)]
pub struct ScanOptions {
    pub limits: WalkLimits,
    pub exec: ExecMode,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportIssue {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScanReport {
    pub mac: MachineId,
    pub username: String,
    pub started_at: Timestamp,
    pub finished_at: Timestamp,
    pub counts: ScanCounts,
    /// Unreadable files, directories and archives, plus split-hash failures.
    pub errors: Vec<ReportIssue>,
    /// Depth and size limits that skipped content.
    pub notes: Vec<ReportIssue>,
    /// False when the ledger commit rolled back; `counts` then shows what
    /// the commit would have recorded.
    pub committed: bool,
}

/// Runs a full scan of `(username, mac)` and commits it. An unregistered
/// pair fails before any file is touched. Per-file problems are reported
/// in `errors` and never abort the scan; a failed commit returns a report
/// with `committed == false`. Ledger timestamps all equal `now`.
pub fn run_scan<L: Ledger>(
    ledger: &mut L,
    username: &str,
    mac: &MachineId,
    now: Timestamp,
    options: &ScanOptions,
) -> Result<ScanReport> {
    options.limits.validate()?;
    let mut staging = ledger.begin_scan(username, mac, now)?;
    let roots = staging.scope().roots.clone();
    let formats = staging.scope().formats.clone();

    let walk = walk_roots_with(&roots, &formats, &options.limits, options.exec);
    let mut errors = Vec::new();
    let mut notes = Vec::new();
    for issue in walk.issues {
        let entry = ReportIssue {
            path: issue.path,
            message: issue.message,
        };
        match issue.kind {
            IssueKind::Error => errors.push(entry),
            IssueKind::DepthLimit | IssueKind::SizeLimit => notes.push(entry),
        }
    }
    for path in walk.unreadable {
        staging.protect(path);
    }

    let outcomes = options.exec.map(&walk.candidates, fingerprint);
    for (candidate, outcome) in walk.candidates.iter().zip(outcomes) {
        match outcome {
            Ok(outcome) => {
                if let Some(message) = outcome.split_error {
                    errors.push(ReportIssue {
                        path: candidate.path.to_string(),
                        message: format!("split hashes unavailable: {message}"),
                    });
                }
                staging.stage_observation(Observation {
                    path: candidate.path.clone(),
                    format: candidate.format(),
                    fingerprint: outcome.fingerprint,
                })?;
            }
            Err(e) => {
                errors.push(ReportIssue {
                    path: candidate.path.to_string(),
                    message: e.to_string(),
                });
                staging.protect(candidate.path.clone());
            }
        }
    }

    // every row this scan touches is stamped with the scan's start time
    let (counts, committed) = match ledger.commit_scan(staging, now) {
        Ok(summary) => (summary.counts, true),
        Err(failure) => {
            log::error!("{failure}");
            errors.push(ReportIssue {
                path: String::new(),
                message: failure.to_string(),
            });
            (failure.would_be.unwrap_or_default(), false)
        }
    };

    Ok(ScanReport {
        finished_at: Timestamp::now().max(now),
        mac: mac.clone(),
        username: username.to_string(),
        started_at: now,
        counts,
        errors,
        notes,
        committed,
    })
}
