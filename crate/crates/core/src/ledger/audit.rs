use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{FileRecord, FileStatus};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AuditViolation {
    pub mac: String,
    pub filepath: String,
    pub message: String,
}

impl fmt::Display for AuditViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", self.mac, self.filepath, self.message)
    }
}

/// Checks the per-file version invariants over a full `file_log` dump:
/// versions `1..=N` contiguous, exactly one `LATEST`/`DELETED` row holding
/// the highest version, unique and well-formed record ids.
pub fn check_invariants(records: &[FileRecord]) -> Vec<AuditViolation> {
    let mut violations = Vec::new();
    let mut ids = HashSet::new();
    let mut files: BTreeMap<(&str, &str), Vec<&FileRecord>> = BTreeMap::new();

    for r in records {
        let violation = |message: String| AuditViolation {
            mac: r.mac.to_string(),
            filepath: r.filepath.clone(),
            message,
        };
        if !ids.insert(r.record_id.as_str()) {
            violations.push(violation(format!("duplicate record_id {}", r.record_id)));
        }
        if uuid::Uuid::parse_str(&r.record_id).is_err() || r.record_id.len() != 36 {
            violations.push(violation(format!(
                "record_id {:?} is not a canonical UUID",
                r.record_id
            )));
        }
        files.entry((r.mac.as_str(), r.filepath.as_str())).or_default().push(r);
    }

    for ((mac, filepath), mut rows) in files {
        let mut push = |message: String| {
            violations.push(AuditViolation {
                mac: mac.to_string(),
                filepath: filepath.to_string(),
                message,
            })
        };
        rows.sort_by_key(|r| r.version);
        let versions: Vec<u32> = rows.iter().map(|r| r.version).collect();
        let expected: Vec<u32> = (1..=rows.len() as u32).collect();
        if versions != expected {
            push(format!("versions {versions:?} are not contiguous from 1"));
        }
        let current: Vec<&&FileRecord> = rows.iter().filter(|r| r.status != FileStatus::Old).collect();
        match current.as_slice() {
            [one] => {
                if one.version != *versions.last().unwrap() {
                    push(format!(
                        "{} row is version {}, not the highest",
                        one.status, one.version
                    ));
                }
            }
            [] => push("no LATEST or DELETED row".into()),
            many => push(format!("{} rows are LATEST or DELETED", many.len())),
        }
    }
    violations
}
