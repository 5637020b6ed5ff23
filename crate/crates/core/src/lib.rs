//! Discovery, content-hash versioning and the scan ledger for sensitive
//! medical-imaging files.
//!
//! A scan walks the configured roots (descending into zip, gzip and tar
//! archives), identifies DICOM and NIfTI-1 files by content rather than by
//! extension, fingerprints them with SHA-256 (whole file plus separate
//! metadata and pixel-data digests), and commits the observations to a
//! two-table ledger in a single transaction.
//!
//! ```no_run
//! use complyscan_core::ledger::{Ledger, SqliteLedger};
//! use complyscan_core::{scanner, FileFormat, MachineId, Timestamp};
//!
//! let mut ledger = SqliteLedger::open("ledger.db")?;
//! let mac: MachineId = "aabbccddeeff".parse()?;
//! ledger.upsert_machine_config("alice", &mac, &["/data".into()], &[FileFormat::Dicom].into(), 86_400)?;
//! let report = scanner::run_scan(&mut ledger, "alice", &mac, Timestamp::now(), &Default::default())?;
//! println!("{} new files", report.counts.new);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod discovery;
pub mod error;
pub mod exec;
pub mod fingerprint;
pub mod format;
pub mod ledger;
pub mod machine;
pub mod scanner;
pub mod sniff;
pub mod time;

pub use discovery::{CandidateFile, LogicalPath, WalkLimits};
pub use error::{Error, Result};
pub use exec::ExecMode;
pub use fingerprint::{Digest, Fingerprint};
pub use format::{ByteOrder, FileFormat};
pub use ledger::{FileRecord, FileStatus, MachineConfig};
pub use machine::MachineId;
pub use scanner::ScanReport;
pub use sniff::SniffResult;
pub use time::Timestamp;
