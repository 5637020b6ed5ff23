//! Seeded create/modify/delete/move sequences against a real directory,
//! and a brute-force reference ledger to replay them against.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use complyscan_core::ledger::{FileQuery, Ledger, SqliteLedger};
use complyscan_core::scanner::ScanOptions;
use complyscan_core::{ExecMode, FileFormat, FileStatus, MachineId, ScanReport, Timestamp};
use complyscan_testkit::{render_logical, zip_of, DicomBuilder, NiftiBuilder, Pixels, Syntax};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use sha2::{Digest as _, Sha256};

pub const T0: i64 = 1_700_000_000;
pub const USER: &str = "alice";
pub const MAX_SCANS: usize = 10;

/// At most 20 files can exist at once.
pub const NAMES: [&str; 20] = [
    "a.dcm",
    "b.dcm",
    "c.jpg",
    "d",
    "e.nii",
    "f.DCM",
    "g.bak",
    "studies/h.dcm",
    "studies/i.nii",
    "studies/j",
    "deep/x/y/k.dcm",
    "l.zip",
    "m.txt",
    "n.dcm",
    "o.img",
    "p.jpg",
    "q.dcm",
    "studies/r.dcm",
    "s t.dcm",
    "u!v.dcm",
];

pub fn mac() -> MachineId {
    "0242ac110002".parse().unwrap()
}

pub fn options() -> ScanOptions {
    ScanOptions {
        exec: ExecMode::Sequential,
        ..ScanOptions::default()
    }
}

pub struct Content {
    pub bytes: Vec<u8>,
    /// Zip member holding the payload, if the file is a zip.
    pub member: Option<&'static str>,
    pub format: FileFormat,
    /// SHA-256 hex of the payload (the member, for zips).
    pub hash: String,
}

fn sha_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn dicom(syntax: Syntax, who: &str) -> Vec<u8> {
    let pixels: Vec<u8> = who.bytes().cycle().take(16).collect();
    DicomBuilder::new(syntax)
        .patient(who, who)
        .pixels(Pixels::Native(pixels))
        .build()
        .bytes
}

pub fn contents() -> &'static [Content] {
    static POOL: OnceLock<Vec<Content>> = OnceLock::new();
    POOL.get_or_init(|| {
        let plain = |bytes: Vec<u8>, format| Content {
            hash: sha_hex(&bytes),
            bytes,
            member: None,
            format,
        };
        let zipped = |payload: Vec<u8>| Content {
            hash: sha_hex(&payload),
            bytes: zip_of(&[("m.dcm", &payload)]),
            member: Some("m.dcm"),
            format: FileFormat::Dicom,
        };
        vec![
            plain(dicom(Syntax::ExplicitLittle, "ALPHA"), FileFormat::Dicom),
            plain(dicom(Syntax::ImplicitLittle, "BRAVO"), FileFormat::Dicom),
            plain(dicom(Syntax::ExplicitBig, "CHARLIE"), FileFormat::Dicom),
            plain(
                DicomBuilder::bare().patient("DELTA", "DELTA").build().bytes,
                FileFormat::Dicom,
            ),
            plain(NiftiBuilder::single(false, [2, 2, 2]).build(), FileFormat::Nifti1),
            plain(NiftiBuilder::single(true, [3, 2, 1]).build(), FileFormat::Nifti1),
            zipped(dicom(Syntax::ExplicitLittle, "ECHO")),
            zipped(dicom(Syntax::ExplicitLittle, "ALPHA")),
        ]
    })
}

/// Name -> index into [`contents`], mirrored on disk under `data`.
pub struct Tree<'a> {
    pub data: &'a Path,
    pub files: BTreeMap<&'static str, usize>,
}

impl Tree<'_> {
    fn write(&self, name: &str, content: usize) -> std::io::Result<()> {
        let path = self.data.join(name);
        fs::create_dir_all(path.parent().unwrap())?;
        fs::write(path, &contents()[content].bytes)
    }

    /// One random create, modify, delete or move; a no-op when the drawn
    /// operation is impossible.
    pub fn mutate(&mut self, rng: &mut StdRng) -> std::io::Result<()> {
        let absent: Vec<&'static str> = NAMES.iter().copied().filter(|n| !self.files.contains_key(n)).collect();
        let present: Vec<&'static str> = self.files.keys().copied().collect();
        let pool = contents().len();
        match rng.gen_range(0..4) {
            0 if !absent.is_empty() => {
                let name = *absent.choose(rng).unwrap();
                let content = rng.gen_range(0..pool);
                self.write(name, content)?;
                self.files.insert(name, content);
            }
            1 if !present.is_empty() => {
                let name = *present.choose(rng).unwrap();
                let old = self.files[name];
                let content = (old + rng.gen_range(1..pool)) % pool;
                self.write(name, content)?;
                self.files.insert(name, content);
            }
            2 if !present.is_empty() => {
                let name = *present.choose(rng).unwrap();
                fs::remove_file(self.data.join(name))?;
                self.files.remove(name);
            }
            3 if !present.is_empty() && !absent.is_empty() => {
                let from = *present.choose(rng).unwrap();
                let to = *absent.choose(rng).unwrap();
                let target = self.data.join(to);
                fs::create_dir_all(target.parent().unwrap())?;
                fs::rename(self.data.join(from), target)?;
                let content = self.files.remove(from).unwrap();
                self.files.insert(to, content);
            }
            _ => {}
        }
        Ok(())
    }

    /// Logical path -> (payload hash, format) of every sensitive file.
    pub fn present(&self) -> BTreeMap<String, (String, FileFormat)> {
        self.files
            .iter()
            .map(|(name, &idx)| {
                let c = &contents()[idx];
                let members: Vec<&str> = c.member.into_iter().collect();
                (
                    render_logical(&self.data.join(name), &members),
                    (c.hash.clone(), c.format),
                )
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub version: u32,
    pub status: FileStatus,
    pub hash: String,
    pub format: FileFormat,
    pub last_modified: Timestamp,
    pub last_scanned: Timestamp,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub new: u64,
    pub modified: u64,
    pub unchanged: u64,
    pub deleted: u64,
    pub resurrected: u64,
}

impl Counts {
    pub fn of(report: &ScanReport) -> Counts {
        let c = report.counts;
        Counts {
            new: c.new,
            modified: c.modified,
            unchanged: c.unchanged,
            deleted: c.deleted,
            resurrected: c.resurrected,
        }
    }
}

/// Every version of every path, oldest first.
#[derive(Debug, Default)]
pub struct Reference {
    pub rows: BTreeMap<String, Vec<Row>>,
}

impl Reference {
    pub fn scan(&mut self, present: &BTreeMap<String, (String, FileFormat)>, at: Timestamp) -> Counts {
        let mut c = Counts::default();
        let fresh = |version, status, hash: &str, format| Row {
            version,
            status,
            hash: hash.to_string(),
            format,
            last_modified: at,
            last_scanned: at,
        };
        for (path, (hash, format)) in present {
            let rows = self.rows.entry(path.clone()).or_default();
            let Some(last) = rows.last_mut() else {
                c.new += 1;
                rows.push(fresh(1, FileStatus::Latest, hash, *format));
                continue;
            };
            let next = last.version + 1;
            match last.status {
                FileStatus::Latest if last.hash == *hash => {
                    c.unchanged += 1;
                    last.last_scanned = at;
                }
                FileStatus::Latest => {
                    c.modified += 1;
                    last.status = FileStatus::Old;
                    rows.push(fresh(next, FileStatus::Latest, hash, *format));
                }
                FileStatus::Deleted => {
                    c.new += 1;
                    c.resurrected += 1;
                    last.status = FileStatus::Old;
                    rows.push(fresh(next, FileStatus::Latest, hash, *format));
                }
                FileStatus::Old => unreachable!("newest row is never OLD"),
            }
        }
        for (path, rows) in self.rows.iter_mut() {
            if present.contains_key(path) {
                continue;
            }
            let last = rows.last_mut().unwrap();
            match last.status {
                FileStatus::Latest => {
                    c.deleted += 1;
                    last.status = FileStatus::Old;
                    let tomb = fresh(last.version + 1, FileStatus::Deleted, &last.hash.clone(), last.format);
                    rows.push(tomb);
                }
                FileStatus::Deleted => last.last_scanned = at,
                FileStatus::Old => unreachable!("newest row is never OLD"),
            }
        }
        c
    }

    /// Compares against every `file_log` row in `ledger`.
    pub fn matches(&self, ledger: &SqliteLedger) -> Result<(), String> {
        let mut actual: BTreeMap<String, Vec<Row>> = BTreeMap::new();
        for r in ledger.query_files(&FileQuery::default()).map_err(|e| e.to_string())? {
            actual.entry(r.filepath.clone()).or_default().push(Row {
                version: r.version,
                status: r.status,
                hash: r.file_hash.to_hex(),
                format: r.format,
                last_modified: r.last_modified,
                last_scanned: r.last_scanned,
            });
        }
        for rows in actual.values_mut() {
            rows.sort_by_key(|r| r.version);
        }
        if actual == self.rows {
            return Ok(());
        }
        let paths: std::collections::BTreeSet<&String> = actual.keys().chain(self.rows.keys()).collect();
        for path in paths {
            let (got, want) = (actual.get(path), self.rows.get(path));
            if got != want {
                return Err(format!("{path}: ledger {got:?}, reference {want:?}"));
            }
        }
        unreachable!()
    }
}

pub fn scan_time(step: usize) -> Timestamp {
    Timestamp::from_unix(T0 + 3600 * step as i64)
}
