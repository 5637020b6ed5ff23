//! Enumerates candidate sensitive files beneath the configured roots.
//!
//! Every regular file is sniffed by content. Archives are always expanded,
//! whether or not their own format is tracked, and their members get a
//! logical path of the form `outer!member!member`.

mod archive;
mod path;

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufReader, Cursor, Read, Seek};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use walkdir::WalkDir;

pub use archive::{expand_archive, Expansion};
pub use path::{normalize_root, LogicalPath, PathParseError};

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::format::FileFormat;
use crate::sniff::{self, SniffConfig, SniffResult};

pub const DEFAULT_MAX_ARCHIVE_DEPTH: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkLimits {
    /// Archive nesting levels expanded; 0 disables archive expansion.
    pub max_archive_depth: usize,
    /// Files (and archive members) larger than this are skipped with a note.
    pub max_file_bytes: Option<u64>,
    /// Must stay false: symlinks are never followed below a root.
    pub follow_symlinks: bool,
    pub sniff: SniffConfig,
}

impl Default for WalkLimits {
    fn default() -> Self {
        WalkLimits {
            max_archive_depth: DEFAULT_MAX_ARCHIVE_DEPTH,
            max_file_bytes: None,
            follow_symlinks: false,
            sniff: SniffConfig::default(),
        }
    }
}

impl WalkLimits {
    pub fn validate(&self) -> Result<()> {
        if self.follow_symlinks {
            return Err(Error::validation(
                "follow_symlinks",
                "symlink following is not supported",
            ));
        }
        Ok(())
    }

    fn too_large(&self, size: u64) -> bool {
        self.max_file_bytes.is_some_and(|max| size > max)
    }
}

pub trait ReadSeek: Read + Seek + Send {}
impl<T: Read + Seek + Send> ReadSeek for T {}

/// Re-readable access to a candidate's bytes.
#[derive(Clone)]
pub enum ByteSource {
    File(PathBuf),
    Memory(Arc<[u8]>),
}

impl ByteSource {
    pub fn open(&self) -> io::Result<Box<dyn ReadSeek>> {
        Ok(match self {
            ByteSource::File(path) => Box::new(BufReader::with_capacity(64 * 1024, File::open(path)?)),
            ByteSource::Memory(bytes) => Box::new(Cursor::new(Arc::clone(bytes))),
        })
    }
}

impl fmt::Debug for ByteSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ByteSource::File(path) => f.debug_tuple("File").field(path).finish(),
            ByteSource::Memory(bytes) => write!(f, "Memory({} bytes)", bytes.len()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CandidateFile {
    pub path: LogicalPath,
    pub size: u64,
    pub sniff: SniffResult,
    pub source: ByteSource,
}

impl CandidateFile {
    /// Opens a candidate's byte stream; errors carry the logical path.
    pub fn open(&self) -> Result<Box<dyn ReadSeek>> {
        self.source.open().map_err(|e| Error::io(self.path.to_string(), e))
    }

    pub fn read_all(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.size as usize);
        self.open()?
            .read_to_end(&mut out)
            .map_err(|e| Error::io(self.path.to_string(), e))?;
        Ok(out)
    }

    pub fn format(&self) -> FileFormat {
        self.sniff.format
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    /// A file, directory or archive could not be read.
    Error,
    /// Archive nesting exceeded `max_archive_depth`.
    DepthLimit,
    /// Skipped for exceeding `max_file_bytes`.
    SizeLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WalkIssue {
    pub path: String,
    pub kind: IssueKind,
    pub message: String,
}

impl WalkIssue {
    pub(crate) fn error(path: impl fmt::Display, message: impl fmt::Display) -> Self {
        WalkIssue {
            path: path.to_string(),
            kind: IssueKind::Error,
            message: message.to_string(),
        }
    }
}

#[derive(Debug, Default)]
pub struct Walk {
    /// Candidates whose format is in the requested set, sorted by rendered path.
    pub candidates: Vec<CandidateFile>,
    pub issues: Vec<WalkIssue>,
    /// Paths that were listed (or are roots) but could not be fully read. Ledger
    /// rows at or beneath these paths keep their prior status.
    pub unreadable: Vec<LogicalPath>,
}

impl Walk {
    pub fn errors(&self) -> impl Iterator<Item = &WalkIssue> {
        self.issues.iter().filter(|i| i.kind == IssueKind::Error)
    }
}

#[derive(Default)]
struct Outcome {
    candidates: Vec<CandidateFile>,
    issues: Vec<WalkIssue>,
    unreadable: Vec<LogicalPath>,
}

impl Outcome {
    fn absorb(&mut self, other: Outcome) {
        self.candidates.extend(other.candidates);
        self.issues.extend(other.issues);
        self.unreadable.extend(other.unreadable);
    }
}

pub fn walk_roots(roots: &[PathBuf], formats: &BTreeSet<FileFormat>, limits: &WalkLimits) -> Walk {
    walk_roots_with(roots, formats, limits, ExecMode::default())
}

/// Walks every root; per-file failures become issues and never abort the walk.
pub fn walk_roots_with(roots: &[PathBuf], formats: &BTreeSet<FileFormat>, limits: &WalkLimits, exec: ExecMode) -> Walk {
    let mut listing = Outcome::default();
    let mut files: Vec<(PathBuf, u64)> = Vec::new();
    let mut seen_roots = BTreeSet::new();

    for root in roots {
        let root = match normalize_root(root) {
            Ok(root) => root,
            Err(e) => {
                listing.issues.push(WalkIssue::error(root.display(), e));
                continue;
            }
        };
        if !seen_roots.insert(root.clone()) {
            continue;
        }
        list_root(&root, &mut files, &mut listing);
    }

    // overlapping roots list the same file twice
    files.sort();
    files.dedup_by(|a, b| a.0 == b.0);

    let outcomes = exec.map(&files, |(path, size)| process_file(path, *size, limits));
    let mut all = listing;
    for outcome in outcomes {
        all.absorb(outcome);
    }

    let mut candidates: Vec<(String, CandidateFile)> = all
        .candidates
        .into_iter()
        .filter(|c| formats.contains(&c.sniff.format))
        .map(|c| (c.path.to_string(), c))
        .collect();
    candidates.sort_by(|a, b| a.0.cmp(&b.0));
    let mut deduped: Vec<CandidateFile> = Vec::with_capacity(candidates.len());
    let mut last: Option<String> = None;
    for (rendered, candidate) in candidates {
        if last.as_deref() == Some(rendered.as_str()) {
            all.issues.push(WalkIssue::error(
                &rendered,
                "duplicate archive member name; first occurrence kept",
            ));
            all.unreadable.push(candidate.path);
            continue;
        }
        last = Some(rendered);
        deduped.push(candidate);
    }

    all.unreadable.sort();
    all.unreadable.dedup();
    all.issues
        .sort_by(|a, b| a.path.cmp(&b.path).then_with(|| a.message.cmp(&b.message)));

    Walk {
        candidates: deduped,
        issues: all.issues,
        unreadable: all.unreadable,
    }
}

fn list_root(root: &Path, files: &mut Vec<(PathBuf, u64)>, out: &mut Outcome) {
    if let Err(e) = root.symlink_metadata() {
        out.issues
            .push(WalkIssue::error(root.display(), format!("root not accessible: {e}")));
        out.unreadable.push(LogicalPath::plain(root));
        return;
    }
    for entry in WalkDir::new(root).follow_links(false) {
        let entry = match entry {
            Ok(entry) => entry,
            Err(e) => {
                let path = e.path().unwrap_or(root).to_path_buf();
                out.issues.push(WalkIssue::error(path.display(), e));
                out.unreadable.push(LogicalPath::plain(&path));
                continue;
            }
        };
        // symlinks, sockets, fifos and devices are skipped
        if !entry.file_type().is_file() {
            continue;
        }
        match entry.metadata() {
            Ok(meta) => files.push((entry.into_path(), meta.len())),
            Err(e) => {
                out.issues.push(WalkIssue::error(entry.path().display(), e));
                out.unreadable.push(LogicalPath::plain(entry.path()));
            }
        }
    }
}

fn process_file(path: &Path, size: u64, limits: &WalkLimits) -> Outcome {
    let logical = LogicalPath::plain(path);
    let mut out = Outcome::default();
    if limits.too_large(size) {
        out.issues.push(WalkIssue {
            path: logical.to_string(),
            kind: IssueKind::SizeLimit,
            message: format!(
                "{size} bytes exceeds the {} byte limit",
                limits.max_file_bytes.unwrap_or_default()
            ),
        });
        out.unreadable.push(logical);
        return out;
    }

    let source = ByteSource::File(path.to_path_buf());
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let sniffed = source
        .open()
        .and_then(|mut reader| sniff::sniff_format_with(&mut reader, size, &name, &limits.sniff));
    let sniff = match sniffed {
        Ok(sniff) => sniff,
        Err(e) => {
            out.issues.push(WalkIssue::error(&logical, e));
            out.unreadable.push(logical);
            return out;
        }
    };

    let candidate = CandidateFile {
        path: logical,
        size,
        sniff,
        source,
    };
    if candidate.sniff.format.is_archive() {
        let expansion = expand_archive(&candidate, limits);
        out.candidates.extend(expansion.members);
        out.issues.extend(expansion.issues);
        out.unreadable.extend(expansion.unreadable);
    }
    out.candidates.push(candidate);
    out
}
