use std::io::{Read, Seek};
use std::sync::Arc;

use flate2::read::MultiGzDecoder;

use super::{ByteSource, CandidateFile, IssueKind, LogicalPath, WalkIssue, WalkLimits};
use crate::format::FileFormat;
use crate::sniff;

const GUNZIPPED: &str = "(gunzipped)";

#[derive(Debug, Default)]
pub struct Expansion {
    /// Every member, nested archives and their members included.
    pub members: Vec<CandidateFile>,
    pub issues: Vec<WalkIssue>,
    /// Archives (or members) whose contents were not fully enumerated.
    pub unreadable: Vec<LogicalPath>,
}

/// Expands a zip, gzip or tar candidate, recursing into nested archives.
///
/// Members of an archive sit one level deeper than the archive itself; an
/// archive already at `max_archive_depth` is not opened and a depth-limit
/// note is recorded instead. A corrupt archive yields one error naming it,
/// members read before the corruption are kept.
pub fn expand_archive(candidate: &CandidateFile, limits: &WalkLimits) -> Expansion {
    let mut out = Expansion::default();
    expand_into(candidate, limits, &mut out);
    out
}

fn expand_into(candidate: &CandidateFile, limits: &WalkLimits, out: &mut Expansion) {
    if candidate.path.archive_depth() >= limits.max_archive_depth {
        out.issues.push(WalkIssue {
            path: candidate.path.to_string(),
            kind: IssueKind::DepthLimit,
            message: format!(
                "{} archive not expanded: nesting limit {} reached",
                candidate.sniff.format, limits.max_archive_depth
            ),
        });
        out.unreadable.push(candidate.path.clone());
        return;
    }

    let mut raw_members = Vec::new();
    let result = match candidate.open() {
        Err(e) => Err(e.to_string()),
        Ok(reader) => match candidate.sniff.format {
            FileFormat::Zip => read_zip(reader, limits, &mut raw_members),
            FileFormat::Tar => read_tar(reader, limits, &mut raw_members),
            FileFormat::Gzip => read_gzip(reader, &candidate.path, limits, &mut raw_members),
            other => Err(format!("{other} is not an archive format")),
        },
    };
    if let Err(message) = result {
        out.issues.push(WalkIssue::error(
            &candidate.path,
            format!("corrupt {} archive: {message}", candidate.sniff.format),
        ));
        out.unreadable.push(candidate.path.clone());
    }

    for member in raw_members {
        let path = candidate.path.member(member.name);
        let bytes = match member.bytes {
            Ok(bytes) => bytes,
            Err(size) => {
                out.issues.push(WalkIssue {
                    path: path.to_string(),
                    kind: IssueKind::SizeLimit,
                    message: format!(
                        "{size} bytes exceeds the {} byte limit",
                        limits.max_file_bytes.unwrap_or_default()
                    ),
                });
                out.unreadable.push(path);
                continue;
            }
        };
        let sniff = sniff::sniff_bytes(&bytes, path.leaf_name());
        let member = CandidateFile {
            size: bytes.len() as u64,
            path,
            sniff,
            source: ByteSource::Memory(Arc::from(bytes)),
        };
        if member.sniff.format.is_archive() {
            expand_into(&member, limits, out);
        }
        out.members.push(member);
    }
}

struct RawMember {
    name: String,
    /// Member bytes, or the declared size when it exceeds the limit.
    bytes: Result<Vec<u8>, u64>,
}

fn read_limited(mut reader: impl Read, declared: u64, limits: &WalkLimits) -> Result<Result<Vec<u8>, u64>, String> {
    if limits.too_large(declared) {
        return Ok(Err(declared));
    }
    let cap = limits.max_file_bytes.map(|m| m.saturating_add(1)).unwrap_or(u64::MAX);
    let mut bytes = Vec::with_capacity(declared.min(1 << 24) as usize);
    reader
        .by_ref()
        .take(cap)
        .read_to_end(&mut bytes)
        .map_err(|e| e.to_string())?;
    if limits.too_large(bytes.len() as u64) {
        return Ok(Err(bytes.len() as u64));
    }
    Ok(Ok(bytes))
}

fn read_zip(reader: impl Read + Seek, limits: &WalkLimits, out: &mut Vec<RawMember>) -> Result<(), String> {
    let mut zip = zip::ZipArchive::new(reader).map_err(|e| e.to_string())?;
    for i in 0..zip.len() {
        let entry = zip.by_index(i).map_err(|e| format!("member #{i}: {e}"))?;
        if entry.is_dir() {
            continue;
        }
        let name = entry.name().to_string();
        let declared = entry.size();
        let bytes = read_limited(entry, declared, limits).map_err(|e| format!("{name}: {e}"))?;
        out.push(RawMember { name, bytes });
    }
    Ok(())
}

fn read_tar(reader: impl Read, limits: &WalkLimits, out: &mut Vec<RawMember>) -> Result<(), String> {
    let mut tar = tar::Archive::new(reader);
    for entry in tar.entries().map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        if !entry.header().entry_type().is_file() {
            continue;
        }
        let name = entry
            .path()
            .map(|p| p.to_string_lossy().into_owned())
            .map_err(|e| e.to_string())?;
        let declared = entry.size();
        let bytes = read_limited(entry, declared, limits).map_err(|e| format!("{name}: {e}"))?;
        out.push(RawMember { name, bytes });
    }
    Ok(())
}

fn read_gzip(
    reader: impl Read,
    path: &LogicalPath,
    limits: &WalkLimits,
    out: &mut Vec<RawMember>,
) -> Result<(), String> {
    let bytes = read_limited(MultiGzDecoder::new(reader), 0, limits)?;
    out.push(RawMember {
        name: gunzipped_name(path.leaf_name()),
        bytes,
    });
    Ok(())
}

/// `scan.dcm.gz` -> `scan.dcm`; names without a `.gz` suffix become `(gunzipped)`.
pub(crate) fn gunzipped_name(leaf: &str) -> String {
    let base = leaf.rsplit(['/', '\\']).next().unwrap_or(leaf);
    let lower = base.to_ascii_lowercase();
    match lower.strip_suffix(".gz") {
        Some(stem) if !stem.is_empty() => base[..stem.len()].to_string(),
        _ => GUNZIPPED.to_string(),
    }
}
