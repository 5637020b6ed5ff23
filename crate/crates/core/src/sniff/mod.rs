//! Content-based file format identification.
//!
//! Detection order: DICOM with preamble, NIfTI-1, archives (zip, gzip,
//! tar), JPEG / PNG, then DICOM without a preamble, else `UNKNOWN`. The
//! claimed file name never influences the verdict; it only feeds
//! `extension_mismatch`.

pub mod dicom;
pub mod nifti;

use std::io::{self, Read, Seek, SeekFrom};
use std::path::Path;

use serde::Serialize;

pub use dicom::{parse_dicom_envelope, DicomEnvelope, Encoding, Span, Start};
pub use nifti::{parse_nifti_header, NiftiEnvelope, NotNifti};

use crate::format::FileFormat;

/// Bytes read from the head of a stream for signature checks.
pub const MAX_SNIFF_BYTES: u64 = 64 * 1024;

const ZIP_LOCAL: &[u8] = b"PK\x03\x04";
const ZIP_EMPTY: &[u8] = b"PK\x05\x06";
const GZIP: &[u8] = &[0x1F, 0x8B];
const TAR_MAGIC_AT: usize = 257;
const TAR_MAGIC: &[u8] = b"ustar";
const JPEG: &[u8] = &[0xFF, 0xD8, 0xFF];
const PNG: &[u8] = &[0x89, 0x50, 0x4E, 0x47];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SniffConfig {
    /// Known-group elements the preamble-less DICOM heuristic requires.
    pub min_plausible_elements: usize,
}

impl Default for SniffConfig {
    fn default() -> Self {
        SniffConfig {
            min_plausible_elements: dicom::DEFAULT_MIN_PLAUSIBLE_ELEMENTS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE")]
pub enum Envelope {
    Dicom(DicomEnvelope),
    Nifti(NiftiEnvelope),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SniffResult {
    pub format: FileFormat,
    /// Lowercased final extension of the claimed name, possibly empty.
    pub extension_claimed: String,
    pub extension_mismatch: bool,
    pub evidence: Vec<String>,
    pub envelope: Option<Envelope>,
}

impl SniffResult {
    pub fn dicom(&self) -> Option<&DicomEnvelope> {
        match &self.envelope {
            Some(Envelope::Dicom(env)) => Some(env),
            _ => None,
        }
    }

    pub fn nifti(&self) -> Option<&NiftiEnvelope> {
        match &self.envelope {
            Some(Envelope::Nifti(env)) => Some(env),
            _ => None,
        }
    }
}

/// Lowercased extension of the last path component; empty when there is
/// none (including dot-files such as `.bashrc`).
pub fn claimed_extension(name: &str) -> String {
    let last = name.rsplit(['/', '\\']).next().unwrap_or("");
    Path::new(last)
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default()
}

pub fn sniff_format<R: Read + Seek>(reader: &mut R, len: u64, claimed_name: &str) -> io::Result<SniffResult> {
    sniff_format_with(reader, len, claimed_name, &SniffConfig::default())
}

pub fn sniff_format_with<R: Read + Seek>(
    reader: &mut R,
    len: u64,
    claimed_name: &str,
    config: &SniffConfig,
) -> io::Result<SniffResult> {
    reader.seek(SeekFrom::Start(0))?;
    let mut head = Vec::with_capacity(len.min(MAX_SNIFF_BYTES) as usize);
    reader.by_ref().take(len.min(MAX_SNIFF_BYTES)).read_to_end(&mut head)?;

    let mut evidence = Vec::new();
    let len = if (head.len() as u64) < len.min(MAX_SNIFF_BYTES) {
        evidence.push(format!(
            "truncated: stream ended after {} of {} declared bytes",
            head.len(),
            len
        ));
        head.len() as u64
    } else {
        len
    };

    let (format, envelope) = identify(reader, &head, len, config, &mut evidence)?;

    let extension_claimed = claimed_extension(claimed_name);
    let claimed = FileFormat::from_extension(&extension_claimed);
    let extension_mismatch = matches!(claimed, Some(c) if c != format);
    if extension_mismatch {
        evidence.push(format!(
            "extension .{extension_claimed} claims {} but content is {format}",
            claimed.unwrap()
        ));
    }

    Ok(SniffResult {
        format,
        extension_claimed,
        extension_mismatch,
        evidence,
        envelope,
    })
}

fn identify<R: Read + Seek>(
    reader: &mut R,
    head: &[u8],
    len: u64,
    config: &SniffConfig,
    evidence: &mut Vec<String>,
) -> io::Result<(FileFormat, Option<Envelope>)> {
    if dicom::has_preamble(head) {
        evidence.push("DICM magic at offset 128 after 128-byte preamble".into());
        let env = dicom_envelope(reader, len, Start::Preamble, evidence)?;
        return Ok((FileFormat::Dicom, Some(env)));
    }

    if let Ok(env) = parse_nifti_header(head) {
        evidence.push(format!(
            "NIfTI-1 sizeof_hdr=348 ({}), magic {:?}, vox_offset {}",
            env.byte_order, env.magic, env.vox_offset
        ));
        return Ok((FileFormat::Nifti1, Some(Envelope::Nifti(env))));
    }

    if head.starts_with(ZIP_LOCAL) {
        evidence.push("ZIP local file header PK\\x03\\x04".into());
        return Ok((FileFormat::Zip, None));
    }
    if head.starts_with(ZIP_EMPTY) {
        evidence.push("ZIP end-of-central-directory PK\\x05\\x06 (empty archive)".into());
        return Ok((FileFormat::Zip, None));
    }
    if head.starts_with(GZIP) {
        evidence.push("GZIP magic 1F 8B".into());
        return Ok((FileFormat::Gzip, None));
    }
    if head.len() >= TAR_MAGIC_AT + TAR_MAGIC.len() && &head[TAR_MAGIC_AT..TAR_MAGIC_AT + TAR_MAGIC.len()] == TAR_MAGIC
    {
        evidence.push("TAR ustar magic at offset 257".into());
        return Ok((FileFormat::Tar, None));
    }
    if head.starts_with(JPEG) {
        evidence.push("JPEG SOI marker FF D8 FF".into());
        return Ok((FileFormat::Jpeg, None));
    }
    if head.starts_with(PNG) {
        evidence.push("PNG signature 89 50 4E 47".into());
        return Ok((FileFormat::Png, None));
    }

    if head.starts_with(dicom::MAGIC) {
        evidence.push("DICM magic at offset 0 without preamble".into());
        let env = dicom_envelope(reader, len, Start::BareMagic, evidence)?;
        return Ok((FileFormat::Dicom, Some(env)));
    }
    if let Some((enc, known)) = dicom::plausible_encoding(head, len, config.min_plausible_elements) {
        evidence.push(format!(
            "no preamble; {known} plausible data elements as {}",
            dicom::describe_encoding(enc)
        ));
        let env = dicom_envelope(reader, len, Start::Raw(enc), evidence)?;
        return Ok((FileFormat::Dicom, Some(env)));
    }

    if len == 0 {
        evidence.push("empty stream".into());
    } else {
        evidence.push("no known signature".into());
    }
    Ok((FileFormat::Unknown, None))
}

fn dicom_envelope<R: Read + Seek>(
    reader: &mut R,
    len: u64,
    start: Start,
    evidence: &mut Vec<String>,
) -> io::Result<Envelope> {
    let env = parse_dicom_envelope(reader, len, start)?;
    if let Some(ts) = &env.transfer_syntax {
        evidence.push(format!("transfer syntax {ts}"));
    }
    if env.deflated {
        evidence.push("deflated data set; element walk skipped".into());
    }
    if let Some(at) = env.truncated_at {
        evidence.push(format!("truncated-walk at offset {at}"));
    }
    match env.pixel_data_span {
        Some(span) => evidence.push(format!(
            "pixel data value at offset {} length {}",
            span.offset, span.length
        )),
        None => evidence.push("no pixel data element".into()),
    }
    Ok(Envelope::Dicom(env))
}

/// Sniffs an in-memory buffer.
pub fn sniff_bytes(bytes: &[u8], claimed_name: &str) -> SniffResult {
    sniff_format(&mut io::Cursor::new(bytes), bytes.len() as u64, claimed_name).expect("in-memory reads cannot fail")
}
