//! SHA-256 fingerprints: the whole file, plus separate metadata and
//! pixel-data digests for DICOM and NIfTI.
//!
//! The split partitions the file into two disjoint byte regions. For DICOM
//! the pixel region is the value bytes of the top-level Pixel Data element
//! (its tag/VR/length header stays on the metadata side). For NIfTI it is
//! everything from `vox_offset` on. An empty region hashes to the digest of
//! the empty message.

use std::fmt;
use std::io::{self, Read};
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest as _, Sha256};

use crate::discovery::CandidateFile;
use crate::error::{Error, Result};
use crate::sniff::{DicomEnvelope, Envelope, NiftiEnvelope};

const CHUNK: usize = 64 * 1024;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; 32]);

impl Digest {
    pub fn of(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn empty() -> Digest {
        Digest::of(&[])
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestParseError(pub String);

impl fmt::Display for DigestParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} is not 64 lowercase hex characters", self.0)
    }
}

impl std::error::Error for DigestParseError {}

impl FromStr for Digest {
    type Err = DigestParseError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let err = || DigestParseError(s.to_string());
        if s.len() != 64 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(err());
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| err())?;
        }
        Ok(Digest(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(deserializer)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fingerprint {
    pub file_hash: Digest,
    pub meta_hash: Option<Digest>,
    pub pixel_hash: Option<Digest>,
}

impl Fingerprint {
    pub fn whole_only(file_hash: Digest) -> Self {
        Fingerprint {
            file_hash,
            meta_hash: None,
            pixel_hash: None,
        }
    }
}

/// Streaming SHA-256 of everything `reader` yields.
pub fn hash_whole<R: Read>(mut reader: R) -> io::Result<Digest> {
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; CHUNK];
    loop {
        match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => hasher.update(&buf[..n]),
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(Digest(hasher.finalize().into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitDigests {
    pub file: Digest,
    pub meta: Digest,
    pub pixel: Digest,
}

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("pixel region {start}..{end} lies outside the {len}-byte file")]
    OutOfBounds { start: u64, end: u64, len: u64 },
    #[error("stream ended after {read} of {len} bytes")]
    ShortRead { read: u64, len: u64 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// One pass over a `len`-byte stream, routing `pixel` bytes to the pixel
/// digest and all others to the metadata digest; every byte also feeds the
/// whole-file digest.
pub fn hash_partitioned<R: Read>(mut reader: R, len: u64, pixel: Range<u64>) -> Result<SplitDigests, SplitError> {
    if pixel.start > pixel.end || pixel.end > len {
        return Err(SplitError::OutOfBounds {
            start: pixel.start,
            end: pixel.end,
            len,
        });
    }
    let mut file = Sha256::new();
    let mut meta = Sha256::new();
    let mut pix = Sha256::new();
    let mut buf = vec![0u8; CHUNK];
    let mut pos = 0u64;
    while pos < len {
        let want = (len - pos).min(CHUNK as u64) as usize;
        let n = match reader.read(&mut buf[..want]) {
            Ok(0) => return Err(SplitError::ShortRead { read: pos, len }),
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        let chunk = &buf[..n];
        file.update(chunk);
        let (start, end) = (pos, pos + n as u64);
        // overlap of [start, end) with the pixel range, relative to the chunk
        let lo = pixel.start.clamp(start, end) - start;
        let hi = pixel.end.clamp(start, end) - start;
        meta.update(&chunk[..lo as usize]);
        pix.update(&chunk[lo as usize..hi as usize]);
        meta.update(&chunk[hi as usize..]);
        pos = end;
    }
    Ok(SplitDigests {
        file: Digest(file.finalize().into()),
        meta: Digest(meta.finalize().into()),
        pixel: Digest(pix.finalize().into()),
    })
}

/// Byte range holding DICOM pixel values; empty when there is no pixel element.
pub fn dicom_pixel_region(envelope: &DicomEnvelope) -> Range<u64> {
    match envelope.pixel_data_span {
        Some(span) => span.offset..span.end(),
        None => 0..0,
    }
}

/// Byte range holding NIfTI voxels: `vox_offset..len` for single-file
/// images, empty for `ni1` header files.
pub fn nifti_pixel_region(envelope: &NiftiEnvelope, len: u64) -> Result<Range<u64>, SplitError> {
    if !envelope.is_single_file() {
        return Ok(0..0);
    }
    if envelope.vox_offset > len {
        return Err(SplitError::OutOfBounds {
            start: envelope.vox_offset,
            end: len,
            len,
        });
    }
    Ok(envelope.vox_offset..len)
}

/// `(meta_digest, pixel_digest)` of a DICOM stream.
pub fn split_hashes_dicom<R: Read>(
    reader: R,
    len: u64,
    envelope: &DicomEnvelope,
) -> Result<(Digest, Digest), SplitError> {
    let d = hash_partitioned(reader, len, dicom_pixel_region(envelope))?;
    Ok((d.meta, d.pixel))
}

/// `(meta_digest, pixel_digest)` of a NIfTI-1 stream.
pub fn split_hashes_nifti<R: Read>(
    reader: R,
    len: u64,
    envelope: &NiftiEnvelope,
) -> Result<(Digest, Digest), SplitError> {
    let region = nifti_pixel_region(envelope, len)?;
    let d = hash_partitioned(reader, len, region)?;
    Ok((d.meta, d.pixel))
}

#[derive(Debug)]
pub struct FingerprintOutcome {
    pub fingerprint: Fingerprint,
    /// Set when the split digests could not be produced; the whole-file
    /// digest is still valid.
    pub split_error: Option<String>,
}

/// Fingerprints a discovered candidate in a single read where possible.
pub fn fingerprint(candidate: &CandidateFile) -> Result<FingerprintOutcome> {
    let path = candidate.path.to_string();
    let len = candidate.size;
    let region = match &candidate.sniff.envelope {
        Some(Envelope::Dicom(env)) => Some(Ok(dicom_pixel_region(env))),
        Some(Envelope::Nifti(env)) => Some(nifti_pixel_region(env, len)),
        None => None,
    };

    let map_err = |e: SplitError| match e {
        SplitError::Io(e) => Error::io(path.clone(), e),
        other => Error::Fingerprint {
            path: path.clone(),
            message: other.to_string(),
        },
    };

    let region = match region {
        None => {
            let digest = hash_whole(candidate.open()?).map_err(|e| Error::io(path.clone(), e))?;
            return Ok(FingerprintOutcome {
                fingerprint: Fingerprint::whole_only(digest),
                split_error: None,
            });
        }
        Some(region) => region,
    };

    match region.and_then(|r| {
        if r.end > len {
            Err(SplitError::OutOfBounds {
                start: r.start,
                end: r.end,
                len,
            })
        } else {
            Ok(r)
        }
    }) {
        Ok(region) => {
            let d = hash_partitioned(candidate.open()?, len, region).map_err(map_err)?;
            Ok(FingerprintOutcome {
                fingerprint: Fingerprint {
                    file_hash: d.file,
                    meta_hash: Some(d.meta),
                    pixel_hash: Some(d.pixel),
                },
                split_error: None,
            })
        }
        Err(e) => {
            let digest = hash_whole(candidate.open()?).map_err(|e| Error::io(path.clone(), e))?;
            Ok(FingerprintOutcome {
                fingerprint: Fingerprint::whole_only(digest),
                split_error: Some(e.to_string()),
            })
        }
    }
}
