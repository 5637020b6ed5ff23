//! NIfTI-1 header recognition (`sizeof_hdr` = 348, magic `n+1` / `ni1`).

use std::fmt;

use serde::Serialize;

use crate::format::ByteOrder;

pub const HEADER_LEN: u32 = 348;
/// First byte after the header and the 4-byte extension flag.
pub const MIN_SINGLE_FILE_VOX_OFFSET: u64 = 352;
pub const MAGIC_SINGLE: &[u8; 4] = b"n+1\0";
pub const MAGIC_PAIR: &[u8; 4] = b"ni1\0";

const VOX_OFFSET_AT: usize = 108;
const MAGIC_AT: usize = 344;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NiftiEnvelope {
    pub byte_order: ByteOrder,
    pub header_length: u32,
    /// `"n+1"` (header and voxels in one file) or `"ni1"` (header of a pair).
    pub magic: String,
    pub vox_offset: u64,
}

impl NiftiEnvelope {
    pub fn is_single_file(&self) -> bool {
        self.magic == "n+1"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NotNifti {
    TooShort,
    HeaderLength,
    Magic,
}

impl fmt::Display for NotNifti {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NotNifti::TooShort => "shorter than a NIfTI-1 header",
            NotNifti::HeaderLength => "sizeof_hdr is not 348 in either byte order",
            NotNifti::Magic => "no n+1/ni1 magic at offset 344",
        })
    }
}

impl std::error::Error for NotNifti {}

pub fn parse_nifti_header(bytes: &[u8]) -> Result<NiftiEnvelope, NotNifti> {
    if bytes.len() < HEADER_LEN as usize {
        return Err(NotNifti::TooShort);
    }
    let word = |at: usize| -> [u8; 4] { bytes[at..at + 4].try_into().unwrap() };

    let byte_order = [ByteOrder::Little, ByteOrder::Big]
        .into_iter()
        .find(|order| order.u32(word(0)) == HEADER_LEN)
        .ok_or(NotNifti::HeaderLength)?;

    let magic = match &word(MAGIC_AT) {
        m if m == MAGIC_SINGLE => "n+1",
        m if m == MAGIC_PAIR => "ni1",
        _ => return Err(NotNifti::Magic),
    };

    // `as` saturates: NaN and negatives become 0.
    let declared = byte_order.f32(word(VOX_OFFSET_AT)).trunc() as u64;
    let vox_offset = if magic == "n+1" {
        declared.max(MIN_SINGLE_FILE_VOX_OFFSET)
    } else {
        declared
    };

    Ok(NiftiEnvelope {
        byte_order,
        header_length: HEADER_LEN,
        magic: magic.to_string(),
        vox_offset,
    })
}
