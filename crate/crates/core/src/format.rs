use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Content-derived file format verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum FileFormat {
    Dicom,
    Nifti1,
    Jpeg,
    Png,
    Zip,
    Gzip,
    Tar,
    Unknown,
}

impl FileFormat {
    pub const ALL: [FileFormat; 8] = [
        FileFormat::Dicom,
        FileFormat::Nifti1,
        FileFormat::Jpeg,
        FileFormat::Png,
        FileFormat::Zip,
        FileFormat::Gzip,
        FileFormat::Tar,
        FileFormat::Unknown,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FileFormat::Dicom => "DICOM",
            FileFormat::Nifti1 => "NIFTI1",
            FileFormat::Jpeg => "JPEG",
            FileFormat::Png => "PNG",
            FileFormat::Zip => "ZIP",
            FileFormat::Gzip => "GZIP",
            FileFormat::Tar => "TAR",
            FileFormat::Unknown => "UNKNOWN",
        }
    }

    /// Formats that carry patient data and may be tracked in the ledger.
    pub fn is_sensitive(self) -> bool {
        matches!(self, FileFormat::Dicom | FileFormat::Nifti1)
    }

    pub fn is_archive(self) -> bool {
        matches!(self, FileFormat::Zip | FileFormat::Gzip | FileFormat::Tar)
    }

    /// The format a file name's extension claims, if the extension is known.
    pub fn from_extension(ext: &str) -> Option<FileFormat> {
        let format = match ext.to_ascii_lowercase().as_str() {
            "dcm" | "dicom" | "dic" => FileFormat::Dicom,
            "nii" | "hdr" => FileFormat::Nifti1,
            "jpg" | "jpeg" | "jpe" => FileFormat::Jpeg,
            "png" => FileFormat::Png,
            "zip" => FileFormat::Zip,
            "gz" | "tgz" => FileFormat::Gzip,
            "tar" => FileFormat::Tar,
            _ => return None,
        };
        Some(format)
    }
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownFormatName(pub String);

impl fmt::Display for UnknownFormatName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown file format {:?}", self.0)
    }
}

impl std::error::Error for UnknownFormatName {}

impl FromStr for FileFormat {
    type Err = UnknownFormatName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let format = match s.to_ascii_uppercase().as_str() {
            "DICOM" | "DCM" => FileFormat::Dicom,
            "NIFTI1" | "NIFTI" | "NIFTI-1" | "NII" => FileFormat::Nifti1,
            "JPEG" | "JPG" => FileFormat::Jpeg,
            "PNG" => FileFormat::Png,
            "ZIP" => FileFormat::Zip,
            "GZIP" | "GZ" => FileFormat::Gzip,
            "TAR" => FileFormat::Tar,
            "UNKNOWN" => FileFormat::Unknown,
            _ => return Err(UnknownFormatName(s.to_string())),
        };
        Ok(format)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ByteOrder {
    Little,
    Big,
}

impl ByteOrder {
    pub fn u16(self, b: [u8; 2]) -> u16 {
        match self {
            ByteOrder::Little => u16::from_le_bytes(b),
            ByteOrder::Big => u16::from_be_bytes(b),
        }
    }

    pub fn u32(self, b: [u8; 4]) -> u32 {
        match self {
            ByteOrder::Little => u32::from_le_bytes(b),
            ByteOrder::Big => u32::from_be_bytes(b),
        }
    }

    pub fn f32(self, b: [u8; 4]) -> f32 {
        f32::from_bits(self.u32(b))
    }

    pub fn flipped(self) -> ByteOrder {
        match self {
            ByteOrder::Little => ByteOrder::Big,
            ByteOrder::Big => ByteOrder::Little,
        }
    }
}

impl fmt::Display for ByteOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ByteOrder::Little => "little endian",
            ByteOrder::Big => "big endian",
        })
    }
}
