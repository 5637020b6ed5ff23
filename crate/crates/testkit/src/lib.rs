//! Fixture builders shared by the complyscan test suites and benches.
//!
//! Everything here is written from the file-format definitions directly and
//! does not depend on the scanner, so tests can use it as an oracle.

pub mod archive;
pub mod corpus;
pub mod dicom;
pub mod nifti;

pub use archive::{gzip_of, jpeg_bytes, png_bytes, tar_of, zip_of};
pub use corpus::{generate_corpus, render_logical, Corpus, Planted, DICOM, NIFTI1};
pub use dicom::{BuiltDicom, DicomBuilder, Element, Pixels, Syntax, Value};
pub use nifti::NiftiBuilder;
