use std::collections::BTreeSet;
use std::fs;
use std::ops::Range;
use std::path::{Path, PathBuf};

use complyscan_core::discovery::{walk_roots, WalkLimits};
use complyscan_core::fingerprint::fingerprint;
use complyscan_core::{FileFormat, Fingerprint};
use complyscan_testkit::{DicomBuilder, NiftiBuilder, Pixels, Syntax};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;
use sha2::{Digest as _, Sha256};

use crate::Outcome;

const MUTATIONS: usize = 100;
/// NIfTI-1 `descrip`, 80 bytes of free text.
const NIFTI_DESCRIP: Range<usize> = 148..228;

struct Sample {
    name: String,
    bytes: Vec<u8>,
    pixels: Range<usize>,
    /// Header bytes that can be rewritten without moving anything.
    meta: Vec<usize>,
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

fn text_positions(bytes: &[u8], text: &str) -> Vec<usize> {
    let at = find(bytes, text.as_bytes()).unwrap_or_else(|| panic!("{text:?} not in sample"));
    text.bytes()
        .enumerate()
        .filter(|(_, b)| b.is_ascii_alphanumeric())
        .map(|(i, _)| at + i)
        .collect()
}

fn fixture_samples() -> Vec<Sample> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let text = fs::read_to_string(dir.join("expected.json")).unwrap();
    let expected: serde_json::Map<String, Value> = serde_json::from_str(&text).unwrap();
    let mut out = Vec::new();
    for (name, want) in expected {
        let bytes = fs::read(dir.join(&name)).unwrap();
        let len = bytes.len();
        let (pixels, meta) = match want["format"].as_str().unwrap() {
            "DICOM" => {
                let pixels = match want["pixel_data_span"].as_array() {
                    Some(span) => {
                        let start = span[0].as_u64().unwrap() as usize;
                        start..start + span[1].as_u64().unwrap() as usize
                    }
                    None => len..len,
                };
                let mut meta = text_positions(&bytes, "Doe^Jane");
                meta.extend(text_positions(&bytes, "PID-0042"));
                (pixels, meta)
            }
            _ => {
                let vox = want["vox_offset"].as_u64().unwrap() as usize;
                let pixels = if vox == 0 { len..len } else { vox..len };
                (pixels, NIFTI_DESCRIP.collect())
            }
        };
        out.push(Sample {
            name,
            bytes,
            pixels,
            meta,
        });
    }
    out
}

fn built_samples() -> Vec<Sample> {
    let mut out = Vec::new();
    for (i, syntax) in [Syntax::ExplicitLittle, Syntax::ImplicitLittle, Syntax::ExplicitBig]
        .into_iter()
        .enumerate()
    {
        let patient = format!("PATIENT^{i:04}");
        let built = DicomBuilder::new(syntax)
            .patient(&patient, &format!("ID{i:06}"))
            .pixels(Pixels::Native((0..64).map(|b| b as u8).collect()))
            .build();
        let (start, len) = built.pixel_span.unwrap();
        out.push(Sample {
            name: format!("built-{i}.dcm"),
            meta: text_positions(&built.bytes, &patient),
            pixels: start as usize..(start + len) as usize,
            bytes: built.bytes,
        });
    }
    let frags = DicomBuilder::new(Syntax::ExplicitLittle)
        .patient("FRAG^MENT", "F1")
        .pixels(Pixels::Encapsulated(vec![vec![7; 20], vec![9; 10]]))
        .build();
    let (start, len) = frags.pixel_span.unwrap();
    out.push(Sample {
        name: "built-frags.dcm".into(),
        meta: text_positions(&frags.bytes, "FRAG^MENT"),
        pixels: start as usize..(start + len) as usize,
        bytes: frags.bytes,
    });
    for (i, big) in [false, true].into_iter().enumerate() {
        let builder = NiftiBuilder::single(big, [4, 3, 2]);
        let bytes = builder.build();
        out.push(Sample {
            name: format!("built-{i}.nii"),
            pixels: builder.vox_offset as usize..bytes.len(),
            meta: NIFTI_DESCRIP.collect(),
            bytes,
        });
    }
    out
}

fn sha(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn fingerprint_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<Fingerprint, String> {
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    fs::write(dir.join(name), bytes).map_err(|e| e.to_string())?;
    let formats: BTreeSet<FileFormat> = [FileFormat::Dicom, FileFormat::Nifti1].into();
    let walk = walk_roots(&[dir.to_path_buf()], &formats, &WalkLimits::default());
    ensure!(
        walk.candidates.len() == 1,
        "{name}: {} candidates",
        walk.candidates.len()
    );
    let outcome = fingerprint(&walk.candidates[0]).map_err(|e| e.to_string())?;
    ensure!(outcome.split_error.is_none(), "{name}: {:?}", outcome.split_error);
    Ok(outcome.fingerprint)
}

/// The split digests must equal SHA-256 of the sliced bytes.
fn check_against_slices(sample: &Sample, bytes: &[u8], fp: &Fingerprint) -> Result<(), String> {
    let r = &sample.pixels;
    let meta = sha(&[&bytes[..r.start], &bytes[r.end..]]);
    let pixel = sha(&[&bytes[r.clone()]]);
    ensure!(fp.file_hash.to_hex() == sha(&[bytes]), "{}: file hash", sample.name);
    ensure!(
        fp.meta_hash.map(|d| d.to_hex()) == Some(meta),
        "{}: meta hash",
        sample.name
    );
    ensure!(
        fp.pixel_hash.map(|d| d.to_hex()) == Some(pixel),
        "{}: pixel hash",
        sample.name
    );
    Ok(())
}

pub fn check() -> Outcome {
    let samples: Vec<Sample> = fixture_samples().into_iter().chain(built_samples()).collect();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let (mut pixel_runs, mut meta_runs) = (0, 0);

    for k in 0..MUTATIONS {
        let sample = &samples[k % samples.len()];
        let mut mutated = sample.bytes.clone();
        let touch_pixels = !sample.pixels.is_empty() && rng.gen_bool(0.5);
        let at = if touch_pixels {
            let i = rng.gen_range(sample.pixels.clone());
            mutated[i] ^= rng.gen_range(1..=255u8);
            i
        } else {
            let i = sample.meta[rng.gen_range(0..sample.meta.len())];
            let old = mutated[i];
            let alphabet: Vec<u8> = (b'A'..=b'Z').chain(b'0'..=b'9').filter(|&c| c != old).collect();
            mutated[i] = alphabet[rng.gen_range(0..alphabet.len())];
            i
        };

        let before = fingerprint_file(&dir.path().join(format!("{k}/before")), &sample.name, &sample.bytes)?;
        let after = fingerprint_file(&dir.path().join(format!("{k}/after")), &sample.name, &mutated)?;
        check_against_slices(sample, &sample.bytes, &before)?;
        check_against_slices(sample, &mutated, &after)?;

        let what = if touch_pixels { "pixel" } else { "meta" };
        ensure!(
            before.file_hash != after.file_hash,
            "{} {what} byte {at}: file hash unchanged",
            sample.name
        );
        if touch_pixels {
            pixel_runs += 1;
            ensure!(
                before.meta_hash == after.meta_hash,
                "{} pixel byte {at}: meta hash moved",
                sample.name
            );
            ensure!(
                before.pixel_hash != after.pixel_hash,
                "{} pixel byte {at}: pixel hash unchanged",
                sample.name
            );
        } else {
            meta_runs += 1;
            ensure!(
                before.pixel_hash == after.pixel_hash,
                "{} meta byte {at}: pixel hash moved",
                sample.name
            );
            ensure!(
                before.meta_hash != after.meta_hash,
                "{} meta byte {at}: meta hash unchanged",
                sample.name
            );
        }
    }
    Ok(format!(
        "{MUTATIONS} mutations over {} files ({pixel_runs} pixel, {meta_runs} meta); the other digest never moved, file hash always did",
        samples.len()
    ))
}
