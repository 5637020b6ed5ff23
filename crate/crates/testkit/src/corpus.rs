//! Seeded directory trees with a known set of planted sensitive files.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

use crate::archive::{gzip_of, jpeg_bytes, png_bytes, tar_of, zip_of};
use crate::dicom::{DicomBuilder, Pixels, Syntax};
use crate::nifti::NiftiBuilder;

pub const DICOM: &str = "DICOM";
pub const NIFTI1: &str = "NIFTI1";

/// A sensitive file the scanner must report.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Planted {
    /// Rendered logical path: `outer!member!member`.
    pub logical: String,
    pub format: &'static str,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub planted: Vec<Planted>,
    /// Files that look sensitive by name or location but are not.
    pub decoys: Vec<String>,
}

/// Renders a logical path the way the scanner does.
pub fn render_logical(outer: &Path, members: &[&str]) -> String {
    let mut out = escape(&outer.to_string_lossy());
    for m in members {
        out.push('!');
        out.push_str(&escape(m));
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('%', "%25").replace('!', "%21")
}

struct Payload {
    bytes: Vec<u8>,
    name: String,
    format: Option<&'static str>,
}

fn noise(rng: &mut StdRng, n: usize) -> Vec<u8> {
    // high first byte keeps the heuristic and every magic away
    let mut v: Vec<u8> = (0..n).map(|_| rng.gen()).collect();
    if let Some(b) = v.first_mut() {
        *b = 0xC3;
    }
    if v.len() > 1 {
        v[1] = 0x7A;
    }
    v
}

fn sensitive(rng: &mut StdRng, serial: usize) -> Payload {
    let kind = rng.gen_range(0..8);
    let patient = format!("PATIENT^{serial:04}");
    let id = format!("ID{serial:06}");
    let (bytes, format, natural) = match kind {
        0..=2 => {
            let syntax = [Syntax::ExplicitLittle, Syntax::ImplicitLittle, Syntax::ExplicitBig][kind];
            let n = rng.gen_range(1..64) * 2;
            let pixels = Pixels::Native(noise(rng, n));
            let b = DicomBuilder::new(syntax).patient(&patient, &id).pixels(pixels).build();
            (b.bytes, DICOM, "dcm")
        }
        3 => {
            let b = DicomBuilder::bare().patient(&patient, &id).build();
            (b.bytes, DICOM, "dcm")
        }
        4 => {
            let frags = vec![noise(rng, 20), noise(rng, 9)];
            let b = DicomBuilder::new(Syntax::ExplicitLittle)
                .patient(&patient, &id)
                .pixels(Pixels::Encapsulated(frags))
                .build();
            (b.bytes, DICOM, "dcm")
        }
        5 => {
            let b = DicomBuilder::new(Syntax::ExplicitLittle)
                .patient(&patient, &id)
                .pixels(Pixels::None)
                .build();
            (b.bytes, DICOM, "dcm")
        }
        6 => {
            let dims = [rng.gen_range(1..6), rng.gen_range(1..6), rng.gen_range(1..4)];
            (NiftiBuilder::single(rng.gen(), dims).build(), NIFTI1, "nii")
        }
        _ => (NiftiBuilder::pair_header(rng.gen(), [2, 2, 2]).build(), NIFTI1, "hdr"),
    };
    let ext = match rng.gen_range(0..10) {
        0 => "jpg".to_string(),
        1 => "txt".to_string(),
        2 => String::new(),
        3 => natural.to_ascii_uppercase(),
        4 => "bak".to_string(),
        _ => natural.to_string(),
    };
    let stem = format!("img{serial:04}");
    let name = if ext.is_empty() { stem } else { format!("{stem}.{ext}") };
    Payload {
        bytes,
        name,
        format: Some(format),
    }
}

fn decoy(rng: &mut StdRng, serial: usize) -> Payload {
    let (bytes, name) = match rng.gen_range(0..7) {
        0 => (jpeg_bytes(), format!("scan{serial}.dcm")),
        1 => (png_bytes(), format!("brain{serial}.nii")),
        2 => (
            b"patient notes, nothing imaged\n".to_vec(),
            format!("notes{serial}.txt"),
        ),
        3 => (Vec::new(), format!("empty{serial}.dcm")),
        4 => (noise(rng, 300), format!("blob{serial}.img")),
        5 => {
            let mut h = NiftiBuilder::single(false, [2, 2, 2]).build();
            h[344..348].copy_from_slice(b"xyz\0");
            (h, format!("badmagic{serial}.nii"))
        }
        _ => {
            let mut b = vec![0u8; 200];
            b[..4].copy_from_slice(b"DIC\0");
            (b, format!("almost{serial}.dcm"))
        }
    };
    Payload {
        bytes,
        name,
        format: None,
    }
}

struct Gen<'a> {
    root: &'a Path,
    rng: StdRng,
    serial: usize,
    corpus: Corpus,
}

impl Gen<'_> {
    fn payloads(&mut self, n: usize) -> Vec<Payload> {
        (0..n)
            .map(|_| {
                self.serial += 1;
                let serial = self.serial;
                if self.rng.gen_bool(0.7) {
                    sensitive(&mut self.rng, serial)
                } else {
                    decoy(&mut self.rng, serial)
                }
            })
            .collect()
    }

    fn record(&mut self, outer: &Path, members: &[&str], payload: &Payload) {
        let logical = render_logical(outer, members);
        match payload.format {
            Some(format) => self.corpus.planted.push(Planted { logical, format }),
            None => self.corpus.decoys.push(logical),
        }
    }

    fn dir(&mut self) -> io::Result<PathBuf> {
        let choices = [
            "".to_string(),
            "studies".to_string(),
            "studies/2024/site a".to_string(),
            ".cache/tmp".to_string(),
            "deep/a/b/c/d/e/f".to_string(),
            format!("users/u{}", self.rng.gen_range(0..5)),
            "~tmp".to_string(),
        ];
        let rel = choices.choose(&mut self.rng).unwrap().clone();
        let dir = self.root.join(rel);
        fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn unique(&mut self, dir: &Path, name: &str) -> PathBuf {
        let mut path = dir.join(name);
        let mut k = 0;
        while path.exists() {
            k += 1;
            path = dir.join(format!("{k}-{name}"));
        }
        path
    }

    fn unit(&mut self) -> io::Result<()> {
        let dir = self.dir()?;
        match self.rng.gen_range(0..10) {
            0..=3 => {
                let p = self.payloads(1).pop().unwrap();
                let path = self.unique(&dir, &p.name);
                fs::write(&path, &p.bytes)?;
                self.record(&path, &[], &p);
            }
            4 | 5 => {
                let n = self.rng.gen_range(1..5);
                let mut ps = self.payloads(n);
                if self.rng.gen_bool(0.2) {
                    if let Some(p) = ps.first_mut() {
                        p.name = format!("odd!name%{}", p.name);
                    }
                }
                let names: Vec<String> = ps.iter().map(|p| format!("series/{}", p.name)).collect();
                let members: Vec<(&str, &[u8])> = names
                    .iter()
                    .map(String::as_str)
                    .zip(ps.iter().map(|p| p.bytes.as_slice()))
                    .collect();
                let path = self.unique(&dir, &format!("bundle{}.zip", self.serial));
                fs::write(&path, zip_of(&members))?;
                for (name, p) in names.iter().zip(&ps) {
                    self.record(&path, &[name], p);
                }
            }
            6 => {
                let n = self.rng.gen_range(1..4);
                let ps = self.payloads(n);
                let members: Vec<(&str, &[u8])> = ps.iter().map(|p| (p.name.as_str(), p.bytes.as_slice())).collect();
                let tar = tar_of(&members);
                if self.rng.gen_bool(0.5) {
                    let path = self.unique(&dir, &format!("export{}.tar", self.serial));
                    fs::write(&path, tar)?;
                    for p in &ps {
                        self.record(&path, &[&p.name], p);
                    }
                } else {
                    let path = self.unique(&dir, &format!("export{}.tar.gz", self.serial));
                    fs::write(&path, gzip_of(&tar))?;
                    let inner = path
                        .file_name()
                        .unwrap()
                        .to_string_lossy()
                        .trim_end_matches(".gz")
                        .to_string();
                    for p in &ps {
                        self.record(&path, &[&inner, &p.name], p);
                    }
                }
            }
            7 => {
                let p = self.payloads(1).pop().unwrap();
                let path = self.unique(&dir, &format!("{}.gz", p.name));
                fs::write(&path, gzip_of(&p.bytes))?;
                let inner = path
                    .file_name()
                    .unwrap()
                    .to_string_lossy()
                    .trim_end_matches(".gz")
                    .to_string();
                self.record(&path, &[&inner], &p);
            }
            8 => {
                let ps = self.payloads(2);
                let inner_members: Vec<(&str, &[u8])> =
                    ps.iter().map(|p| (p.name.as_str(), p.bytes.as_slice())).collect();
                let inner = zip_of(&inner_members);
                let outer = zip_of(&[("nested/inner.zip", &inner), ("readme.txt", b"see inner")]);
                if self.rng.gen_bool(0.5) {
                    let path = self.unique(&dir, &format!("outer{}.zip", self.serial));
                    fs::write(&path, outer)?;
                    for p in &ps {
                        self.record(&path, &["nested/inner.zip", &p.name], p);
                    }
                } else {
                    // three levels: gzip, zip, zip
                    let path = self.unique(&dir, &format!("outer{}.zip.gz", self.serial));
                    fs::write(&path, gzip_of(&outer))?;
                    let gunzipped = path
                        .file_name()
                        .unwrap()
                        .to_string_lossy()
                        .trim_end_matches(".gz")
                        .to_string();
                    for p in &ps {
                        self.record(&path, &[&gunzipped, "nested/inner.zip", &p.name], p);
                    }
                }
            }
            _ => {
                // NIfTI pair: the .hdr is sensitive, the bare .img is not
                self.serial += 1;
                let stem = format!("pair{}", self.serial);
                let hdr = self.unique(&dir, &format!("{stem}.hdr"));
                let img = hdr.with_extension("img");
                fs::write(&hdr, NiftiBuilder::pair_header(self.rng.gen(), [2, 2, 2]).build())?;
                let voxels = noise(&mut self.rng, 8);
                fs::write(&img, voxels)?;
                self.corpus.planted.push(Planted {
                    logical: render_logical(&hdr, &[]),
                    format: NIFTI1,
                });
                self.corpus.decoys.push(render_logical(&img, &[]));
            }
        }
        Ok(())
    }
}

/// Writes `units` placement units under `root` (an absolute directory).
/// Roughly 70% of payloads are sensitive, so 200 units plant well over
/// 200 files.
pub fn generate_corpus(root: &Path, seed: u64, units: usize) -> io::Result<Corpus> {
    let mut g = Gen {
        root,
        rng: StdRng::seed_from_u64(seed),
        serial: 0,
        corpus: Corpus::default(),
    };
    for _ in 0..units {
        g.unit()?;
    }
    #[cfg(unix)]
    if let Some(target) = g.corpus.planted.iter().find(|p| !p.logical.contains('!')).cloned() {
        let link = root.join("link-to-scan.dcm");
        std::os::unix::fs::symlink(&target.logical, &link)?;
        g.corpus.decoys.push(render_logical(&link, &[]));
    }
    g.corpus.planted.sort();
    g.corpus.decoys.sort();
    Ok(g.corpus)
}
