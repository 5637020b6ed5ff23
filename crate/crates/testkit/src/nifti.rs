//! NIfTI-1 header and single-file image writer.

#[derive(Debug, Clone, PartialEq)]
pub struct NiftiBuilder {
    pub big_endian: bool,
    /// `n+1` single file when true, `ni1` header of a pair otherwise.
    pub single_file: bool,
    pub dims: [u16; 3],
    pub vox_offset: f32,
    pub data: Vec<u8>,
    pub description: String,
}

impl NiftiBuilder {
    /// A single-file uint8 volume with data right after the 352-byte header.
    pub fn single(big_endian: bool, dims: [u16; 3]) -> Self {
        let n = dims.iter().map(|&d| d as usize).product::<usize>();
        NiftiBuilder {
            big_endian,
            single_file: true,
            dims,
            vox_offset: 352.0,
            data: (0..n).map(|i| (i * 7 % 251) as u8).collect(),
            description: "subject 0001".into(),
        }
    }

    /// The `.hdr` half of a pair; the voxels live in the `.img` file.
    pub fn pair_header(big_endian: bool, dims: [u16; 3]) -> Self {
        NiftiBuilder {
            single_file: false,
            vox_offset: 0.0,
            data: Vec::new(),
            ..NiftiBuilder::single(big_endian, dims)
        }
    }

    pub fn header(&self) -> Vec<u8> {
        let mut h = vec![0u8; 348];
        let be = self.big_endian;
        let i32b = |v: i32| if be { v.to_be_bytes() } else { v.to_le_bytes() };
        let i16b = |v: i16| if be { v.to_be_bytes() } else { v.to_le_bytes() };
        let f32b = |v: f32| if be { v.to_be_bytes() } else { v.to_le_bytes() };
        h[0..4].copy_from_slice(&i32b(348));
        h[38] = b'r';
        let dim = [
            3i16,
            self.dims[0] as i16,
            self.dims[1] as i16,
            self.dims[2] as i16,
            1,
            1,
            1,
            1,
        ];
        for (i, d) in dim.iter().enumerate() {
            h[40 + 2 * i..42 + 2 * i].copy_from_slice(&i16b(*d));
        }
        h[70..72].copy_from_slice(&i16b(2));
        h[72..74].copy_from_slice(&i16b(8));
        for i in 0..8 {
            h[76 + 4 * i..80 + 4 * i].copy_from_slice(&f32b(1.0));
        }
        h[108..112].copy_from_slice(&f32b(self.vox_offset));
        h[112..116].copy_from_slice(&f32b(1.0));
        let desc = self.description.as_bytes();
        let n = desc.len().min(79);
        h[148..148 + n].copy_from_slice(&desc[..n]);
        h[344..348].copy_from_slice(if self.single_file { b"n+1\0" } else { b"ni1\0" });
        h
    }

    pub fn build(&self) -> Vec<u8> {
        let mut out = self.header();
        if self.single_file {
            out.resize((self.vox_offset as usize).max(352), 0);
            out.extend(&self.data);
        }
        out
    }
}
