//! DICOM envelope walking.
//!
//! Only element headers are decoded: tags, VRs and lengths. Values are
//! skipped, except the transfer syntax UID in the file meta group, which
//! selects the byte order and VR mode of the data set that follows.

use std::io::{self, Read, Seek, SeekFrom};

use serde::Serialize;

use crate::format::ByteOrder;

pub const PREAMBLE_LEN: u64 = 128;
pub const MAGIC: &[u8; 4] = b"DICM";

/// Groups a plausible data set starts with.
pub const KNOWN_GROUPS: [u16; 7] = [0x0002, 0x0008, 0x0010, 0x0018, 0x0020, 0x0028, 0x7FE0];
/// Elements parsed by the preamble-less heuristic.
pub const HEURISTIC_ELEMENTS: usize = 8;
/// Known-group elements the heuristic needs before it accepts a parse.
pub const DEFAULT_MIN_PLAUSIBLE_ELEMENTS: usize = 3;

const UNDEFINED: u32 = 0xFFFF_FFFF;
const PIXEL_DATA: Tag = Tag(0x7FE0, 0x0010);
const ITEM: Tag = Tag(0xFFFE, 0xE000);
const ITEM_END: Tag = Tag(0xFFFE, 0xE00D);
const SEQUENCE_END: Tag = Tag(0xFFFE, 0xE0DD);
const TRANSFER_SYNTAX: Tag = Tag(0x0002, 0x0010);
const MAX_NESTING: usize = 32;

const TS_IMPLICIT_LE: &str = "1.2.840.10008.1.2";
const TS_EXPLICIT_BE: &str = "1.2.840.10008.1.2.2";
const TS_DEFLATED: &str = "1.2.840.10008.1.2.1.99";

const VRS: [&[u8; 2]; 34] = [
    b"AE", b"AS", b"AT", b"CS", b"DA", b"DS", b"DT", b"FL", b"FD", b"IS", b"LO", b"LT", b"OB", b"OD", b"OF", b"OL",
    b"OV", b"OW", b"PN", b"SH", b"SL", b"SQ", b"SS", b"ST", b"SV", b"TM", b"UC", b"UI", b"UL", b"UN", b"UR", b"US",
    b"UT", b"UV",
];
const LONG_VRS: [&[u8; 2]; 13] = [
    b"OB", b"OD", b"OF", b"OL", b"OV", b"OW", b"SQ", b"SV", b"UC", b"UN", b"UR", b"UT", b"UV",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Span {
    pub offset: u64,
    pub length: u64,
}

impl Span {
    pub fn end(&self) -> u64 {
        self.offset + self.length
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DicomEnvelope {
    pub has_preamble: bool,
    pub byte_order: ByteOrder,
    pub explicit_vr: bool,
    pub pixel_data_span: Option<Span>,
    /// Top-level elements walked, file meta group included, pixel data excluded.
    pub meta_element_count: u64,
    pub transfer_syntax: Option<String>,
    /// Offset at which the element walk hit a malformed or truncated header.
    pub truncated_at: Option<u64>,
    /// The data set is deflate-compressed and was not walked.
    pub deflated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Encoding {
    pub byte_order: ByteOrder,
    pub explicit_vr: bool,
}

impl Encoding {
    pub const EXPLICIT_LE: Encoding = Encoding {
        byte_order: ByteOrder::Little,
        explicit_vr: true,
    };
    pub const IMPLICIT_LE: Encoding = Encoding {
        byte_order: ByteOrder::Little,
        explicit_vr: false,
    };
    pub const EXPLICIT_BE: Encoding = Encoding {
        byte_order: ByteOrder::Big,
        explicit_vr: true,
    };
    pub const IMPLICIT_BE: Encoding = Encoding {
        byte_order: ByteOrder::Big,
        explicit_vr: false,
    };
    /// Order in which the heuristic tries encodings.
    pub const CANDIDATES: [Encoding; 4] = [
        Encoding::EXPLICIT_LE,
        Encoding::IMPLICIT_LE,
        Encoding::EXPLICIT_BE,
        Encoding::IMPLICIT_BE,
    ];

    fn describe(self) -> String {
        format!(
            "{} VR {}",
            if self.explicit_vr { "explicit" } else { "implicit" },
            self.byte_order
        )
    }
}

/// Where the first data element starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    /// 128-byte preamble plus `DICM`.
    Preamble,
    /// `DICM` at offset 0 with no preamble.
    BareMagic,
    /// Elements from offset 0 in the given encoding.
    Raw(Encoding),
}

pub fn has_preamble(head: &[u8]) -> bool {
    head.len() >= 132 && &head[128..132] == MAGIC
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Tag(u16, u16);

#[derive(Debug, Clone, Copy)]
struct Header {
    tag: Tag,
    vr: Option<[u8; 2]>,
    length: u32,
    header_len: u64,
}

impl Header {
    fn value_offset(&self, at: u64) -> u64 {
        at + self.header_len
    }
}

/// Decodes one element header from `b`, which starts at the header.
/// `None` when `b` is too short or the explicit VR is not a real VR.
fn decode_header(b: &[u8], enc: Encoding) -> Option<Header> {
    if b.len() < 8 {
        return None;
    }
    // file meta elements are explicit VR little endian whatever the data set uses
    let enc = if u16::from_le_bytes([b[0], b[1]]) == 0x0002 {
        Encoding::EXPLICIT_LE
    } else {
        enc
    };
    let order = enc.byte_order;
    let tag = Tag(order.u16([b[0], b[1]]), order.u16([b[2], b[3]]));
    if tag.0 == 0xFFFE || !enc.explicit_vr {
        return Some(Header {
            tag,
            vr: None,
            length: order.u32([b[4], b[5], b[6], b[7]]),
            header_len: 8,
        });
    }
    let vr = [b[4], b[5]];
    if !VRS.contains(&&vr) {
        return None;
    }
    if LONG_VRS.contains(&&vr) {
        if b.len() < 12 {
            return None;
        }
        Some(Header {
            tag,
            vr: Some(vr),
            length: order.u32([b[8], b[9], b[10], b[11]]),
            header_len: 12,
        })
    } else {
        Some(Header {
            tag,
            vr: Some(vr),
            length: u32::from(order.u16([b[6], b[7]])),
            header_len: 8,
        })
    }
}

/// Parses up to [`HEURISTIC_ELEMENTS`] elements from `head` in each candidate
/// encoding and returns the first encoding whose parse is plausible: group
/// numbers never decrease, at least `min_known` elements belong to
/// [`KNOWN_GROUPS`], and every declared length fits inside `file_len`.
pub fn plausible_encoding(head: &[u8], file_len: u64, min_known: usize) -> Option<(Encoding, usize)> {
    Encoding::CANDIDATES.into_iter().find_map(|enc| {
        let known = plausible_under(head, file_len, enc)?;
        (known >= min_known).then_some((enc, known))
    })
}

fn plausible_under(head: &[u8], file_len: u64, enc: Encoding) -> Option<usize> {
    let mut pos = 0usize;
    let mut known = 0;
    let mut last_group = 0u16;
    for _ in 0..HEURISTIC_ELEMENTS {
        if pos as u64 >= file_len || pos >= head.len() {
            break;
        }
        let Some(h) = decode_header(&head[pos..], enc) else {
            // a header cut off by the end of the sniff window ends the parse
            if head.len() - pos < 12 && (head.len() as u64) < file_len {
                break;
            }
            return None;
        };
        if h.tag.0 < last_group || h.tag.0 == 0xFFFE {
            return None;
        }
        last_group = h.tag.0;
        if KNOWN_GROUPS.contains(&h.tag.0) {
            known += 1;
        }
        if h.length == UNDEFINED {
            // sequence or encapsulated pixels: stop rather than descend
            break;
        }
        let end = (pos as u64) + h.header_len + u64::from(h.length);
        if end > file_len {
            return None;
        }
        pos = end as usize;
    }
    Some(known)
}

enum Stop {
    Malformed(u64),
    Io(io::Error),
}

impl From<io::Error> for Stop {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Stop::Malformed(u64::MAX)
        } else {
            Stop::Io(e)
        }
    }
}

struct Walker<'a, R> {
    reader: &'a mut R,
    len: u64,
}

impl<R: Read + Seek> Walker<'_, R> {
    fn read_at(&mut self, pos: u64, buf: &mut [u8]) -> Result<(), Stop> {
        if pos + buf.len() as u64 > self.len {
            return Err(Stop::Malformed(pos));
        }
        self.reader.seek(SeekFrom::Start(pos))?;
        self.reader.read_exact(buf).map_err(|e| match Stop::from(e) {
            Stop::Malformed(_) => Stop::Malformed(pos),
            other => other,
        })
    }

    fn header(&mut self, pos: u64, enc: Encoding) -> Result<Header, Stop> {
        let avail = (self.len - pos.min(self.len)).min(12) as usize;
        let mut buf = [0u8; 12];
        self.read_at(pos, &mut buf[..avail])?;
        decode_header(&buf[..avail], enc).ok_or(Stop::Malformed(pos))
    }

    fn skip_value(&self, pos: u64, h: &Header) -> Result<u64, Stop> {
        let end = h.value_offset(pos) + u64::from(h.length);
        if end > self.len {
            return Err(Stop::Malformed(pos));
        }
        Ok(end)
    }

    /// Skips the items of an undefined-length sequence (or encapsulated
    /// pixel data) starting at `pos`; returns the offset after the sequence
    /// delimiter.
    fn skip_items(&mut self, mut pos: u64, enc: Encoding, depth: usize) -> Result<u64, Stop> {
        if depth > MAX_NESTING {
            return Err(Stop::Malformed(pos));
        }
        loop {
            let h = self.header(
                pos,
                Encoding {
                    explicit_vr: false,
                    ..enc
                },
            )?;
            match h.tag {
                SEQUENCE_END => return Ok(pos + 8),
                ITEM if h.length == UNDEFINED => {
                    pos = self.walk_nested_item(pos + 8, enc, depth + 1)?;
                }
                ITEM => pos = self.skip_value(pos, &h)?,
                _ => return Err(Stop::Malformed(pos)),
            }
        }
    }

    /// Walks the elements of an undefined-length item up to and including
    /// its item delimiter.
    fn walk_nested_item(&mut self, mut pos: u64, enc: Encoding, depth: usize) -> Result<u64, Stop> {
        loop {
            let h = self.header(pos, enc)?;
            if h.tag == ITEM_END {
                return Ok(pos + 8);
            }
            pos = self.skip_element(pos, &h, enc, depth)?;
        }
    }

    fn skip_element(&mut self, pos: u64, h: &Header, enc: Encoding, depth: usize) -> Result<u64, Stop> {
        if h.length != UNDEFINED {
            return self.skip_value(pos, h);
        }
        match h.vr {
            None | Some([b'S', b'Q']) | Some([b'O', b'B']) | Some([b'O', b'W']) => {
                self.skip_items(h.value_offset(pos), enc, depth)
            }
            // undefined-length UN content is implicit VR little endian
            Some([b'U', b'N']) => self.skip_items(h.value_offset(pos), Encoding::IMPLICIT_LE, depth),
            Some(_) => Err(Stop::Malformed(pos)),
        }
    }

    /// Span of encapsulated pixel data: fragments and item headers through
    /// the sequence delimiter, or through end of file when it is missing.
    fn encapsulated_span(&mut self, value: u64, enc: Encoding) -> Span {
        let end = self.skip_items(value, enc, 0).unwrap_or(self.len);
        Span {
            offset: value,
            length: end - value,
        }
    }
}

fn dataset_encoding(ts: Option<&str>) -> Option<Encoding> {
    match ts? {
        TS_IMPLICIT_LE => Some(Encoding::IMPLICIT_LE),
        TS_EXPLICIT_BE => Some(Encoding::EXPLICIT_BE),
        _ => Some(Encoding::EXPLICIT_LE),
    }
}

/// Walks the data elements of a DICOM stream of `len` bytes.
///
/// Truncated or malformed input is not an error: the envelope comes back
/// with `truncated_at` set and no pixel span. Only genuine I/O failures are
/// returned as `Err`.
pub fn parse_dicom_envelope<R: Read + Seek>(reader: &mut R, len: u64, start: Start) -> io::Result<DicomEnvelope> {
    let mut walker = Walker { reader, len };
    let (mut pos, has_preamble, raw_encoding) = match start {
        Start::Preamble => (PREAMBLE_LEN + 4, true, None),
        Start::BareMagic => (4, false, None),
        Start::Raw(enc) => (0, false, Some(enc)),
    };

    let mut envelope = DicomEnvelope {
        has_preamble,
        byte_order: ByteOrder::Little,
        explicit_vr: true,
        pixel_data_span: None,
        meta_element_count: 0,
        transfer_syntax: None,
        truncated_at: None,
        deflated: false,
    };

    let result = (|| -> Result<(), Stop> {
        // file meta group
        while pos + 8 <= len {
            let mut peek = [0u8; 2];
            walker.read_at(pos, &mut peek)?;
            if u16::from_le_bytes(peek) != 0x0002 {
                break;
            }
            let h = walker.header(pos, Encoding::EXPLICIT_LE)?;
            if h.length == UNDEFINED {
                return Err(Stop::Malformed(pos));
            }
            let end = walker.skip_value(pos, &h)?;
            if h.tag == TRANSFER_SYNTAX && h.length <= 64 {
                let mut uid = vec![0u8; h.length as usize];
                walker.read_at(h.value_offset(pos), &mut uid)?;
                let uid = String::from_utf8_lossy(&uid).trim_end_matches(['\0', ' ']).to_string();
                envelope.transfer_syntax = Some(uid);
            }
            envelope.meta_element_count += 1;
            pos = end;
        }

        if envelope.transfer_syntax.as_deref() == Some(TS_DEFLATED) {
            envelope.deflated = true;
            return Ok(());
        }

        let enc = dataset_encoding(envelope.transfer_syntax.as_deref())
            .or(raw_encoding)
            .unwrap_or_else(|| {
                let mut head = vec![0u8; (len - pos.min(len)).min(4096) as usize];
                let fits = walker.read_at(pos, &mut head).is_ok();
                fits.then(|| plausible_encoding(&head, len - pos, 1).map(|(e, _)| e))
                    .flatten()
                    .unwrap_or(Encoding::EXPLICIT_LE)
            });
        envelope.byte_order = enc.byte_order;
        envelope.explicit_vr = enc.explicit_vr;

        while pos < len {
            let h = walker.header(pos, enc)?;
            if h.tag == PIXEL_DATA {
                let value = h.value_offset(pos);
                let span = if h.length == UNDEFINED {
                    walker.encapsulated_span(value, enc)
                } else {
                    walker.skip_value(pos, &h)?;
                    Span {
                        offset: value,
                        length: u64::from(h.length),
                    }
                };
                envelope.pixel_data_span = Some(span);
                pos = span.end();
                continue;
            }
            if h.tag == ITEM_END || h.tag == SEQUENCE_END {
                pos += 8;
                continue;
            }
            pos = walker.skip_element(pos, &h, enc, 0)?;
            envelope.meta_element_count += 1;
        }
        Ok(())
    })();

    match result {
        Ok(()) => Ok(envelope),
        Err(Stop::Io(e)) => Err(e),
        Err(Stop::Malformed(at)) => {
            envelope.truncated_at = Some(at.min(len));
            envelope.pixel_data_span = None;
            Ok(envelope)
        }
    }
}

pub(crate) fn describe_encoding(enc: Encoding) -> String {
    enc.describe()
}
