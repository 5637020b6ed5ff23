//! Byte-level DICOM writer with pixel-span bookkeeping.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Syntax {
    ExplicitLittle,
    ImplicitLittle,
    ExplicitBig,
}

impl Syntax {
    pub fn uid(self) -> &'static str {
        match self {
            Syntax::ExplicitLittle => "1.2.840.10008.1.2.1",
            Syntax::ImplicitLittle => "1.2.840.10008.1.2",
            Syntax::ExplicitBig => "1.2.840.10008.1.2.2",
        }
    }

    fn big(self) -> bool {
        self == Syntax::ExplicitBig
    }

    fn explicit(self) -> bool {
        self != Syntax::ImplicitLittle
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Text(String),
    U16(u16),
    Bytes(Vec<u8>),
    /// Undefined-length sequence of undefined-length items.
    Sequence(Vec<Vec<Element>>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Element {
    pub group: u16,
    pub element: u16,
    pub vr: [u8; 2],
    pub value: Value,
}

impl Element {
    pub fn text(group: u16, element: u16, vr: &str, text: &str) -> Self {
        Element {
            group,
            element,
            vr: vr_bytes(vr),
            value: Value::Text(text.to_string()),
        }
    }

    pub fn u16(group: u16, element: u16, value: u16) -> Self {
        Element {
            group,
            element,
            vr: *b"US",
            value: Value::U16(value),
        }
    }

    pub fn sequence(group: u16, element: u16, items: Vec<Vec<Element>>) -> Self {
        Element {
            group,
            element,
            vr: *b"SQ",
            value: Value::Sequence(items),
        }
    }
}

fn vr_bytes(vr: &str) -> [u8; 2] {
    let b = vr.as_bytes();
    assert_eq!(b.len(), 2, "VR must be two characters");
    [b[0], b[1]]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pixels {
    None,
    Native(Vec<u8>),
    /// Encapsulated fragments (after an empty basic offset table).
    Encapsulated(Vec<Vec<u8>>),
}

#[derive(Debug, Clone)]
pub struct DicomBuilder {
    pub preamble: bool,
    pub meta: bool,
    pub syntax: Syntax,
    pub dataset: Vec<Element>,
    pub pixels: Pixels,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuiltDicom {
    pub bytes: Vec<u8>,
    /// `(offset, length)` of the pixel data value bytes.
    pub pixel_span: Option<(u64, u64)>,
    /// Meta-group plus top-level dataset elements, pixel data excluded.
    pub element_count: u64,
}

impl BuiltDicom {
    pub fn meta_bytes(&self) -> Vec<u8> {
        match self.pixel_span {
            None => self.bytes.clone(),
            Some((off, len)) => {
                let (off, end) = (off as usize, (off + len) as usize);
                [&self.bytes[..off], &self.bytes[end..]].concat()
            }
        }
    }

    pub fn pixel_bytes(&self) -> &[u8] {
        match self.pixel_span {
            None => &[],
            Some((off, len)) => &self.bytes[off as usize..(off + len) as usize],
        }
    }
}

impl DicomBuilder {
    /// A small MR image with patient identifiers and native 16-bit pixels.
    pub fn new(syntax: Syntax) -> Self {
        DicomBuilder {
            preamble: true,
            meta: true,
            syntax,
            dataset: standard_dataset("DOE^JANE", "PID-0001"),
            pixels: Pixels::Native((0u8..32).collect()),
        }
    }

    /// Old-style file: no preamble, no meta group, implicit little endian.
    pub fn bare() -> Self {
        DicomBuilder {
            preamble: false,
            meta: false,
            ..DicomBuilder::new(Syntax::ImplicitLittle)
        }
    }

    pub fn patient(mut self, name: &str, id: &str) -> Self {
        self.dataset = standard_dataset(name, id);
        self
    }

    pub fn pixels(mut self, pixels: Pixels) -> Self {
        self.pixels = pixels;
        self
    }

    pub fn with_element(mut self, element: Element) -> Self {
        self.dataset.push(element);
        self.dataset.sort_by_key(|e| (e.group, e.element));
        self
    }

    pub fn build(&self) -> BuiltDicom {
        let mut out = Vec::new();
        let mut count = 0u64;
        if self.preamble {
            out.extend([0u8; 128]);
            out.extend(b"DICM");
        }
        if self.meta {
            let meta = [
                Element {
                    group: 2,
                    element: 1,
                    vr: *b"OB",
                    value: Value::Bytes(vec![0, 1]),
                },
                Element::text(2, 2, "UI", "1.2.840.10008.5.1.4.1.1.4"),
                Element::text(2, 3, "UI", "1.2.826.0.1.3680043.8.498.1"),
                Element::text(2, 0x10, "UI", self.syntax.uid()),
                Element::text(2, 0x12, "UI", "1.2.826.0.1.3680043.8.498"),
            ];
            let mut body = Vec::new();
            for e in &meta {
                write_element(&mut body, e, Syntax::ExplicitLittle);
            }
            write_element(
                &mut out,
                &Element {
                    group: 2,
                    element: 0,
                    vr: *b"UL",
                    value: Value::Bytes((body.len() as u32).to_le_bytes().to_vec()),
                },
                Syntax::ExplicitLittle,
            );
            out.extend(body);
            count += meta.len() as u64 + 1;
        }
        for e in &self.dataset {
            write_element(&mut out, e, self.syntax);
            count += 1;
        }
        let pixel_span = match &self.pixels {
            Pixels::None => None,
            Pixels::Native(data) => {
                let mut data = data.clone();
                if data.len() % 2 == 1 {
                    data.push(0);
                }
                write_header(&mut out, 0x7FE0, 0x10, *b"OW", Some(data.len() as u32), self.syntax);
                let offset = out.len() as u64;
                out.extend(&data);
                Some((offset, data.len() as u64))
            }
            Pixels::Encapsulated(fragments) => {
                write_header(&mut out, 0x7FE0, 0x10, *b"OB", None, self.syntax);
                let offset = out.len() as u64;
                write_item_header(&mut out, 0xE000, 0, self.syntax);
                for fragment in fragments {
                    let mut fragment = fragment.clone();
                    if fragment.len() % 2 == 1 {
                        fragment.push(0);
                    }
                    write_item_header(&mut out, 0xE000, fragment.len() as u32, self.syntax);
                    out.extend(fragment);
                }
                write_item_header(&mut out, 0xE0DD, 0, self.syntax);
                Some((offset, out.len() as u64 - offset))
            }
        };
        BuiltDicom {
            bytes: out,
            pixel_span,
            element_count: count,
        }
    }
}

pub fn standard_dataset(patient_name: &str, patient_id: &str) -> Vec<Element> {
    vec![
        Element::text(0x0008, 0x0016, "UI", "1.2.840.10008.5.1.4.1.1.4"),
        Element::text(0x0008, 0x0018, "UI", "1.2.826.0.1.3680043.8.498.1"),
        Element::text(0x0008, 0x0060, "CS", "MR"),
        Element::text(0x0010, 0x0010, "PN", patient_name),
        Element::text(0x0010, 0x0020, "LO", patient_id),
        Element::text(0x0020, 0x000D, "UI", "1.2.826.0.1.3680043.8.498.2"),
        Element::u16(0x0028, 0x0010, 4),
        Element::u16(0x0028, 0x0011, 4),
        Element::u16(0x0028, 0x0100, 16),
    ]
}

fn put_u16(out: &mut Vec<u8>, v: u16, big: bool) {
    out.extend(if big { v.to_be_bytes() } else { v.to_le_bytes() });
}

fn put_u32(out: &mut Vec<u8>, v: u32, big: bool) {
    out.extend(if big { v.to_be_bytes() } else { v.to_le_bytes() });
}

fn long_form(vr: [u8; 2]) -> bool {
    matches!(&vr, b"OB" | b"OW" | b"OF" | b"SQ" | b"UT" | b"UN")
}

fn write_header(out: &mut Vec<u8>, group: u16, element: u16, vr: [u8; 2], len: Option<u32>, syntax: Syntax) {
    let big = syntax.big() && group != 2;
    let explicit = syntax.explicit() || group == 2;
    put_u16(out, group, big);
    put_u16(out, element, big);
    let len = len.unwrap_or(u32::MAX);
    if explicit {
        out.extend(vr);
        if long_form(vr) {
            out.extend([0, 0]);
            put_u32(out, len, big);
        } else {
            put_u16(out, len as u16, big);
        }
    } else {
        put_u32(out, len, big);
    }
}

fn write_item_header(out: &mut Vec<u8>, element: u16, len: u32, syntax: Syntax) {
    put_u16(out, 0xFFFE, syntax.big());
    put_u16(out, element, syntax.big());
    put_u32(out, len, syntax.big());
}

fn write_element(out: &mut Vec<u8>, e: &Element, syntax: Syntax) {
    let big = syntax.big() && e.group != 2;
    let value = match &e.value {
        Value::Text(s) => {
            let mut v = s.as_bytes().to_vec();
            if v.len() % 2 == 1 {
                v.push(if &e.vr == b"UI" { 0 } else { b' ' });
            }
            v
        }
        Value::U16(n) => {
            let mut v = Vec::new();
            put_u16(&mut v, *n, big);
            v
        }
        Value::Bytes(b) => b.clone(),
        Value::Sequence(items) => {
            write_header(out, e.group, e.element, e.vr, None, syntax);
            for item in items {
                write_item_header(out, 0xE000, u32::MAX, syntax);
                for inner in item {
                    write_element(out, inner, syntax);
                }
                write_item_header(out, 0xE00D, 0, syntax);
            }
            write_item_header(out, 0xE0DD, 0, syntax);
            return;
        }
    };
    write_header(out, e.group, e.element, e.vr, Some(value.len() as u32), syntax);
    out.extend(value);
}
