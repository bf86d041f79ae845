//! PLY 1.0 vertex reader and writer (ascii and binary little endian).
//!
//! Only the `x`, `y`, `z` properties of the `vertex` element are read; every
//! other element and property is skipped using the sizes the header declares.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::geometry::{Point3, PointSet};

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("malformed header at byte {offset}: {message}")]
    MalformedHeader { offset: usize, message: String },
    #[error("unsupported format '{format}' at byte {offset}")]
    UnsupportedFormat { offset: usize, format: String },
    #[error("vertex element lacks a float/double '{0}' property")]
    MissingCoordinate(&'static str),
    #[error("truncated payload at byte {offset}: expected {expected}")]
    Truncated { offset: usize, expected: String },
    #[error("bad value at byte {offset}: '{token}'")]
    BadValue { offset: usize, token: String },
    #[error("non-finite coordinate for vertex {vertex} at byte {offset}")]
    NonFinite { offset: usize, vertex: usize },
    #[error("file holds no vertices")]
    NoVertices,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Scalar type used for coordinates when writing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyPrecision {
    Float32,
    Float64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
}

pub fn load_ply(path: impl AsRef<Path>, id: usize) -> Result<PointSet, PlyError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| PlyError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ply(&bytes, id)
}

pub fn parse_ply(bytes: &[u8], id: usize) -> Result<PointSet, PlyError> {
    let header = parse_header(bytes)?;
    let points = match header.format {
        PlyFormat::Ascii => read_ascii(bytes, &header)?,
        PlyFormat::BinaryLittleEndian => read_binary(bytes, &header)?,
    };
    PointSet::new(id, points).map_err(|_| PlyError::NoVertices)
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut offset = 0;
    let next_line = |offset: &mut usize| -> Result<(usize, String), PlyError> {
        let start = *offset;
        let rest = &bytes[start..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(PlyError::MalformedHeader {
                offset: start,
                message: "header is not terminated by end_header".into(),
            });
        };
        *offset = start + end + 1;
        let line = String::from_utf8_lossy(&rest[..end])
            .trim_end_matches('\r')
            .to_string();
        Ok((start, line))
    };
    let malformed = |offset: usize, message: &str| PlyError::MalformedHeader {
        offset,
        message: message.to_string(),
    };

    let (at, magic) = next_line(&mut offset)?;
    if magic.trim() != "ply" {
        return Err(malformed(at, "missing 'ply' magic"));
    }
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (at, line) = next_line(&mut offset)?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let kind = tok.next().unwrap_or_default();
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    other => {
                        return Err(PlyError::UnsupportedFormat {
                            offset: at,
                            format: other.to_string(),
                        })
                    }
                });
                if tok.next() != Some("1.0") {
                    return Err(malformed(at, "expected format version 1.0"));
                }
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| malformed(at, "element without a name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| malformed(at, "element count is not a non-negative integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| malformed(at, "property before any element"))?;
                let ty = tok
                    .next()
                    .ok_or_else(|| malformed(at, "property without a type"))?;
                let prop = if ty == "list" {
                    let count = tok.next().and_then(Scalar::parse);
                    let item = tok.next().and_then(Scalar::parse);
                    match (count, item, tok.next()) {
                        (Some(count), Some(item), Some(_)) => Property::List { count, item },
                        _ => return Err(malformed(at, "bad list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty)
                        .ok_or_else(|| malformed(at, &format!("unknown property type '{ty}'")))?;
                    let name = tok
                        .next()
                        .ok_or_else(|| malformed(at, "property without a name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(malformed(at, &format!("unexpected keyword '{other}'"))),
        }
    }
    let format = format.ok_or_else(|| malformed(0, "missing format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset: offset,
    })
}

/// Positions of x, y, z among the vertex properties.
fn coordinate_slots(element: &Element) -> Result<[usize; 3], PlyError> {
    let mut slots = [usize::MAX; 3];
    for (i, p) in element.properties.iter().enumerate() {
        if let Property::Scalar { name, ty } = p {
            let axis = match name.as_str() {
                "x" => 0,
                "y" => 1,
                "z" => 2,
                _ => continue,
            };
            if matches!(ty, Scalar::F32 | Scalar::F64) {
                slots[axis] = i;
            }
        }
    }
    for (axis, name) in ["x", "y", "z"].into_iter().enumerate() {
        if slots[axis] == usize::MAX {
            return Err(PlyError::MissingCoordinate(name));
        }
    }
    Ok(slots)
}

fn vertex_element(header: &Header) -> Result<(usize, [usize; 3]), PlyError> {
    let pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or(PlyError::NoVertices)?;
    Ok((pos, coordinate_slots(&header.elements[pos])?))
}

fn check_finite(p: &Point3, vertex: usize, offset: usize) -> Result<(), PlyError> {
    if p.coords.iter().all(|c| c.is_finite()) {
        Ok(())
    } else {
        Err(PlyError::NonFinite { offset, vertex })
    }
}

fn read_binary(bytes: &[u8], header: &Header) -> Result<Vec<Point3>, PlyError> {
    let (vertex_pos, slots) = vertex_element(header)?;
    let mut offset = header.body_offset;
    let take = |offset: &mut usize, n: usize, what: &str| -> Result<usize, PlyError> {
        if *offset + n > bytes.len() {
            return Err(PlyError::Truncated {
                offset: bytes.len(),
                expected: format!("{n} more bytes for {what}"),
            });
        }
        let at = *offset;
        *offset += n;
        Ok(at)
    };
    let mut points = Vec::new();
    for (e, element) in header.elements.iter().enumerate() {
        if e == vertex_pos {
            points.reserve(element.count);
        }
        for v in 0..element.count {
            let start = offset;
            let mut xyz = [0.0; 3];
            for (k, prop) in element.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let at = take(&mut offset, ty.size(), &element.name)?;
                        if e == vertex_pos {
                            if let Some(axis) = slots.iter().position(|&s| s == k) {
                                xyz[axis] = ty.read_le(&bytes[at..]);
                            }
                        }
                    }
                    Property::List { count, item } => {
                        let at = take(&mut offset, count.size(), &element.name)?;
                        let n = count.read_le(&bytes[at..]);
                        if n.is_nan() || n < 0.0 {
                            return Err(PlyError::BadValue {
                                offset: at,
                                token: n.to_string(),
                            });
                        }
                        take(&mut offset, n as usize * item.size(), &element.name)?;
                    }
                }
            }
            if e == vertex_pos {
                let p = Point3::new(xyz[0], xyz[1], xyz[2]);
                check_finite(&p, v, start)?;
                points.push(p);
            }
        }
    }
    Ok(points)
}

fn read_ascii(bytes: &[u8], header: &Header) -> Result<Vec<Point3>, PlyError> {
    let (vertex_pos, slots) = vertex_element(header)?;
    let mut offset = header.body_offset;
    let mut points = Vec::new();
    for (e, element) in header.elements.iter().enumerate() {
        if e == vertex_pos {
            points.reserve(element.count);
        }
        let mut v = 0;
        while v < element.count {
            if offset >= bytes.len() {
                return Err(PlyError::Truncated {
                    offset: bytes.len(),
                    expected: format!("{} more '{}' entries", element.count - v, element.name),
                });
            }
            let start = offset;
            let end = bytes[start..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(bytes.len(), |p| start + p);
            offset = end + 1;
            let line = String::from_utf8_lossy(&bytes[start..end]);
            if line.trim().is_empty() {
                continue;
            }
            if e == vertex_pos {
                let p = parse_ascii_vertex(&line, element, &slots, start)?;
                check_finite(&p, v, start)?;
                points.push(p);
            }
            v += 1;
        }
    }
    Ok(points)
}

fn parse_ascii_vertex(
    line: &str,
    element: &Element,
    slots: &[usize; 3],
    offset: usize,
) -> Result<Point3, PlyError> {
    let mut tokens = line.split_whitespace();
    let mut next = || {
        tokens.next().ok_or_else(|| PlyError::Truncated {
            offset,
            expected: "more values on vertex line".into(),
        })
    };
    let number = |t: &str| {
        t.parse::<f64>().map_err(|_| PlyError::BadValue {
            offset,
            token: t.to_string(),
        })
    };
    let mut xyz = [0.0; 3];
    for (k, prop) in element.properties.iter().enumerate() {
        match prop {
            Property::Scalar { .. } => {
                let value = number(next()?)?;
                if let Some(axis) = slots.iter().position(|&s| s == k) {
                    xyz[axis] = value;
                }
            }
            Property::List { .. } => {
                let n = number(next()?)?;
                for _ in 0..n as usize {
                    next()?;
                }
            }
        }
    }
    Ok(Point3::new(xyz[0], xyz[1], xyz[2]))
}

pub fn write_ply(
    ps: &PointSet,
    path: impl AsRef<Path>,
    format: PlyFormat,
    precision: PlyPrecision,
) -> Result<(), PlyError> {
    let path = path.as_ref();
    let io_err = |source| PlyError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    write_ply_to(&mut w, ps.points(), format, precision).map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_ply_to<W: Write>(
    w: &mut W,
    points: &[Point3],
    format: PlyFormat,
    precision: PlyPrecision,
) -> io::Result<()> {
    let format_name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let ty = match precision {
        PlyPrecision::Float32 => "float",
        PlyPrecision::Float64 => "double",
    };
    writeln!(w, "ply")?;
    writeln!(w, "format {format_name} 1.0")?;
    writeln!(w, "comment written by kmreg")?;
    writeln!(w, "element vertex {}", points.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(w, "property {ty} {axis}")?;
    }
    writeln!(w, "end_header")?;
    match format {
        PlyFormat::Ascii => {
            for p in points {
                match precision {
                    PlyPrecision::Float32 => writeln!(
                        w,
                        "{:.8e} {:.8e} {:.8e}",
                        p.x as f32, p.y as f32, p.z as f32
                    )?,
                    PlyPrecision::Float64 => writeln!(w, "{:.8e} {:.8e} {:.8e}", p.x, p.y, p.z)?,
                }
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for p in points {
                for c in [p.x, p.y, p.z] {
                    match precision {
                        PlyPrecision::Float32 => w.write_all(&(c as f32).to_le_bytes())?,
                        PlyPrecision::Float64 => w.write_all(&c.to_le_bytes())?,
                    }
                }
            }
        }
    }
    Ok(())
}
