//! PLY mesh input/output.
//!
//! Supported storage: ASCII (`format ascii 1.0`) and binary little-endian
//! (`format binary_little_endian 1.0`). Big-endian files are rejected with a
//! clear error rather than silently misread.
//!
//! Vertex layout: `x y z` are stored as 32-bit floats; an optional `label`
//! property (32-bit int) carries named regions and an optional `quality`
//! property (32-bit float) carries one scalar per vertex (e.g. an error heat
//! map). Faces are triangles in a `vertex_indices` list property. Properties
//! this crate does not know are skipped on read.
//!
//! Label values are mapped to names through header comments of the form
//! `comment label <value> <name>`; on write each named mask of the mesh is
//! assigned a value (1, 2, ... in name order) and the legend is emitted. A
//! label value of 0 means "unlabelled". Files without a legend still load:
//! masks are named `label_<value>`.
//!
//! Because coordinates are stored in 32-bit floats, a write/read round trip
//! preserves positions to one part in about 1e7 (sub-1e-6 mm for coordinates
//! up to ~10 mm, and ~1e-5 mm at a 100 mm scale); connectivity, label names,
//! and per-vertex scalars round-trip exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use nalgebra::Point3;

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, VertexMask};

/// On-disk encodings this crate writes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    /// Human-readable text body.
    Ascii,
    /// Packed little-endian body.
    BinaryLittleEndian,
}

/// A mesh loaded from disk, along with its optional per-vertex scalar
/// channel and the header comments.
#[derive(Clone, Debug)]
pub struct LoadedMesh {
    /// Geometry, connectivity, and named labels.
    pub mesh: TriMesh,
    /// `quality` channel, when the file has one.
    pub quality: Option<Vec<f64>>,
    /// Header comment lines (without the `comment ` keyword).
    pub comments: Vec<String>,
}

// ============================================================================
// Header model
// ============================================================================

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
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
    fn parse(token: &str) -> Option<Scalar> {
        Some(match token {
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

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Clone, Debug)]
enum PropKind {
    Single(Scalar),
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Property {
    name: String,
    kind: PropKind,
}

#[derive(Clone, Debug)]
struct ElementDecl {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    format: PlyFormat,
    comments: Vec<String>,
    elements: Vec<ElementDecl>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));

    // The header is ASCII by definition; scan line by line.
    let mut offset = 0usize;
    let mut lines: Vec<(String, usize)> = Vec::new(); // (line, end offset)
    while offset < bytes.len() {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .map(|p| offset + p)
            .ok_or_else(|| bad("header is not terminated by end_header".into()))?;
        let raw = &bytes[offset..end];
        let line = std::str::from_utf8(raw)
            .map_err(|_| bad("header contains non-UTF-8 bytes".into()))?
            .trim_end_matches('\r')
            .to_string();
        offset = end + 1;
        let is_end = line.trim() == "end_header";
        lines.push((line, offset));
        if is_end {
            break;
        }
        if lines.len() > 10_000 {
            return Err(bad("header exceeds 10000 lines".into()));
        }
    }

    let mut iter = lines.iter();
    let (first, _) = iter.next().ok_or_else(|| bad("empty file".into()))?;
    if first.trim() != "ply" {
        return Err(bad("missing 'ply' magic line".into()));
    }

    let mut format = None;
    let mut comments = Vec::new();
    let mut elements: Vec<ElementDecl> = Vec::new();
    let mut body_offset = bytes.len();

    for (line, end) in iter {
        let line = line.trim();
        if line == "end_header" {
            body_offset = *end;
            break;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            None => continue, // blank line
            Some("comment") => {
                comments.push(line["comment".len()..].trim_start().to_string());
            }
            Some("obj_info") => continue,
            Some("format") => {
                let kind = tokens.next().unwrap_or("");
                format = Some(match kind {
                    "ascii" => PlyFormat::Ascii,
                    "binary_little_endian" => PlyFormat::BinaryLittleEndian,
                    "binary_big_endian" => {
                        return Err(bad(
                            "binary_big_endian is not supported; convert to ASCII or \
                             binary little-endian"
                                .into(),
                        ))
                    }
                    other => return Err(bad(format!("unknown format '{other}'"))),
                });
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| bad("element line missing name".into()))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| bad(format!("element '{name}' has an invalid count")))?;
                elements.push(ElementDecl {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| bad("property declared before any element".into()))?;
                let t1 = tokens
                    .next()
                    .ok_or_else(|| bad("property line missing type".into()))?;
                let (kind, name) = if t1 == "list" {
                    let count = tokens
                        .next()
                        .and_then(Scalar::parse)
                        .ok_or_else(|| bad("invalid list count type".into()))?;
                    let item = tokens
                        .next()
                        .and_then(Scalar::parse)
                        .ok_or_else(|| bad("invalid list item type".into()))?;
                    if !count.is_integer() || !item.is_integer() {
                        return Err(bad("list count/item types must be integers".into()));
                    }
                    let name = tokens
                        .next()
                        .ok_or_else(|| bad("list property missing name".into()))?;
                    (PropKind::List { count, item }, name)
                } else {
                    let scalar = Scalar::parse(t1)
                        .ok_or_else(|| bad(format!("unknown property type '{t1}'")))?;
                    let name = tokens
                        .next()
                        .ok_or_else(|| bad("property missing name".into()))?;
                    (PropKind::Single(scalar), name)
                };
                element.properties.push(Property {
                    name: name.to_string(),
                    kind,
                });
            }
            Some(other) => return Err(bad(format!("unknown header keyword '{other}'"))),
        }
    }

    let format = format.ok_or_else(|| bad("missing format line".into()))?;
    Ok(Header {
        format,
        comments,
        elements,
        body_offset,
    })
}

// ============================================================================
// Body reading
// ============================================================================

/// Sequential value source over an ASCII token stream or binary bytes.
enum Body<'a> {
    Ascii(std::str::SplitWhitespace<'a>),
    Binary { bytes: &'a [u8], pos: usize },
}

impl<'a> Body<'a> {
    fn next_token(tokens: &mut std::str::SplitWhitespace<'a>) -> Result<&'a str> {
        tokens
            .next()
            .ok_or_else(|| Error::Format("unexpected end of ASCII body".into()))
    }

    fn take_bytes(bytes: &'a [u8], pos: &mut usize, n: usize) -> Result<&'a [u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Format("unexpected end of binary body".into()));
        }
        let out = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(out)
    }

    /// Reads one value of integer type `ty`.
    fn read_int(&mut self, ty: Scalar) -> Result<i64> {
        debug_assert!(ty.is_integer());
        match self {
            Body::Ascii(tokens) => {
                let tok = Self::next_token(tokens)?;
                tok.parse::<i64>()
                    .map_err(|_| Error::Format(format!("invalid integer '{tok}'")))
            }
            Body::Binary { bytes, pos } => {
                let raw = Self::take_bytes(bytes, pos, ty.size())?;
                Ok(match ty {
                    Scalar::I8 => raw[0] as i8 as i64,
                    Scalar::U8 => raw[0] as i64,
                    Scalar::I16 => LittleEndian::read_i16(raw) as i64,
                    Scalar::U16 => LittleEndian::read_u16(raw) as i64,
                    Scalar::I32 => LittleEndian::read_i32(raw) as i64,
                    Scalar::U32 => LittleEndian::read_u32(raw) as i64,
                    _ => unreachable!(),
                })
            }
        }
    }

    /// Reads one value of float type `ty`, widening to f64.
    ///
    /// ASCII float32 values are parsed at 32-bit precision so that a file and
    /// its binary twin produce identical coordinates.
    fn read_float(&mut self, ty: Scalar) -> Result<f64> {
        match self {
            Body::Ascii(tokens) => {
                let tok = Self::next_token(tokens)?;
                match ty {
                    Scalar::F32 => tok
                        .parse::<f32>()
                        .map(f64::from)
                        .map_err(|_| Error::Format(format!("invalid float '{tok}'"))),
                    Scalar::F64 => tok
                        .parse::<f64>()
                        .map_err(|_| Error::Format(format!("invalid float '{tok}'"))),
                    _ => self::Body::parse_ascii_int_as_float(tok),
                }
            }
            Body::Binary { bytes, pos } => {
                if ty.is_integer() {
                    // Caller is reading an integer-typed channel as a number.
                    let raw_pos = *pos;
                    let _ = raw_pos;
                    return self.read_int(ty).map(|v| v as f64);
                }
                let raw = Self::take_bytes(bytes, pos, ty.size())?;
                Ok(match ty {
                    Scalar::F32 => f64::from(LittleEndian::read_f32(raw)),
                    Scalar::F64 => LittleEndian::read_f64(raw),
                    _ => unreachable!(),
                })
            }
        }
    }

    fn parse_ascii_int_as_float(tok: &str) -> Result<f64> {
        tok.parse::<i64>()
            .map(|v| v as f64)
            .map_err(|_| Error::Format(format!("invalid integer '{tok}'")))
    }

    /// Skips one value of scalar type `ty`.
    fn skip_scalar(&mut self, ty: Scalar) -> Result<()> {
        match self {
            Body::Ascii(tokens) => {
                Self::next_token(tokens)?;
                Ok(())
            }
            Body::Binary { bytes, pos } => {
                Self::take_bytes(bytes, pos, ty.size())?;
                Ok(())
            }
        }
    }
}

// ============================================================================
// Loading
// ============================================================================

/// Reads a mesh (geometry, faces, labels, optional quality) from a PLY file.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<LoadedMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&bytes, path)?;

    let body_bytes = &bytes[header.body_offset..];
    let ascii_body;
    let mut body = match header.format {
        PlyFormat::Ascii => {
            ascii_body = std::str::from_utf8(body_bytes).map_err(|_| {
                Error::Format(format!("{}: ASCII body contains invalid UTF-8", path.display()))
            })?;
            Body::Ascii(ascii_body.split_whitespace())
        }
        PlyFormat::BinaryLittleEndian => Body::Binary {
            bytes: body_bytes,
            pos: 0,
        },
    };

    let mut vertices: Vec<Point3<f64>> = Vec::new();
    let mut labels_raw: Vec<i64> = Vec::new();
    let mut quality: Vec<f64> = Vec::new();
    let mut has_label = false;
    let mut has_quality = false;
    let mut faces: Vec<[u32; 3]> = Vec::new();
    let mut seen_vertex = false;
    let mut seen_face = false;

    for element in &header.elements {
        match element.name.as_str() {
            "vertex" => {
                seen_vertex = true;
                let mut idx_x = None;
                let mut idx_y = None;
                let mut idx_z = None;
                for (i, p) in element.properties.iter().enumerate() {
                    match (p.name.as_str(), &p.kind) {
                        ("x", PropKind::Single(s)) if !s.is_integer() => idx_x = Some(i),
                        ("y", PropKind::Single(s)) if !s.is_integer() => idx_y = Some(i),
                        ("z", PropKind::Single(s)) if !s.is_integer() => idx_z = Some(i),
                        ("label", PropKind::Single(s)) => {
                            if !s.is_integer() {
                                return Err(Error::Format(format!(
                                    "{}: vertex property 'label' must be an integer type",
                                    path.display()
                                )));
                            }
                            has_label = true;
                        }
                        ("quality", PropKind::Single(s)) if !s.is_integer() => {
                            has_quality = true;
                        }
                        _ => {}
                    }
                }
                if idx_x.is_none() || idx_y.is_none() || idx_z.is_none() {
                    return Err(Error::Format(format!(
                        "{}: vertex element must declare float x, y, z",
                        path.display()
                    )));
                }

                vertices.reserve(element.count);
                for _ in 0..element.count {
                    let mut pos = [0.0f64; 3];
                    for (i, p) in element.properties.iter().enumerate() {
                        match &p.kind {
                            PropKind::Single(ty) => {
                                if Some(i) == idx_x {
                                    pos[0] = body.read_float(*ty)?;
                                } else if Some(i) == idx_y {
                                    pos[1] = body.read_float(*ty)?;
                                } else if Some(i) == idx_z {
                                    pos[2] = body.read_float(*ty)?;
                                } else if p.name == "label" {
                                    labels_raw.push(body.read_int(*ty)?);
                                } else if p.name == "quality" && !ty.is_integer() {
                                    quality.push(body.read_float(*ty)?);
                                } else {
                                    body.skip_scalar(*ty)?;
                                }
                            }
                            PropKind::List { count, item } => {
                                let n = body.read_int(*count)?;
                                for _ in 0..n.max(0) {
                                    body.skip_scalar(*item)?;
                                }
                            }
                        }
                    }
                    vertices.push(Point3::new(pos[0], pos[1], pos[2]));
                }
            }
            "face" => {
                seen_face = true;
                faces.reserve(element.count);
                for f in 0..element.count {
                    let mut got_indices = false;
                    for p in &element.properties {
                        match &p.kind {
                            PropKind::List { count, item } => {
                                let n = body.read_int(*count)?;
                                if p.name == "vertex_indices" || p.name == "vertex_index" {
                                    if n != 3 {
                                        return Err(Error::Topology(format!(
                                            "{}: face {f} has {n} vertices; only triangles \
                                             are supported",
                                            path.display()
                                        )));
                                    }
                                    let mut idx = [0u32; 3];
                                    for slot in &mut idx {
                                        let v = body.read_int(*item)?;
                                        if v < 0 || v > u32::MAX as i64 {
                                            return Err(Error::Format(format!(
                                                "{}: face {f} has invalid vertex index {v}",
                                                path.display()
                                            )));
                                        }
                                        *slot = v as u32;
                                    }
                                    faces.push(idx);
                                    got_indices = true;
                                } else {
                                    for _ in 0..n.max(0) {
                                        body.skip_scalar(*item)?;
                                    }
                                }
                            }
                            PropKind::Single(ty) => body.skip_scalar(*ty)?,
                        }
                    }
                    if !got_indices {
                        return Err(Error::Format(format!(
                            "{}: face element lacks a vertex_indices list",
                            path.display()
                        )));
                    }
                }
            }
            _ => {
                // Unknown element: consume and discard its rows.
                for _ in 0..element.count {
                    for p in &element.properties {
                        match &p.kind {
                            PropKind::Single(ty) => body.skip_scalar(*ty)?,
                            PropKind::List { count, item } => {
                                let n = body.read_int(*count)?;
                                for _ in 0..n.max(0) {
                                    body.skip_scalar(*item)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if !seen_vertex || !seen_face {
        return Err(Error::Format(format!(
            "{}: PLY must declare vertex and face elements",
            path.display()
        )));
    }

    let mut mesh = TriMesh::new(vertices, faces)?;

    if has_label {
        let legend = parse_label_legend(&header.comments);
        let n = mesh.vertex_count();
        let mut distinct: Vec<i64> = labels_raw
            .iter()
            .copied()
            .filter(|&v| v != 0)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        distinct.sort_unstable();
        for value in distinct {
            let bits: Vec<bool> = labels_raw.iter().map(|&v| v == value).collect();
            debug_assert_eq!(bits.len(), n);
            let name = legend
                .get(&value)
                .cloned()
                .unwrap_or_else(|| format!("label_{value}"));
            mesh.insert_label(name, VertexMask::from_bits(bits))?;
        }
    }

    Ok(LoadedMesh {
        mesh,
        quality: if has_quality { Some(quality) } else { None },
        comments: header.comments,
    })
}

fn parse_label_legend(comments: &[String]) -> BTreeMap<i64, String> {
    let mut legend = BTreeMap::new();
    for comment in comments {
        let mut tokens = comment.split_whitespace();
        if tokens.next() != Some("label") {
            continue;
        }
        if let (Some(value), Some(name)) = (tokens.next(), tokens.next()) {
            if let Ok(value) = value.parse::<i64>() {
                legend.insert(value, name.to_string());
            }
        }
    }
    legend
}

// ============================================================================
// Saving
// ============================================================================

/// Writes a mesh to `path`, including its labels and an optional per-vertex
/// scalar channel (stored as the `quality` property).
pub fn save_mesh(
    mesh: &TriMesh,
    path: impl AsRef<Path>,
    format: PlyFormat,
    quality: Option<&[f64]>,
) -> Result<()> {
    save_mesh_with_comments(mesh, path, format, quality, &[])
}

/// Like [`save_mesh`], with extra header comment lines (one string per line).
pub fn save_mesh_with_comments(
    mesh: &TriMesh,
    path: impl AsRef<Path>,
    format: PlyFormat,
    quality: Option<&[f64]>,
    comments: &[String],
) -> Result<()> {
    let path = path.as_ref();
    if let Some(q) = quality {
        if q.len() != mesh.vertex_count() {
            return Err(Error::Config(format!(
                "quality channel length {} does not match vertex count {}",
                q.len(),
                mesh.vertex_count()
            )));
        }
    }

    // Flatten named label masks into one integer channel. Masks must be
    // disjoint, since a vertex stores a single value.
    let label_channel = if mesh.labels().is_empty() {
        None
    } else {
        let mut channel = vec![0i32; mesh.vertex_count()];
        let mut legend: Vec<(i32, &str)> = Vec::new();
        for (value, (name, mask)) in mesh.labels().iter().enumerate() {
            let value = value as i32 + 1;
            legend.push((value, name));
            for i in mask.iter_set() {
                if channel[i] != 0 {
                    return Err(Error::Config(format!(
                        "labels overlap at vertex {i}; a PLY label channel stores one \
                         value per vertex"
                    )));
                }
                channel[i] = value;
            }
        }
        Some((channel, legend))
    };

    let mut header = String::new();
    header.push_str("ply\n");
    header.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    for comment in comments {
        let _ = writeln!(header, "comment {comment}");
    }
    if let Some((_, legend)) = &label_channel {
        for (value, name) in legend {
            let _ = writeln!(header, "comment label {value} {name}");
        }
    }
    let _ = writeln!(header, "element vertex {}", mesh.vertex_count());
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if label_channel.is_some() {
        header.push_str("property int label\n");
    }
    if quality.is_some() {
        header.push_str("property float quality\n");
    }
    let _ = writeln!(header, "element face {}", mesh.face_count());
    header.push_str("property list uchar uint vertex_indices\n");
    header.push_str("end_header\n");

    let mut out: Vec<u8> = header.into_bytes();
    match format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            for (i, p) in mesh.vertices().iter().enumerate() {
                let _ = write!(body, "{} {} {}", p.x as f32, p.y as f32, p.z as f32);
                if let Some((channel, _)) = &label_channel {
                    let _ = write!(body, " {}", channel[i]);
                }
                if let Some(q) = quality {
                    let _ = write!(body, " {}", q[i] as f32);
                }
                body.push('\n');
            }
            for f in mesh.faces() {
                let _ = writeln!(body, "3 {} {} {}", f[0], f[1], f[2]);
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, p) in mesh.vertices().iter().enumerate() {
                for d in 0..3 {
                    let mut buf = [0u8; 4];
                    LittleEndian::write_f32(&mut buf, p[d] as f32);
                    out.extend_from_slice(&buf);
                }
                if let Some((channel, _)) = &label_channel {
                    let mut buf = [0u8; 4];
                    LittleEndian::write_i32(&mut buf, channel[i]);
                    out.extend_from_slice(&buf);
                }
                if let Some(q) = quality {
                    let mut buf = [0u8; 4];
                    LittleEndian::write_f32(&mut buf, q[i] as f32);
                    out.extend_from_slice(&buf);
                }
            }
            for f in mesh.faces() {
                out.push(3u8);
                for &idx in f {
                    let mut buf = [0u8; 4];
                    LittleEndian::write_u32(&mut buf, idx);
                    out.extend_from_slice(&buf);
                }
            }
        }
    }

    fs::write(path, out).map_err(|e| Error::io(path, e))
}

// ============================================================================
// Tests
// ============================================================================
