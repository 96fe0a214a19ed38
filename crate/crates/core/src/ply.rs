//! Minimal binary little-endian PLY reader and writer.
//!
//! Reads `vertex` elements with `x`/`y`/`z` scalar properties and an optional
//! `face` element with a `vertex_indices` (or `vertex_index`) list. Any other
//! elements and properties are skipped. Polygons are fan-triangulated.

use std::io::Write;

use nalgebra::Point3;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlyError {
    #[error("bad header: {0}")]
    Header(String),
    #[error("unsupported format `{0}`, only binary_little_endian 1.0 is read")]
    Format(String),
    #[error("payload truncated at byte {0}")]
    Truncated(usize),
    #[error("missing property `{0}`")]
    MissingProperty(&'static str),
    #[error("{0} trailing bytes after last element")]
    Trailing(usize),
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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Parsed PLY content relevant to meshes and point clouds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub vertices: Vec<Point3<f64>>,
    pub faces: Vec<[u32; 3]>,
    pub comments: Vec<String>,
}

pub fn parse(bytes: &[u8]) -> Result<PlyData, PlyError> {
    let (elements, comments, body_start) = parse_header(bytes)?;
    let mut data = PlyData { comments, ..Default::default() };
    let mut pos = body_start;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], PlyError> {
        let end = pos.checked_add(n).filter(|&e| e <= bytes.len()).ok_or(PlyError::Truncated(*pos))?;
        let s = &bytes[*pos..end];
        *pos = end;
        Ok(s)
    };

    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let idx = |want: &'static str| {
                    el.props
                        .iter()
                        .position(|p| matches!(p, Property::Scalar { name, .. } if name == want))
                        .ok_or(PlyError::MissingProperty(want))
                };
                let (ix, iy, iz) = (idx("x")?, idx("y")?, idx("z")?);
                data.vertices.reserve(el.count.min(1 << 24));
                for _ in 0..el.count {
                    let mut xyz = [0.0; 3];
                    for (pi, p) in el.props.iter().enumerate() {
                        let v = read_property(p, &mut pos, &take)?;
                        if let Some(first) = v.first() {
                            if pi == ix {
                                xyz[0] = *first;
                            } else if pi == iy {
                                xyz[1] = *first;
                            } else if pi == iz {
                                xyz[2] = *first;
                            }
                        }
                    }
                    data.vertices.push(Point3::from(xyz));
                }
            }
            "face" => {
                let list_idx = el
                    .props
                    .iter()
                    .position(|p| matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index"))
                    .ok_or(PlyError::MissingProperty("vertex_indices"))?;
                for _ in 0..el.count {
                    for (pi, p) in el.props.iter().enumerate() {
                        let v = read_property(p, &mut pos, &take)?;
                        if pi == list_idx {
                            if v.iter().any(|i| *i < 0.0 || *i > u32::MAX as f64) {
                                return Err(PlyError::Header("negative face index".into()));
                            }
                            for k in 1..v.len().saturating_sub(1) {
                                data.faces.push([v[0] as u32, v[k] as u32, v[k + 1] as u32]);
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.props {
                        read_property(p, &mut pos, &take)?;
                    }
                }
            }
        }
    }
    if pos != bytes.len() {
        return Err(PlyError::Trailing(bytes.len() - pos));
    }
    Ok(data)
}

fn read_property<'a, F>(p: &Property, pos: &mut usize, take: &F) -> Result<Vec<f64>, PlyError>
where
    F: Fn(&mut usize, usize) -> Result<&'a [u8], PlyError>,
{
    match p {
        Property::Scalar { ty, .. } => Ok(vec![ty.read(take(pos, ty.size())?)]),
        Property::List { count, item, .. } => {
            let n = count.read(take(pos, count.size())?);
            if !(0.0..=1e6).contains(&n) {
                return Err(PlyError::Header(format!("list length {n}")));
            }
            let n = n as usize;
            let raw = take(pos, n * item.size())?;
            Ok(raw.chunks_exact(item.size()).map(|c| item.read(c)).collect())
        }
    }
}

fn parse_header(bytes: &[u8]) -> Result<(Vec<Element>, Vec<String>, usize), PlyError> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| PlyError::Header("no end_header".into()))?;
    let mut body = end + END.len();
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(PlyError::Header("end_header not followed by newline".into()));
    }
    body += 1;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| PlyError::Header("non-utf8 header".into()))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(PlyError::Header("missing magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut comments = Vec::new();
    let mut format_ok = false;
    for line in lines {
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("format") => {
                let fmt = tok.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(PlyError::Format(fmt.to_string()));
                }
                format_ok = true;
            }
            Some("comment") | Some("obj_info") => {
                comments.push(line.split_once(' ').map_or("", |x| x.1).to_string());
            }
            Some("element") => {
                let name = tok.next().ok_or_else(|| PlyError::Header(line.into()))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| PlyError::Header(line.into()))?;
                elements.push(Element { name: name.to_string(), count, props: Vec::new() });
            }
            Some("property") => {
                let el = elements.last_mut().ok_or_else(|| PlyError::Header("property before element".into()))?;
                let t = tok.next().ok_or_else(|| PlyError::Header(line.into()))?;
                let prop = if t == "list" {
                    let count = tok.next().and_then(Scalar::parse).ok_or_else(|| PlyError::Header(line.into()))?;
                    let item = tok.next().and_then(Scalar::parse).ok_or_else(|| PlyError::Header(line.into()))?;
                    let name = tok.next().ok_or_else(|| PlyError::Header(line.into()))?;
                    Property::List { name: name.into(), count, item }
                } else {
                    let ty = Scalar::parse(t).ok_or_else(|| PlyError::Header(line.into()))?;
                    let name = tok.next().ok_or_else(|| PlyError::Header(line.into()))?;
                    Property::Scalar { name: name.into(), ty }
                };
                el.props.push(prop);
            }
            Some(other) => return Err(PlyError::Header(format!("unknown keyword `{other}`"))),
        }
    }
    if !format_ok {
        return Err(PlyError::Header("missing format line".into()));
    }
    Ok((elements, comments, body))
}

/// Writes a point cloud as `float` x/y/z vertices. Output is canonical: the
/// same points and comments always produce the same bytes.
pub fn write_points<W: Write>(mut w: W, points: &[Point3<f64>], comments: &[&str]) -> std::io::Result<()> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    for c in comments {
        header.push_str("comment ");
        header.push_str(c);
        header.push('\n');
    }
    header.push_str(&format!(
        "element vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    ));
    let mut buf = header.into_bytes();
    buf.reserve(points.len() * 12);
    for p in points {
        for c in p.coords.iter() {
            buf.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)
}

/// Writes a triangle mesh with `double` vertices and `uchar`/`uint` face lists.
pub fn write_mesh<W: Write>(mut w: W, vertices: &[Point3<f64>], faces: &[[u32; 3]]) -> std::io::Result<()> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar uint vertex_indices\nend_header\n",
        vertices.len(),
        faces.len()
    );
    let mut buf = header.into_bytes();
    for v in vertices {
        for c in v.coords.iter() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in faces {
        buf.push(3);
        for i in f {
            buf.extend_from_slice(&i.to_le_bytes());
        }
    }
    w.write_all(&buf)
}
