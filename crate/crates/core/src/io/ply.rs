//! Binary little-endian PLY in the common 3D Gaussian splatting vertex layout.

use std::path::Path;

use crate::error::{PlyError, Result};
use crate::gaussian::{Gaussian3D, GaussianSet, Role};

/// Properties written, in order. Normals are always zero.
pub const PROPERTIES: [&str; 17] = [
    "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1", "rot_2", "rot_3",
];

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2",
    "rot_3",
];

pub fn to_bytes(set: &GaussianSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(256 + set.len() * PROPERTIES.len() * 4);
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", set.len()).as_bytes());
    for p in PROPERTIES {
        out.extend_from_slice(format!("property float {p}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for g in &set.gaussians {
        let vals = [
            g.mean[0],
            g.mean[1],
            g.mean[2],
            0.0,
            0.0,
            0.0,
            g.sh_dc[0],
            g.sh_dc[1],
            g.sh_dc[2],
            g.opacity_logit,
            g.log_scale[0],
            g.log_scale[1],
            g.log_scale[2],
            g.rotation[0],
            g.rotation[1],
            g.rotation[2],
            g.rotation[3],
        ];
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write(set: &GaussianSet, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(set))?;
    Ok(())
}

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
}

struct Header {
    count: usize,
    props: Vec<(String, Scalar, String)>,
    body_start: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let bad = |m: &str| PlyError::MalformedHeader(m.to_string());
    const END: &[u8] = b"end_header";
    let end = bytes.windows(END.len()).position(|w| w == END).ok_or_else(|| bad("missing end_header"))?;
    let mut body_start = end + END.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) != Some(&b'\n') {
        return Err(bad("end_header is not followed by a newline"));
    }
    body_start += 1;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| bad("header is not valid UTF-8"))?;
    let mut lines = text.lines().map(str::trim);
    if lines.next() != Some("ply") {
        return Err(bad("missing `ply` magic"));
    }
    let mut format_seen = false;
    let mut count = None;
    let mut in_vertex = false;
    let mut vertex_done = false;
    let mut props = Vec::new();
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, ver] => {
                if *fmt != "binary_little_endian" {
                    return Err(PlyError::UnsupportedFormat(fmt.to_string()));
                }
                if *ver != "1.0" {
                    return Err(PlyError::UnsupportedFormat(format!("{fmt} {ver}")));
                }
                format_seen = true;
            }
            ["element", name, n] => {
                if in_vertex {
                    vertex_done = true;
                }
                in_vertex = *name == "vertex";
                if in_vertex {
                    if vertex_done || count.is_some() {
                        return Err(bad("more than one vertex element"));
                    }
                    count = Some(n.parse::<usize>().map_err(|_| bad(&format!("bad vertex count `{n}`")))?);
                } else if count.is_none() {
                    return Err(PlyError::UnsupportedFormat(format!("element `{name}` before the vertex element")));
                }
            }
            ["property", "list", ..] => {
                if in_vertex {
                    return Err(PlyError::UnsupportedFormat("list property on vertices".into()));
                }
            }
            ["property", ty, name] => {
                if in_vertex {
                    let s = Scalar::parse(ty).ok_or_else(|| bad(&format!("unknown property type `{ty}`")))?;
                    props.push((name.to_string(), s, ty.to_string()));
                }
            }
            _ => return Err(bad(&format!("unrecognized header line `{line}`"))),
        }
    }
    if !format_seen {
        return Err(bad("missing format line"));
    }
    let count = count.ok_or_else(|| bad("missing vertex element"))?;
    Ok(Header { count, props, body_start })
}

fn read_scalar(b: &[u8], s: Scalar) -> f64 {
    match s {
        Scalar::I8 => b[0] as i8 as f64,
        Scalar::U8 => b[0] as f64,
        Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
        Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
        Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
        Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("eight bytes")),
    }
}

/// Parses a PLY; unknown vertex properties (such as `f_rest_*`) are skipped.
pub fn from_bytes(bytes: &[u8], role: Role) -> Result<GaussianSet> {
    let h = parse_header(bytes)?;
    let mut offsets = Vec::with_capacity(h.props.len());
    let mut stride = 0;
    for (_, s, _) in &h.props {
        offsets.push(stride);
        stride += s.size();
    }
    let mut slots = [(0usize, Scalar::F32); REQUIRED.len()];
    for (k, name) in REQUIRED.iter().enumerate() {
        let i = h
            .props
            .iter()
            .position(|(n, _, _)| n == name)
            .ok_or_else(|| PlyError::MissingProperty(name.to_string()))?;
        let (_, s, ty) = &h.props[i];
        if !matches!(s, Scalar::F32 | Scalar::F64) {
            return Err(PlyError::PropertyType { name: name.to_string(), found: ty.clone() }.into());
        }
        slots[k] = (offsets[i], *s);
    }
    let body = &bytes[h.body_start..];
    let expected = h.count * stride;
    if body.len() < expected {
        return Err(PlyError::Truncated { expected, found: body.len() }.into());
    }
    let gaussians = body[..expected]
        .chunks_exact(stride.max(1))
        .take(h.count)
        .map(|row| {
            let v: [f32; REQUIRED.len()] = std::array::from_fn(|k| {
                let (off, s) = slots[k];
                match s {
                    Scalar::F32 => f32::from_le_bytes(row[off..off + 4].try_into().expect("four bytes")),
                    _ => read_scalar(&row[off..], s) as f32,
                }
            });
            Gaussian3D {
                mean: [v[0], v[1], v[2]],
                sh_dc: [v[3], v[4], v[5]],
                opacity_logit: v[6],
                log_scale: [v[7], v[8], v[9]],
                rotation: [v[10], v[11], v[12], v[13]],
            }
        })
        .collect();
    Ok(GaussianSet::from_gaussians(role, gaussians))
}

pub fn read(path: &Path, role: Role) -> Result<GaussianSet> {
    let bytes = std::fs::read(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    from_bytes(&bytes, role)
}
