//! ASCII OBJ (read/write) and binary little-endian PLY (read/write).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::Ply),
            _ => None,
        }
    }
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriMesh> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match format {
        MeshFormat::Obj => {
            let text = String::from_utf8(bytes).map_err(|_| Error::Format {
                path: name.clone(),
                line: 0,
                msg: "OBJ file is not valid UTF-8".into(),
            })?;
            read_obj(&text, &name)
        }
        MeshFormat::Ply => read_ply(&bytes, &name),
    }
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
        MeshFormat::Ply => write_ply(mesh),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_obj(text: &str, name: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let fail = |line: usize, msg: String| Error::Format {
        path: name.to_string(),
        line,
        msg,
    };
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    let t = tok
                        .next()
                        .ok_or_else(|| fail(line_no, "vertex needs 3 coordinates".into()))?;
                    *c = t
                        .parse()
                        .map_err(|_| fail(line_no, format!("bad coordinate `{t}`")))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                let idx = tok
                    .map(|t| {
                        let head = t.split('/').next().unwrap_or("");
                        match head.parse::<i64>() {
                            Ok(i) if i >= 1 => Ok((i - 1) as u32),
                            _ => Err(fail(line_no, format!("bad face index `{t}`"))),
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(fail(line_no, "face needs at least 3 indices".into()));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn write_obj(mesh: &TriMesh) -> String {
    let mut s = String::with_capacity(mesh.vertices.len() * 40 + mesh.faces.len() * 24);
    for p in &mesh.vertices {
        s.push_str(&format!("v {} {} {}\n", p[0], p[1], p[2]));
    }
    for f in &mesh.faces {
        s.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    s
}

pub fn write_ply(mesh: &TriMesh) -> Vec<u8> {
    let mut out = Vec::new();
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", mesh.vertices.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if mesh.quality.is_some() {
        header.push_str("property float quality\n");
    }
    header.push_str(&format!("element face {}\n", mesh.faces.len()));
    header.push_str("property list uchar int vertex_indices\nend_header\n");
    out.write_all(header.as_bytes()).unwrap();
    for (i, p) in mesh.vertices.iter().enumerate() {
        for c in p {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
        if let Some(q) = &mesh.quality {
            out.extend_from_slice(&q[i].to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3u8);
        for ix in f {
            out.extend_from_slice(&(*ix as i32).to_le_bytes());
        }
    }
    out
}

#[derive(Clone, Copy, Debug)]
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
    fn parse(s: &str) -> Option<Self> {
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

enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

pub fn read_ply(bytes: &[u8], name: &str) -> Result<TriMesh> {
    let fail = |line: usize, msg: String| Error::Format {
        path: name.to_string(),
        line,
        msg,
    };
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| fail(line_no + 1, "unterminated PLY header".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| fail(line_no + 1, "non-UTF-8 header".into()))?
            .trim();
        pos += end + 1;
        line_no += 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(fail(1, "missing `ply` magic".into())),
            ["format", "binary_little_endian", "1.0"] => saw_format = true,
            ["format", other, ..] => {
                return Err(fail(line_no, format!("unsupported PLY format `{other}`")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", el, count] => elements.push(Element {
                name: el.to_string(),
                count: count
                    .parse()
                    .map_err(|_| fail(line_no, format!("bad element count `{count}`")))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, pname] => {
                let (ct, it) = Scalar::parse(ct)
                    .zip(Scalar::parse(it))
                    .ok_or_else(|| fail(line_no, "bad list property types".into()))?;
                elements
                    .last_mut()
                    .ok_or_else(|| fail(line_no, "property before element".into()))?
                    .props
                    .push(Property::List(pname.to_string(), ct, it));
            }
            ["property", ty, pname] => {
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| fail(line_no, format!("unknown property type `{ty}`")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| fail(line_no, "property before element".into()))?
                    .props
                    .push(Property::Scalar(pname.to_string(), ty));
            }
            ["end_header"] => break,
            _ => return Err(fail(line_no, format!("unrecognised header line `{line}`"))),
        }
    }
    if !saw_format {
        return Err(fail(line_no, "missing format line".into()));
    }

    let body_line = line_no + 1;
    let truncated = |at: usize| fail(body_line, format!("binary body truncated at byte {at}"));
    let mut vertices = Vec::new();
    let mut quality: Option<Vec<f32>> = None;
    let mut faces = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut p = [0.0f64; 3];
            let mut q = None;
            for prop in &el.props {
                match prop {
                    Property::Scalar(pname, ty) => {
                        let sz = ty.size();
                        let b = bytes.get(pos..pos + sz).ok_or_else(|| truncated(pos))?;
                        let v = ty.read(b);
                        pos += sz;
                        if el.name == "vertex" {
                            match pname.as_str() {
                                "x" => p[0] = v,
                                "y" => p[1] = v,
                                "z" => p[2] = v,
                                "quality" => q = Some(v as f32),
                                _ => {}
                            }
                        }
                    }
                    Property::List(pname, ct, it) => {
                        let b = bytes
                            .get(pos..pos + ct.size())
                            .ok_or_else(|| truncated(pos))?;
                        let n = ct.read(b) as usize;
                        pos += ct.size();
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            let b = bytes
                                .get(pos..pos + it.size())
                                .ok_or_else(|| truncated(pos))?;
                            let v = it.read(b);
                            if v < 0.0 {
                                return Err(fail(body_line, "negative face index".into()));
                            }
                            idx.push(v as u32);
                            pos += it.size();
                        }
                        if el.name == "face" && pname == "vertex_indices" && n >= 3 {
                            for k in 1..n - 1 {
                                faces.push([idx[0], idx[k], idx[k + 1]]);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(p);
                if let Some(q) = q {
                    quality.get_or_insert_with(Vec::new).push(q);
                }
            }
        }
    }
    let mut mesh = TriMesh::new(vertices, faces)?;
    if let Some(q) = quality {
        mesh = mesh.with_quality(q)?;
    }
    Ok(mesh)
}
