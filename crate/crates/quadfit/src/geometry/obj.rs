//! Minimal Wavefront OBJ import/export: `v` and `f` records only. Normals and
//! texture coordinates are ignored on input and omitted on output. Polygons
//! are fan-triangulated.

use super::Mesh;
use crate::math::vec3;
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Debug)]
pub enum ObjError {
    Io(std::io::Error),
    Parse { line: usize, message: String },
}

impl std::fmt::Display for ObjError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ObjError::Io(e) => write!(f, "obj io error: {}", e),
            ObjError::Parse { line, message } => write!(f, "obj parse error at line {}: {}", line, message),
        }
    }
}

impl std::error::Error for ObjError {}

impl From<std::io::Error> for ObjError {
    fn from(e: std::io::Error) -> Self {
        ObjError::Io(e)
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> ObjError {
    ObjError::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_obj(path: impl AsRef<Path>) -> Result<Mesh<f64>, ObjError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    parse_obj(reader)
}

pub fn parse_obj(reader: impl BufRead) -> Result<Mesh<f64>, ObjError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        match it.next() {
            Some("v") => {
                let mut coords = [0.0f64; 3];
                for c in &mut coords {
                    let tok = it
                        .next()
                        .ok_or_else(|| parse_err(lineno, "vertex needs 3 coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad coordinate '{}'", tok)))?;
                }
                vertices.push(vec3(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for tok in it {
                    // "i", "i/t", "i/t/n", "i//n" all reference vertex i first
                    let first = tok.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| parse_err(lineno, format!("bad face index '{}'", tok)))?;
                    if i < 1 {
                        return Err(parse_err(
                            lineno,
                            format!("face index {} out of range (OBJ is 1-based)", i),
                        ));
                    }
                    let i = (i - 1) as usize;
                    if i >= vertices.len() {
                        return Err(parse_err(
                            lineno,
                            format!("face index {} exceeds vertex count {}", i + 1, vertices.len()),
                        ));
                    }
                    idx.push(i);
                }
                if idx.len() < 3 {
                    return Err(parse_err(lineno, "face needs at least 3 indices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            // vn/vt/usemtl/etc ignored
            _ => {}
        }
    }
    Ok(Mesh { vertices, faces })
}

pub fn save_obj(mesh: &Mesh<f64>, path: impl AsRef<Path>) -> Result<(), ObjError> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    // f64 Display round-trips exactly
    for v in &mesh.vertices {
        writeln!(out, "v {} {} {}", v.x, v.y, v.z)?;
    }
    for f in &mesh.faces {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    out.flush()?;
    Ok(())
}
