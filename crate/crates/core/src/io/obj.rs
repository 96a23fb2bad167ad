//! Wavefront OBJ subset: `v`, `vt` and `f` records. Faces need texture
//! indices (`v/vt` or `v/vt/vn`); polygons are fan-triangulated and negative
//! indices count back from the end. Other records are ignored.

use crate::error::{Error, Result};
use crate::geom::{Vec2, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct ObjMesh {
    pub positions: Vec<Vec3>,
    pub uvs: Vec<Vec2>,
    /// Per triangle: position indices and texture indices.
    pub faces: Vec<([usize; 3], [usize; 3])>,
}

impl ObjMesh {
    pub fn vertex_faces(&self) -> Vec<[usize; 3]> {
        self.faces.iter().map(|f| f.0).collect()
    }

    pub fn face_uvs(&self) -> Vec<[Vec2; 3]> {
        self.faces.iter().map(|f| f.1.map(|t| self.uvs[t])).collect()
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse(format!("obj line {line}: {}", msg.into()))
}

fn floats<const N: usize>(line: usize, parts: &[&str]) -> Result<[f64; N]> {
    if parts.len() < N {
        return Err(parse_err(line, format!("expected {N} numbers")));
    }
    let mut out = [0.0f64; N];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| parse_err(line, format!("bad number {p:?}")))?;
        if !o.is_finite() {
            return Err(parse_err(line, "non-finite number"));
        }
    }
    Ok(out)
}

fn resolve(line: usize, raw: &str, count: usize) -> Result<usize> {
    let i: i64 = raw.parse().map_err(|_| parse_err(line, format!("bad index {raw:?}")))?;
    let idx = match i {
        0 => return Err(parse_err(line, "index 0 is invalid")),
        i if i > 0 => (i - 1) as usize,
        i => count.checked_sub(i.unsigned_abs() as usize).ok_or_else(|| parse_err(line, format!("index {i} out of range")))?,
    };
    if idx >= count {
        return Err(parse_err(line, format!("index {raw} out of range")));
    }
    Ok(idx)
}

pub fn parse_obj(text: &str) -> Result<ObjMesh> {
    let mut mesh = ObjMesh {
        positions: Vec::new(),
        uvs: Vec::new(),
        faces: Vec::new(),
    };
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("");
        let parts: Vec<&str> = content.split_whitespace().collect();
        let Some((&kind, rest)) = parts.split_first() else {
            continue;
        };
        match kind {
            "v" => {
                let [x, y, z] = floats::<3>(line, rest)?;
                mesh.positions.push(Vec3::new(x, y, z));
            }
            "vt" => {
                let [u, v] = floats::<2>(line, rest)?;
                mesh.uvs.push(Vec2::new(u, v));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(parse_err(line, "face needs at least 3 corners"));
                }
                let mut corners = Vec::with_capacity(rest.len());
                for c in rest {
                    let mut it = c.split('/');
                    let v = it.next().unwrap_or("");
                    let t = it.next().unwrap_or("");
                    if t.is_empty() {
                        return Err(parse_err(line, format!("corner {c:?} has no texture index")));
                    }
                    corners.push((
                        resolve(line, v, mesh.positions.len())?,
                        resolve(line, t, mesh.uvs.len())?,
                    ));
                }
                for k in 1..corners.len() - 1 {
                    let tri = [corners[0], corners[k], corners[k + 1]];
                    mesh.faces.push((tri.map(|c| c.0), tri.map(|c| c.1)));
                }
            }
            _ => {}
        }
    }
    if mesh.faces.is_empty() {
        return Err(Error::Parse("obj: no faces".into()));
    }
    Ok(mesh)
}

/// One `vt` per face corner; coordinates are written with round-trip precision.
pub fn write_obj(vertices: &[Vec3], faces: &[[usize; 3]], face_uvs: &[[Vec2; 3]]) -> String {
    let mut s = String::new();
    for v in vertices {
        s.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
    }
    for uvs in face_uvs {
        for uv in uvs {
            s.push_str(&format!("vt {} {}\n", uv.x, uv.y));
        }
    }
    for (i, f) in faces.iter().enumerate() {
        s.push_str(&format!(
            "f {}/{} {}/{} {}/{}\n",
            f[0] + 1,
            3 * i + 1,
            f[1] + 1,
            3 * i + 2,
            f[2] + 1,
            3 * i + 3
        ));
    }
    s
}
