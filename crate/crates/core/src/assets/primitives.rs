//! Analytic benchmark meshes. All are centered on their bounding-box center.
//!
//! | name        | params                         | vertices              |
//! |-------------|--------------------------------|-----------------------|
//! | `cube`      | side (0.1)                     | 8                     |
//! | `box`       | sx, sy, sz                     | 8                     |
//! | `icosphere` | radius (0.1), level (3)        | 10·4^level + 2        |
//! | `cylinder`  | radius (0.05), height (0.15), segments (48) | 2·segments + 2 |
//! | `lbracket`  | scale (1.0)                    | 12                    |

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

pub const PRIMITIVE_NAMES: [&str; 5] = ["cube", "box", "icosphere", "cylinder", "lbracket"];

/// Builds a named primitive. Missing trailing parameters take their defaults.
pub fn builtin_primitive(name: &str, params: &[f64]) -> Result<TriangleMesh> {
    let p = |i: usize, default: f64| params.get(i).copied().unwrap_or(default);
    let mesh = match name {
        "cube" => cube(p(0, 0.1)),
        "box" => {
            if params.len() != 3 {
                return Err(Error::invalid("box needs three side lengths"));
            }
            box_mesh(p(0, 0.0), p(1, 0.0), p(2, 0.0))
        }
        "icosphere" => icosphere(p(0, 0.1), p(1, 3.0) as u32),
        "cylinder" => cylinder(p(0, 0.05), p(1, 0.15), p(2, 48.0) as u32),
        "lbracket" => lbracket(p(0, 1.0)),
        other => {
            return Err(Error::invalid(format!(
                "unknown primitive '{other}' (expected one of {})",
                PRIMITIVE_NAMES.join(", ")
            )))
        }
    }?;
    Ok(mesh)
}

/// Parses `name[:p1[:p2...]]`, e.g. `icosphere:0.1:3`.
pub fn parse_primitive_spec(spec: &str) -> Result<TriangleMesh> {
    let mut parts = spec.split(':');
    let name = parts.next().unwrap_or_default().trim();
    let params = parts
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad primitive parameter '{s}' in '{spec}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    builtin_primitive(name, &params)
}

fn positive(v: f64, what: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be positive, got {v}")))
    }
}

pub fn cube(side: f64) -> Result<TriangleMesh> {
    box_mesh(side, side, side)
}

pub fn box_mesh(sx: f64, sy: f64, sz: f64) -> Result<TriangleMesh> {
    positive(sx, "box width")?;
    positive(sy, "box height")?;
    positive(sz, "box depth")?;
    let (hx, hy, hz) = (sx / 2.0, sy / 2.0, sz / 2.0);
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -hx } else { hx },
                if i & 2 == 0 { -hy } else { hy },
                if i & 4 == 0 { -hz } else { hz },
            )
        })
        .collect();
    // Outward-facing (counter-clockwise seen from outside).
    let triangles = vec![
        [0, 2, 1],
        [1, 2, 3],
        [4, 5, 6],
        [5, 7, 6],
        [0, 1, 4],
        [1, 5, 4],
        [2, 6, 3],
        [3, 6, 7],
        [0, 4, 2],
        [2, 4, 6],
        [1, 3, 5],
        [3, 7, 5],
    ];
    TriangleMesh::new(vertices, triangles)
}

pub fn icosphere(radius: f64, level: u32) -> Result<TriangleMesh> {
    positive(radius, "icosphere radius")?;
    if level > 6 {
        return Err(Error::invalid("icosphere level above 6 is not supported"));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .into_iter()
    .map(|(x, y, z)| Vec3::new(x, y, z).normalized().expect("nonzero"))
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]) * 0.5;
                vertices.push(m.normalized().expect("nonzero midpoint"));
                vertices.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let vertices = vertices.into_iter().map(|v| v * radius).collect();
    TriangleMesh::new(vertices, faces)
}

/// Closed cylinder with its axis along object `z`.
pub fn cylinder(radius: f64, height: f64, segments: u32) -> Result<TriangleMesh> {
    positive(radius, "cylinder radius")?;
    positive(height, "cylinder height")?;
    if segments < 3 {
        return Err(Error::invalid("cylinder needs at least 3 segments"));
    }
    let h = height / 2.0;
    let mut vertices = Vec::with_capacity(2 * segments as usize + 2);
    for i in 0..segments {
        let a = std::f64::consts::TAU * i as f64 / segments as f64;
        let (s, c) = a.sin_cos();
        vertices.push(Vec3::new(radius * c, radius * s, -h));
        vertices.push(Vec3::new(radius * c, radius * s, h));
    }
    let bottom = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, -h));
    vertices.push(Vec3::new(0.0, 0.0, h));
    let top = bottom + 1;
    let mut triangles = Vec::with_capacity(4 * segments as usize);
    for i in 0..segments {
        let j = (i + 1) % segments;
        let (b0, t0, b1, t1) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        triangles.push([b0, b1, t1]);
        triangles.push([b0, t1, t0]);
        triangles.push([bottom, b1, b0]);
        triangles.push([top, t0, t1]);
    }
    TriangleMesh::new(vertices, triangles)
}

/// Asymmetric L-shaped bracket: a 0.10 m foot and a 0.14 m upright, both
/// 0.04 m thick, extruded 0.06 m. `scale` multiplies every dimension.
pub fn lbracket(scale: f64) -> Result<TriangleMesh> {
    positive(scale, "lbracket scale")?;
    let (foot, upright, thick, depth) = (0.10, 0.14, 0.04, 0.06);
    let profile = [
        (0.0, 0.0),
        (foot, 0.0),
        (foot, thick),
        (thick, thick),
        (thick, upright),
        (0.0, upright),
    ];
    let (cx, cy, cz) = (foot / 2.0, upright / 2.0, depth / 2.0);
    let mut vertices = Vec::with_capacity(12);
    for z in [0.0, depth] {
        for (x, y) in profile {
            vertices.push(Vec3::new(x - cx, y - cy, z - cz) * scale);
        }
    }
    let mut triangles: Vec<[u32; 3]> = Vec::with_capacity(20);
    // The profile is star-shaped around its first corner, so fans work.
    for i in 1..5u32 {
        triangles.push([0, i + 1, i]);
        triangles.push([6, 6 + i, 6 + i + 1]);
    }
    for i in 0..6u32 {
        let j = (i + 1) % 6;
        triangles.push([i, j, 6 + j]);
        triangles.push([i, 6 + j, 6 + i]);
    }
    TriangleMesh::new(vertices, triangles)
}
