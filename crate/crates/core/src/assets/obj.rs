//! Minimal ASCII Wavefront OBJ reader: `v` and `f` records only.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

pub fn load_mesh_obj(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

/// Parses OBJ text. Faces with more than three corners are fan-triangulated
/// around their first corner; indices are 1-based and must be positive.
/// Normals, texture coordinates, groups and materials are skipped.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let err = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let line = line.split('#').next().unwrap_or_default().trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<f64> = tokens
                    .map(|t| {
                        t.parse::<f64>()
                            .map_err(|_| err(format!("bad coordinate '{t}'")))
                    })
                    .collect::<Result<_>>()?;
                if !(3..=4).contains(&coords.len()) {
                    return Err(err(format!(
                        "vertex needs 3 coordinates, got {}",
                        coords.len()
                    )));
                }
                if coords.iter().any(|c| !c.is_finite()) {
                    return Err(err("non-finite coordinate".into()));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<u32> = tokens
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or_default();
                        let i: i64 = first
                            .parse()
                            .map_err(|_| err(format!("bad face index '{t}'")))?;
                        if i <= 0 {
                            return Err(err(format!(
                                "face index {i} is not positive (OBJ is 1-based)"
                            )));
                        }
                        if i as usize > vertices.len() {
                            return Err(err(format!(
                                "face index {i} exceeds the {} vertices defined so far",
                                vertices.len()
                            )));
                        }
                        Ok((i - 1) as u32)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(err(format!(
                        "face needs at least 3 corners, got {}",
                        idx.len()
                    )));
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 0 1 0
v 1 1 0
v 0 0 1
v 1 0 1
v 0 1 1
v 1 1 1
vn 0 0 1
f 1 3 2
f 2 3 4
f 5 6 7
f 6 8 7
f 1 2 5
f 2 6 5
f 3 7 4
f 4 7 8
f 1 5 3
f 3 5 7
f 2//1 4//1 6//1
f 4/1/1 8/1/1 6/1/1
";

    #[test]
    fn unit_cube() {
        let m = parse_obj(CUBE).unwrap();
        assert_eq!(m.vertices().len(), 8);
        assert_eq!(m.triangles().len(), 12);
        assert!((m.diameter().unwrap() - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn quads_are_fanned() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        assert_eq!(m.vertices().len(), 4);
        assert_eq!(m.triangles(), &[[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        match parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n") {
            Err(Error::Parse { line: 4, .. }) => {}
            other => panic!("{other:?}"),
        }
        match parse_obj("v 0 0\n") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_obj("v 0 0 0\nf -1 1 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_obj("v 0 0 0\nf 1 2 1\n"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_obj("v a 0 0\n"),
            Err(Error::Parse { line: 1, .. })
        ));
        assert!(parse_obj("v 0 0 0\n").is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_mesh_obj(Path::new("/nonexistent/mesh.obj")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/mesh.obj"));
    }
}
