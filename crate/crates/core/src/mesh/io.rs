//! OFF and OBJ readers and writers.
//!
//! Only triangle faces are accepted. OBJ normals, texture coordinates,
//! groups and materials are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::Point3;

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { path: None, line, msg: msg.into() }
}

fn parse_num<T: Scalar>(tok: &str, line: usize) -> Result<T> {
    tok.parse::<f64>()
        .map(T::of)
        .map_err(|_| parse_err(line, format!("expected a number, found {tok:?}")))
}

/// Loads an `.off` or `.obj` file, chosen by extension.
pub fn load_mesh<T: Scalar>(path: impl AsRef<Path>) -> Result<TriangleMesh<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let parsed = match ext.as_deref() {
        Some("off") => parse_off(&text),
        Some("obj") => parse_obj(&text),
        _ => {
            return Err(Error::Parse {
                path: Some(path.to_path_buf()),
                line: 0,
                msg: "unknown mesh extension (expected .off or .obj)".into(),
            })
        }
    };
    parsed.map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse { path: Some(path.to_path_buf()), line, msg },
        other => other,
    })
}

/// Writes an `.off` or `.obj` file, chosen by extension.
pub fn save_mesh<T: Scalar>(mesh: &TriangleMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("obj") => write_obj(mesh),
        _ => write_off(mesh),
    };
    fs::write(path, text)?;
    Ok(())
}

/// Parses OFF text. Comments start with `#`.
pub fn parse_off<T: Scalar>(text: &str) -> Result<TriangleMesh<T>> {
    let mut tokens = text.lines().enumerate().flat_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("");
        l.split_whitespace().map(move |t| (i + 1, t))
    });
    let (line, header) = tokens.next().ok_or_else(|| parse_err(1, "empty file"))?;
    // Some writers glue the counts to the header, e.g. "OFF4 4 0".
    let mut glued = None;
    if header != "OFF" {
        match header.strip_prefix("OFF") {
            Some(rest) if !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()) => glued = Some((line, rest)),
            _ => return Err(parse_err(line, format!("expected OFF header, found {header:?}"))),
        }
    }
    let mut next_count = |what: &str| -> Result<usize> {
        let (line, tok) = match glued.take() {
            Some(g) => g,
            None => tokens.next().ok_or_else(|| parse_err(line, format!("missing {what}")))?,
        };
        tok.parse::<usize>().map_err(|_| parse_err(line, format!("bad {what}: {tok:?}")))
    };
    let nv = next_count("vertex count")?;
    let nf = next_count("face count")?;
    let _ne = next_count("edge count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let mut xyz = [T::zero(); 3];
        for c in &mut xyz {
            let (line, tok) = tokens.next().ok_or_else(|| parse_err(0, "unexpected end of vertex list"))?;
            *c = parse_num(tok, line)?;
        }
        vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (line, tok) = tokens.next().ok_or_else(|| parse_err(0, "unexpected end of face list"))?;
        let count: usize = tok.parse().map_err(|_| parse_err(line, format!("bad face size {tok:?}")))?;
        if count != 3 {
            return Err(parse_err(line, format!("only triangles are supported, found a {count}-gon")));
        }
        let mut f = [0usize; 3];
        for v in &mut f {
            let (line, tok) = tokens.next().ok_or_else(|| parse_err(line, "truncated face"))?;
            *v = tok.parse().map_err(|_| parse_err(line, format!("bad vertex index {tok:?}")))?;
        }
        faces.push(f);
    }
    TriangleMesh::new(vertices, faces)
}

/// Parses OBJ text (`v` and `f` records, 1-based or negative relative indices).
pub fn parse_obj<T: Scalar>(text: &str) -> Result<TriangleMesh<T>> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("");
        let mut toks = l.split_whitespace();
        match toks.next() {
            Some("v") => {
                let mut xyz = [T::zero(); 3];
                for c in &mut xyz {
                    let tok = toks.next().ok_or_else(|| parse_err(line, "vertex needs three coordinates"))?;
                    *c = parse_num(tok, line)?;
                }
                vertices.push(Point3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let refs: Vec<&str> = toks.collect();
                if refs.len() != 3 {
                    return Err(parse_err(line, format!("only triangles are supported, found {} vertices", refs.len())));
                }
                let mut f = [0usize; 3];
                for (slot, r) in f.iter_mut().zip(refs) {
                    let idx = r.split('/').next().unwrap_or("");
                    let idx: i64 = idx.parse().map_err(|_| parse_err(line, format!("bad face index {r:?}")))?;
                    *slot = match idx {
                        0 => {
                            return Err(Error::Validation(format!(
                                "line {line}: OBJ face index 0 is invalid (indices are 1-based)"
                            )))
                        }
                        i if i > 0 => (i - 1) as usize,
                        i => {
                            let back = (-i) as usize;
                            if back > vertices.len() {
                                return Err(Error::Validation(format!("line {line}: relative index {i} out of range")));
                            }
                            vertices.len() - back
                        }
                    };
                }
                faces.push(f);
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces)
}

pub fn write_off<T: Scalar>(mesh: &TriangleMesh<T>) -> String {
    let mut out = String::new();
    writeln!(out, "OFF").unwrap();
    writeln!(out, "{} {} 0", mesh.n_vertices(), mesh.n_faces()).unwrap();
    for p in mesh.vertices() {
        writeln!(out, "{:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(out, "3 {} {} {}", f[0], f[1], f[2]).unwrap();
    }
    out
}

pub fn write_obj<T: Scalar>(mesh: &TriangleMesh<T>) -> String {
    let mut out = String::new();
    for p in mesh.vertices() {
        writeln!(out, "v {:e} {:e} {:e}", p.x, p.y, p.z).unwrap();
    }
    for f in mesh.faces() {
        writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{icosphere, tetrahedron};

    const TET_OFF: &str = "OFF\n# regular-ish tetrahedron\n4 4 0\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 2 1\n3 0 1 3\n3 0 3 2\n3 1 2 3\n";

    #[test]
    fn parses_tetrahedron_off() {
        let m: TriangleMesh<f64> = parse_off(TET_OFF).unwrap();
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_faces(), 4);
        assert_eq!(m.vertices()[3], Point3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn parses_obj_with_extras() {
        let text = "# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nvn 0 0 1\nvt 0 0\n\
                    f 1/1/1 3/1/1 2/1/1\nf 1//1 2//1 4//1\nf 1 4 3\nf -3 -2 -1\nusemtl x\n";
        let m: TriangleMesh<f64> = parse_obj(text).unwrap();
        assert_eq!(m.n_faces(), 4);
        assert_eq!(m.faces()[3], [1, 2, 3]);
    }

    #[test]
    fn obj_index_zero_and_out_of_range_are_validation_errors() {
        let zero = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n";
        assert!(matches!(parse_obj::<f64>(zero), Err(Error::Validation(_))));
        let high = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n";
        assert!(matches!(parse_obj::<f64>(high), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_inputs_are_parse_errors() {
        assert!(matches!(parse_off::<f64>("PLY\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_off::<f64>("OFF\n3 1 0\n0 0 0\n1 0 0\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_off::<f64>("OFF\n4 1 0\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n4 0 1 3 2\n"), Err(Error::Parse { .. })));
        assert!(matches!(parse_obj::<f64>("v 0 0 zero\n"), Err(Error::Parse { .. })));
    }

    #[test]
    fn icosphere_level4_counts() {
        let s = icosphere::<f64>(4);
        let m: TriangleMesh<f64> = parse_off(&write_off(&s)).unwrap();
        assert_eq!(m.n_vertices(), 2562);
        assert_eq!(m.n_faces(), 5120);
    }

    #[test]
    fn off_and_obj_roundtrip() {
        for mesh in [tetrahedron::<f64>(), icosphere::<f64>(2)] {
            let off: TriangleMesh<f64> = parse_off(&write_off(&mesh)).unwrap();
            let obj: TriangleMesh<f64> = parse_obj(&write_obj(&mesh)).unwrap();
            // `{:e}` prints the shortest round-tripping representation.
            assert_eq!(off, mesh);
            assert_eq!(obj, mesh);
        }
    }

    #[test]
    fn load_and_save_files() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = tetrahedron::<f64>();
        for name in ["t.off", "t.obj"] {
            let p = dir.path().join(name);
            save_mesh(&mesh, &p).unwrap();
            assert_eq!(load_mesh::<f64>(&p).unwrap(), mesh);
        }
        let missing = load_mesh::<f64>(dir.path().join("nope.off"));
        assert!(matches!(missing, Err(Error::Io(_))));
    }
}
