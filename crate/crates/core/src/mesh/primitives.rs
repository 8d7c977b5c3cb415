//! Procedural meshes used by tests, demos and the acceptance suite.

use std::collections::HashMap;

use nalgebra::{Point3, Vector3};

use super::TriangleMesh;
use crate::scalar::Scalar;

/// Regular tetrahedron with unit edge length.
pub fn tetrahedron<T: Scalar>() -> TriangleMesh<T> {
    let h = T::of(3f64.sqrt() / 2.0);
    let third = T::of(1.0 / 3.0);
    let apex = T::of((2.0f64 / 3.0).sqrt());
    let v = vec![
        Point3::new(T::zero(), T::zero(), T::zero()),
        Point3::new(T::one(), T::zero(), T::zero()),
        Point3::new(T::of(0.5), h, T::zero()),
        Point3::new(T::of(0.5), h * third, apex),
    ];
    let f = vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]];
    TriangleMesh::new(v, f).expect("tetrahedron is valid")
}

/// Regular icosahedron inscribed in the unit sphere.
pub fn icosahedron<T: Scalar>() -> TriangleMesh<T> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let v = raw
        .iter()
        .map(|p| {
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            Point3::new(T::of(p[0] / n), T::of(p[1] / n), T::of(p[2] / n))
        })
        .collect();
    let f = vec![
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
    TriangleMesh::new(v, f).expect("icosahedron is valid")
}

/// Loop-style midpoint subdivision of the icosahedron, projected onto the
/// unit sphere. Level `l` has `10·4^l + 2` vertices (level 4: 2562).
pub fn icosphere<T: Scalar>(level: usize) -> TriangleMesh<T> {
    let base = icosahedron::<f64>();
    let mut verts: Vec<Vector3<f64>> = base.vertices().iter().map(|p| p.coords).collect();
    let mut faces: Vec<[usize; 3]> = base.faces().to_vec();
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, verts: &mut Vec<Vector3<f64>>| -> usize {
            let key = if a < b { (a, b) } else { (b, a) };
            *midpoints.entry(key).or_insert_with(|| {
                verts.push(((verts[a] + verts[b]) * 0.5).normalize());
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut verts);
            let bc = mid(b, c, &mut verts);
            let ca = mid(c, a, &mut verts);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    let v = verts.iter().map(|p| Point3::new(T::of(p.x), T::of(p.y), T::of(p.z))).collect();
    TriangleMesh::new(v, faces).expect("icosphere is valid")
}

/// Icosphere with a smooth radial displacement that has no nontrivial
/// symmetry, so its Laplacian spectrum is simple.
pub fn bumpy_icosphere<T: Scalar>(level: usize, amplitude: f64) -> TriangleMesh<T> {
    icosphere::<T>(level)
        .map_vertices(|p| {
            let (x, y, z) = (p.x.as_f64(), p.y.as_f64(), p.z.as_f64());
            let bump = (2.0 * x + 0.3).sin() * (1.5 * y - 0.2).cos()
                + 0.6 * (3.0 * z + 0.7 * x).sin()
                + 0.4 * (x + 2.0 * y + 0.5).cos() * z;
            Point3::from(p.coords * T::of(1.0 + amplitude * bump))
        })
        .expect("displacement keeps faces nondegenerate")
}

/// Torus of revolution sampled on a `n_major × n_minor` grid.
pub fn torus<T: Scalar>(n_major: usize, n_minor: usize, major_radius: f64, minor_radius: f64) -> TriangleMesh<T> {
    assert!(n_major >= 3 && n_minor >= 3, "torus grid needs at least 3×3 samples");
    let tau = std::f64::consts::TAU;
    let mut v = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = tau * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let w = tau * j as f64 / n_minor as f64;
            let r = major_radius + minor_radius * w.cos();
            v.push(Point3::new(T::of(r * u.cos()), T::of(r * u.sin()), T::of(minor_radius * w.sin())));
        }
    }
    let idx = |i: usize, j: usize| (i % n_major) * n_minor + (j % n_minor);
    let mut f = Vec::with_capacity(2 * n_major * n_minor);
    for i in 0..n_major {
        for j in 0..n_minor {
            f.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            f.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    TriangleMesh::new(v, f).expect("torus grid is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn euler_characteristics() {
        for level in 0..4 {
            let s = icosphere::<f64>(level);
            let e = s.edges().len() as i64;
            assert_eq!(s.n_vertices() as i64 - e + s.n_faces() as i64, 2);
            assert_eq!(s.n_faces(), 2 * s.n_vertices() - 4);
        }
        let t = torus::<f64>(12, 8, 2.0, 0.7);
        assert_eq!(t.n_vertices() as i64 - t.edges().len() as i64 + t.n_faces() as i64, 0);
    }

    #[test]
    fn tetrahedron_has_unit_edges() {
        let t = tetrahedron::<f64>();
        for (a, b) in t.edges() {
            let d = (t.vertices()[a] - t.vertices()[b]).norm();
            assert!((d - 1.0).abs() < 1e-14, "edge {a}-{b} has length {d}");
        }
    }
}
