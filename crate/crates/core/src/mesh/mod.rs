//! Triangle meshes: validation, basic geometry and the vertex graph.

mod io;
pub mod primitives;

pub use io::{load_mesh, parse_obj, parse_off, save_mesh, write_obj, write_off};

use nalgebra::{Isometry3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An immutable, validated triangle mesh.
///
/// Construction goes through [`TriangleMesh::new`], which rejects
/// out-of-range indices, repeated indices within a face, zero-area faces and
/// meshes whose edge graph is disconnected.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh<T: Scalar> {
    vertices: Vec<Point3<T>>,
    faces: Vec<[usize; 3]>,
}

impl<T: Scalar> TriangleMesh<T> {
    pub fn new(vertices: Vec<Point3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if n == 0 || faces.is_empty() {
            return Err(Error::Validation("mesh has no vertices or no faces".into()));
        }
        for (fi, p) in vertices.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::Validation(format!("vertex {fi} has a non-finite coordinate")));
            }
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&v| v >= n) {
                return Err(Error::Validation(format!(
                    "face {fi} references vertex {bad}, but the mesh has {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::Validation(format!("face {fi} repeats a vertex: {f:?}")));
            }
        }
        let mesh = TriangleMesh { vertices, faces };
        for (fi, f) in mesh.faces.iter().enumerate() {
            let [a, b, c] = mesh.corners(f);
            let area = triangle_area(&a, &b, &c);
            let longest = (b - a).norm_squared().max((c - b).norm_squared()).max((a - c).norm_squared());
            if !(area > T::of(16.0) * T::eps() * longest) {
                return Err(Error::Validation(format!("face {fi} has zero area")));
            }
        }
        if !mesh.is_connected() {
            return Err(Error::Validation("vertex graph is disconnected".into()));
        }
        Ok(mesh)
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point3<T>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub(crate) fn corners(&self, f: &[usize; 3]) -> [Point3<T>; 3] {
        [self.vertices[f[0]], self.vertices[f[1]], self.vertices[f[2]]]
    }

    pub fn face_areas(&self) -> Vec<T> {
        self.faces
            .iter()
            .map(|f| {
                let [a, b, c] = self.corners(f);
                triangle_area(&a, &b, &c)
            })
            .collect()
    }

    /// Total area (sum of triangle areas).
    pub fn surface_area(&self) -> T {
        self.face_areas().into_iter().fold(T::zero(), |acc, a| acc + a)
    }

    /// Unique undirected edges `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = self
            .faces
            .iter()
            .flat_map(|f| [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])])
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .collect();
        edges.sort_unstable();
        edges.dedup();
        edges
    }

    /// Vertex adjacency lists weighted by Euclidean edge length.
    pub fn adjacency(&self) -> Vec<Vec<(usize, T)>> {
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for (a, b) in self.edges() {
            let len = (self.vertices[a] - self.vertices[b]).norm();
            adj[a].push((b, len));
            adj[b].push((a, len));
        }
        adj
    }

    fn is_connected(&self) -> bool {
        let n = self.n_vertices();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut components = n;
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2])] {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra] = rb;
                    components -= 1;
                }
            }
        }
        components == 1
    }

    /// Applies `f` to every vertex position, keeping the connectivity.
    pub fn map_vertices(&self, f: impl Fn(&Point3<T>) -> Point3<T>) -> Result<Self> {
        Self::new(self.vertices.iter().map(f).collect(), self.faces.clone())
    }

    /// Uniformly scales the mesh about the origin.
    pub fn scaled(&self, s: T) -> Self {
        TriangleMesh {
            vertices: self.vertices.iter().map(|p| Point3::from(p.coords * s)).collect(),
            faces: self.faces.clone(),
        }
    }

    pub fn transformed(&self, iso: &Isometry3<T>) -> Self {
        TriangleMesh {
            vertices: self.vertices.iter().map(|p| iso.transform_point(p)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Scales the mesh so that its surface area equals `target_area`.
    pub fn rescale_to_area(&self, target_area: T) -> Result<Self> {
        if !(target_area > T::zero()) {
            return Err(Error::InvalidParameter(format!("target area must be positive, got {target_area}")));
        }
        let area = self.surface_area();
        if area == target_area {
            return Ok(self.clone());
        }
        Ok(self.scaled((target_area / area).sqrt()))
    }

    /// Relabels vertices so that new vertex `i` is old vertex `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.n_vertices();
        if perm.len() != n {
            return Err(Error::dim(format!("permutation has length {} for {n} vertices", perm.len())));
        }
        let mut inverse = vec![usize::MAX; n];
        for (new, &old) in perm.iter().enumerate() {
            if old >= n {
                return Err(Error::Index { index: old, len: n });
            }
            inverse[old] = new;
        }
        if inverse.contains(&usize::MAX) {
            return Err(Error::InvalidParameter("not a permutation".into()));
        }
        let vertices = perm.iter().map(|&old| self.vertices[old]).collect();
        let faces = self.faces.iter().map(|f| f.map(|v| inverse[v])).collect();
        Self::new(vertices, faces)
    }

    pub fn centroid(&self) -> Point3<T> {
        let sum = self.vertices.iter().fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Point3::from(sum / T::of_usize(self.n_vertices()))
    }
}

pub(crate) fn triangle_area<T: Scalar>(a: &Point3<T>, b: &Point3<T>, c: &Point3<T>) -> T {
    (b - a).cross(&(c - a)).norm() * T::of(0.5)
}

/// Free-function form of [`TriangleMesh::surface_area`].
pub fn surface_area<T: Scalar>(mesh: &TriangleMesh<T>) -> T {
    mesh.surface_area()
}

/// Free-function form of [`TriangleMesh::rescale_to_area`].
pub fn rescale_to_area<T: Scalar>(mesh: &TriangleMesh<T>, target_area: T) -> Result<TriangleMesh<T>> {
    mesh.rescale_to_area(target_area)
}

#[cfg(test)]
mod tests {
    use super::primitives::{icosphere, tetrahedron};
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Translation3, UnitQuaternion};
    use proptest::prelude::*;

    #[test]
    fn tetrahedron_area() {
        let t = tetrahedron::<f64>();
        assert_eq!(t.n_vertices(), 4);
        assert_eq!(t.n_faces(), 4);
        assert_relative_eq!(t.surface_area(), 3f64.sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn scaling_scales_area_quadratically() {
        let t = tetrahedron::<f64>();
        assert_relative_eq!(t.scaled(3.0).surface_area(), 9.0 * 3f64.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn rescale_tetrahedron_to_unit_area() {
        let t = tetrahedron::<f64>();
        let r = t.rescale_to_area(1.0).unwrap();
        let s = 3f64.powf(-0.25);
        assert_relative_eq!(r.vertices()[1].coords, t.vertices()[1].coords * s, max_relative = 1e-14);
        assert_relative_eq!(r.surface_area(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn rescale_to_current_area_is_identity() {
        let t = icosphere::<f64>(1);
        let r = t.rescale_to_area(t.surface_area()).unwrap();
        assert_eq!(r, t);
    }

    #[test]
    fn icosphere_area_below_sphere() {
        let s = icosphere::<f64>(4);
        let a = s.surface_area();
        let four_pi = 4.0 * std::f64::consts::PI;
        assert!(a < four_pi && a > 0.97 * four_pi, "area {a}");
    }

    #[test]
    fn rejects_out_of_range_and_degenerate_faces() {
        let v: Vec<Point3<f64>> = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        assert!(matches!(TriangleMesh::new(v.clone(), vec![[0, 1, 3]]), Err(Error::Validation(_))));
        assert!(matches!(TriangleMesh::new(v.clone(), vec![[0, 1, 1]]), Err(Error::Validation(_))));
        let collinear = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(2.0, 0.0, 0.0)];
        assert!(matches!(TriangleMesh::new(collinear, vec![[0, 1, 2]]), Err(Error::Validation(_))));
    }

    #[test]
    fn rejects_disconnected_mesh() {
        let mut v: Vec<Point3<f64>> = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        v.extend(v.clone().iter().map(|p| p + Vector3::new(5.0, 0.0, 0.0)));
        let err = TriangleMesh::new(v, vec![[0, 1, 2], [3, 4, 5]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn rejects_isolated_vertex() {
        let v: Vec<Point3<f64>> = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(3.0, 3.0, 3.0),
        ];
        assert!(TriangleMesh::new(v, vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn permuting_roundtrips() {
        let s = icosphere::<f64>(1);
        let n = s.n_vertices();
        let perm: Vec<usize> = (0..n).rev().collect();
        let p = s.permuted(&perm).unwrap();
        assert_eq!(p.vertices()[0], s.vertices()[n - 1]);
        assert_relative_eq!(p.surface_area(), s.surface_area(), max_relative = 1e-14);
    }

    proptest! {
        #[test]
        fn area_invariant_under_rigid_motion(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0, angle in 0.0f64..6.0,
            tx in -10.0f64..10.0, ty in -10.0f64..10.0, tz in -10.0f64..10.0,
        ) {
            let axis = Vector3::new(ax, ay, az + 2.0);
            let rot = UnitQuaternion::from_scaled_axis(axis.normalize() * angle);
            let iso = Isometry3::from_parts(Translation3::new(tx, ty, tz), rot);
            let s = icosphere::<f64>(2);
            let moved = s.transformed(&iso);
            prop_assert!((moved.surface_area() - s.surface_area()).abs() <= 1e-12 * s.surface_area());
        }

        #[test]
        fn rescale_hits_target(target in 1e-3f64..1e3) {
            let s = icosphere::<f64>(1);
            let r = s.rescale_to_area(target).unwrap();
            prop_assert!((r.surface_area() - target).abs() <= 1e-12 * target);
        }
    }
}
