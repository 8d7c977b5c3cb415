use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{triangle_area, TriangleMesh};
use crate::scalar::Scalar;

/// Cotangent stiffness matrix and lumped (barycentric) mass.
///
/// The stiffness is positive semidefinite: `L_ij = -(cot α_ij + cot β_ij) / 2`
/// for every edge and `L_ii = -Σ_j L_ij`, so rows sum to zero. Obtuse
/// triangles produce negative weights, which are kept.
#[derive(Debug, Clone)]
pub struct Laplacian<T: Scalar> {
    pub stiffness: CsrMatrix<T>,
    pub mass: DVector<T>,
}

pub fn cotangent_laplacian<T: Scalar>(mesh: &TriangleMesh<T>) -> Result<Laplacian<T>> {
    let n = mesh.n_vertices();
    let mut mass = DVector::zeros(n);
    let mut trip = Vec::with_capacity(mesh.n_faces() * 12);
    let half = T::of(0.5);
    let third = T::of(1.0 / 3.0);
    for f in mesh.faces() {
        let p = mesh.corners(f);
        let area = triangle_area(&p[0], &p[1], &p[2]);
        for c in 0..3 {
            mass[f[c]] += area * third;
            // Angle at corner `c` is opposite the edge (i, j).
            let (i, j) = (f[(c + 1) % 3], f[(c + 2) % 3]);
            let a = p[(c + 1) % 3] - p[c];
            let b = p[(c + 2) % 3] - p[c];
            let cot = a.dot(&b) / a.cross(&b).norm();
            if !cot.is_finite() {
                return Err(Error::Numerical(format!("non-finite cotangent weight on face {f:?}")));
            }
            let w = cot * half;
            trip.push((i, j, -w));
            trip.push((j, i, -w));
            trip.push((i, i, w));
            trip.push((j, j, w));
        }
    }
    Ok(Laplacian { stiffness: CsrMatrix::from_triplets(n, n, &trip), mass })
}
