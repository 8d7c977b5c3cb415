//! Laplace–Beltrami discretization and truncated eigenbases.

mod analytic;
mod eigen;
mod io;
mod laplacian;

pub use analytic::{
    hs_partial_sum, rescale_spectra, sphere_spectrum, torus_spectrum, weyl_estimate, AnalyticSpectrum, AnalyticSurface,
};
pub use eigen::DENSE_LIMIT;
pub use io::{read_spectrum, read_spectrum_file, write_spectrum, write_spectrum_file};
pub use laplacian::{cotangent_laplacian, Laplacian};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::TriangleMesh;
use crate::scalar::Scalar;

/// Truncated generalized eigendecomposition `L Φ = M Φ diag(Λ)`.
///
/// Eigenvalues are nondecreasing and nonnegative, eigenfunctions are
/// `M`-orthonormal, and each eigenfunction is signed so that its entry of
/// largest magnitude is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition<T: Scalar> {
    eigenvalues: DVector<T>,
    eigenfunctions: DMatrix<T>,
    mass: DVector<T>,
    source_area: T,
}

impl<T: Scalar> SpectralDecomposition<T> {
    /// Assembles a decomposition from raw parts, checking shapes only.
    pub fn from_parts(eigenvalues: DVector<T>, eigenfunctions: DMatrix<T>, mass: DVector<T>) -> Result<Self> {
        if eigenfunctions.ncols() != eigenvalues.len() || eigenfunctions.nrows() != mass.len() {
            return Err(Error::dim(format!(
                "eigenfunctions are {}×{}, expected {}×{}",
                eigenfunctions.nrows(),
                eigenfunctions.ncols(),
                mass.len(),
                eigenvalues.len()
            )));
        }
        let source_area = mass.sum();
        Ok(SpectralDecomposition { eigenvalues, eigenfunctions, mass, source_area })
    }

    /// Convenience: Laplacian assembly followed by [`eigendecompose`].
    pub fn from_mesh(mesh: &TriangleMesh<T>, k: usize) -> Result<Self> {
        eigendecompose(&cotangent_laplacian(mesh)?, k)
    }

    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.mass.len()
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn eigenfunctions(&self) -> &DMatrix<T> {
        &self.eigenfunctions
    }

    /// First `k` eigenfunctions as a view.
    pub fn basis(&self, k: usize) -> nalgebra::DMatrixView<'_, T> {
        self.eigenfunctions.columns(0, k)
    }

    pub fn mass(&self) -> &DVector<T> {
        &self.mass
    }

    pub fn source_area(&self) -> T {
        self.source_area
    }

    /// Keeps the first `k` eigenpairs.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k > self.k() {
            return Err(Error::dim(format!("cannot truncate {} eigenpairs to {k}", self.k())));
        }
        Ok(SpectralDecomposition {
            eigenvalues: self.eigenvalues.rows(0, k).into_owned(),
            eigenfunctions: self.eigenfunctions.columns(0, k).into_owned(),
            mass: self.mass.clone(),
            source_area: self.source_area,
        })
    }

    /// Largest entry of `|ΦᵀMΦ − I|`.
    pub fn orthonormality_error(&self) -> T {
        let phi = &self.eigenfunctions;
        let mut mphi = phi.clone();
        for mut col in mphi.column_iter_mut() {
            col.component_mul_assign(&self.mass);
        }
        let gram = phi.transpose() * mphi;
        (gram - DMatrix::identity(self.k(), self.k())).amax()
    }

    /// Frobenius norm of `LΦ − MΦ diag(Λ)`.
    pub fn residual_norm(&self, stiffness: &CsrMatrix<T>) -> T {
        let lphi = stiffness.mul_dense(&self.eigenfunctions);
        let mut r = lphi;
        for c in 0..self.k() {
            let lambda = self.eigenvalues[c];
            for i in 0..self.n_vertices() {
                r[(i, c)] -= self.mass[i] * self.eigenfunctions[(i, c)] * lambda;
            }
        }
        r.norm()
    }
}

/// Computes the `k` smallest Laplace–Beltrami eigenpairs.
///
/// Meshes with at most [`DENSE_LIMIT`] vertices (or where `k` is a large
/// fraction of `n`) use a dense solve of `M^{-1/2} L M^{-1/2}`; larger ones use
/// shift-invert subspace iteration with a sparse Cholesky factor.
pub fn eigendecompose<T: Scalar>(laplacian: &Laplacian<T>, k: usize) -> Result<SpectralDecomposition<T>> {
    let n = laplacian.mass.len();
    if k == 0 || k > n {
        return Err(Error::dim(format!("requested {k} eigenpairs of a {n}-vertex mesh")));
    }
    let (mut values, mut vectors) = eigen::smallest_eigenpairs(&laplacian.stiffness, &laplacian.mass, k)?;

    let top = values[k - 1].abs();
    let clamp = T::of(1e-10).max(T::eps().sqrt()) * top;
    for v in values.iter_mut() {
        if *v < T::zero() {
            if -*v <= clamp {
                *v = T::zero();
            } else {
                return Err(Error::Numerical(format!("negative eigenvalue {v:e} from a PSD stiffness matrix")));
            }
        }
    }
    for mut col in vectors.column_iter_mut() {
        let (mut best, mut best_abs) = (0usize, T::zero());
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best = i;
                best_abs = v.abs();
            }
        }
        if col[best] < T::zero() {
            col.neg_mut();
        }
    }
    SpectralDecomposition::from_parts(values, vectors, laplacian.mass.clone())
}
