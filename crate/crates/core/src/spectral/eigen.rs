//! Generalized symmetric eigensolvers for `L φ = λ M φ` with diagonal `M`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, EnvelopeCholesky};
use crate::scalar::{cmp, Scalar};

/// Problems up to this size are solved densely.
pub const DENSE_LIMIT: usize = 1000;

const MAX_SUBSPACE_ITERS: usize = 400;

/// Smallest `k` eigenpairs, sorted ascending, with `M`-orthonormal vectors.
pub(crate) fn smallest_eigenpairs<T: Scalar>(
    stiffness: &CsrMatrix<T>,
    mass: &DVector<T>,
    k: usize,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = mass.len();
    if n <= DENSE_LIMIT || 4 * k >= n {
        dense(stiffness, mass, k)
    } else {
        shift_invert_subspace(stiffness, mass, k)
    }
}

/// Solves `M^{-1/2} L M^{-1/2} v = λ v` with a dense symmetric eigensolver.
pub(crate) fn dense<T: Scalar>(stiffness: &CsrMatrix<T>, mass: &DVector<T>, k: usize) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = mass.len();
    let inv_sqrt = mass.map(|m| T::one() / m.sqrt());
    let mut a = stiffness.to_dense();
    for j in 0..n {
        for i in 0..n {
            a[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let a = (&a + a.transpose()) * T::of(0.5);
    let eig = SymmetricEigen::try_new(a, T::eps(), 0)
        .ok_or_else(|| Error::Convergence("dense symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cmp(&eig.eigenvalues[a], &eig.eigenvalues[b]));
    let values = DVector::from_iterator(k, order[..k].iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, k);
    for (c, &i) in order[..k].iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        for r in 0..n {
            vectors[(r, c)] = v[r] * inv_sqrt[r];
        }
    }
    Ok((values, vectors))
}

fn m_dot<T: Scalar>(a: &[T], b: &[T], mass: &[T]) -> T {
    a.iter().zip(b).zip(mass).fold(T::zero(), |acc, ((x, y), m)| acc + *x * *y * *m)
}

/// Two passes of modified Gram–Schmidt in the `M` inner product. Columns that
/// collapse numerically are replaced by fresh random directions.
fn m_orthonormalize<T: Scalar>(x: &mut DMatrix<T>, mass: &DVector<T>, rng: &mut ChaCha8Rng) {
    let (n, p) = x.shape();
    let m = mass.as_slice();
    for _pass in 0..2 {
        for j in 0..p {
            let data = x.as_mut_slice();
            let (head, tail) = data.split_at_mut(j * n);
            let col = &mut tail[..n];
            let before = m_dot(col, col, m).sqrt();
            for i in 0..j {
                let q = &head[i * n..(i + 1) * n];
                let c = m_dot(q, col, m);
                for (v, qv) in col.iter_mut().zip(q) {
                    *v -= c * *qv;
                }
            }
            let mut norm = m_dot(col, col, m).sqrt();
            if !(norm > T::of(1e3) * T::eps() * before) || !norm.is_finite() {
                for v in col.iter_mut() {
                    *v = T::of(rng.random::<f64>() - 0.5);
                }
                for i in 0..j {
                    let q = &head[i * n..(i + 1) * n];
                    let c = m_dot(q, col, m);
                    for (v, qv) in col.iter_mut().zip(q) {
                        *v -= c * *qv;
                    }
                }
                norm = m_dot(col, col, m).sqrt();
            }
            for v in col.iter_mut() {
                *v /= norm;
            }
        }
    }
}

/// Block subspace iteration on `(L + σM)^{-1} M` with Rayleigh–Ritz
/// extraction. The block is wider than `k` so that clustered eigenvalues
/// near the cut converge together.
pub(crate) fn shift_invert_subspace<T: Scalar>(
    stiffness: &CsrMatrix<T>,
    mass: &DVector<T>,
    k: usize,
) -> Result<(DVector<T>, DMatrix<T>)> {
    let n = mass.len();
    let p = (2 * k).max(k + 16).min(n);
    let trace_l = (0..n).fold(T::zero(), |acc, i| acc + stiffness.get(i, i));
    let sigma = T::of(1e-3) * trace_l / (T::of_usize(n) * mass.sum());
    let shifted = stiffness.add_diagonal(&(mass * sigma));
    let chol = EnvelopeCholesky::factor(&shifted)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_cafe);
    let mut x = DMatrix::from_fn(n, p, |_, _| T::of(rng.random::<f64>() - 0.5));
    m_orthonormalize(&mut x, mass, &mut rng);

    let l_norm = stiffness.norm_inf();
    let tol = T::of(1e-11).max(T::of(50.0) * T::eps());
    let mut worst = T::zero();
    for _ in 0..MAX_SUBSPACE_ITERS {
        let mut mx = x.clone();
        for mut col in mx.column_iter_mut() {
            col.component_mul_assign(mass);
        }
        let mut y = chol.solve(&mx);
        m_orthonormalize(&mut y, mass, &mut rng);
        let ly = stiffness.mul_dense(&y);
        let h = y.transpose() * &ly;
        let h = (&h + h.transpose()) * T::of(0.5);
        let eig = SymmetricEigen::try_new(h, T::eps(), 0)
            .ok_or_else(|| Error::Convergence("Rayleigh–Ritz eigensolve did not converge".into()))?;
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| cmp(&eig.eigenvalues[a], &eig.eigenvalues[b]));
        let q = DMatrix::from_fn(p, p, |r, c| eig.eigenvectors[(r, order[c])]);
        let values: Vec<T> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        x = &y * &q;
        let lx = &ly * &q;

        worst = T::zero();
        for c in 0..k {
            let xc = x.column(c);
            let r = lx.column(c) - xc.component_mul(mass) * values[c];
            worst = worst.max(r.norm() / (l_norm * xc.norm()));
        }
        if worst <= tol {
            let vals = DVector::from_iterator(k, values.into_iter().take(k));
            return Ok((vals, x.columns(0, k).into_owned()));
        }
    }
    Err(Error::Convergence(format!(
        "subspace iteration stopped after {MAX_SUBSPACE_ITERS} iterations with relative residual {worst:e}"
    )))
}
