use nalgebra::DMatrix;
use rayon::prelude::*;

use super::{reverse_cuthill_mckee, CsrMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Cholesky factorization `P A Pᵀ = L Lᵀ` of a sparse symmetric positive
/// definite matrix, stored over the row envelope of the RCM-reordered matrix.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky<T: Scalar> {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// First stored column of each row of `L`.
    first: Vec<usize>,
    /// Offset of row `i` inside `values`.
    offset: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> EnvelopeCholesky<T> {
    pub fn factor(a: &CsrMatrix<T>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dim("Cholesky needs a square matrix"));
        }
        let mut adj = vec![Vec::new(); n];
        for (i, j, _) in a.triplets() {
            if i != j {
                adj[i].push(j);
            }
        }
        let perm = reverse_cuthill_mckee(&adj);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }

        let mut first: Vec<usize> = (0..n).collect();
        for (i, j, _) in a.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            if pj < pi {
                first[pi] = first[pi].min(pj);
            }
        }
        let mut offset = vec![0; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![T::zero(); offset[n]];
        for (i, j, v) in a.triplets() {
            let (pi, pj) = (inv[i], inv[j]);
            if pj <= pi {
                values[offset[pi] + pj - first[pi]] = v;
            }
        }

        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let mut s = values[offset[i] + j - fi];
                let ri = &values[offset[i] + start - fi..offset[i] + j - fi];
                let rj = &values[offset[j] + start - fj..offset[j] + j - fj];
                for (x, y) in ri.iter().zip(rj) {
                    s -= *x * *y;
                }
                let djj = values[offset[j] + j - fj];
                values[offset[i] + j - fi] = s / djj;
            }
            let row = &values[offset[i]..offset[i] + i - fi];
            let d = values[offset[i] + i - fi] - row.iter().fold(T::zero(), |acc, x| acc + *x * *x);
            if !(d > T::zero()) {
                return Err(Error::Numerical(format!("matrix is not positive definite (pivot {i} = {d:e})")));
            }
            values[offset[i] + i - fi] = d.sqrt();
        }
        Ok(EnvelopeCholesky { n, perm, first, offset, values })
    }

    pub fn envelope_size(&self) -> usize {
        self.values.len()
    }

    fn solve_in_place(&self, x: &mut [T]) {
        let n = self.n;
        let mut y: Vec<T> = self.perm.iter().map(|&old| x[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let mut s = y[i];
            for (k, l) in (fi..i).zip(row) {
                s -= *l * y[k];
            }
            y[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.values[self.offset[i]..self.offset[i + 1]];
            let xi = y[i] / row[i - fi];
            y[i] = xi;
            for (k, l) in (fi..i).zip(row) {
                y[k] -= *l * xi;
            }
        }
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
    }

    /// Solves `A X = B` column by column.
    pub fn solve(&self, b: &DMatrix<T>) -> DMatrix<T> {
        assert_eq!(b.nrows(), self.n);
        let mut x = b.clone();
        x.as_mut_slice().par_chunks_mut(self.n.max(1)).for_each(|col| self.solve_in_place(col));
        x
    }
}
