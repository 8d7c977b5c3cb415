//! Functional-map energy, its gradient and the least-squares solver.
//!
//! The energy for a `k2 × k1` map `C` is
//!
//! ```text
//! α1‖CA1 − A2‖² + α2 Σ‖CD1ᵢ − D2ᵢC‖² + α3 E_orient(C) + α4 Σ M_ij C_ij²
//! ```
//!
//! Without the multiplicative and orientation terms it separates into one
//! small SPD system per row of `C`; otherwise it is minimized with
//! block-Jacobi preconditioned conjugate gradients on the normal equations.

use std::sync::Arc;

use nalgebra::{Cholesky, Complex, DMatrix, DVector, Dyn, SVD};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::masks::{weighted_penalty, Mask};
use crate::scalar::Scalar;

pub const CG_MAX_ITERS: usize = 5000;
pub const CG_TOLERANCE: f64 = 1e-8;
const RESIDUAL_REFRESH: usize = 50;

/// Linear map between reduced function spaces, `k2 × k1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalMap<T: Scalar> {
    c: DMatrix<T>,
}

impl<T: Scalar> FunctionalMap<T> {
    pub fn new(c: DMatrix<T>) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("functional map has non-finite entries".into()));
        }
        Ok(FunctionalMap { c })
    }

    pub fn identity(k2: usize, k1: usize) -> Self {
        FunctionalMap { c: DMatrix::identity(k2, k1) }
    }

    pub fn zeros(k2: usize, k1: usize) -> Self {
        FunctionalMap { c: DMatrix::zeros(k2, k1) }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.c
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.c
    }

    pub fn k1(&self) -> usize {
        self.c.ncols()
    }

    pub fn k2(&self) -> usize {
        self.c.nrows()
    }

    /// `(k1, k2)`.
    pub fn basis_sizes(&self) -> (usize, usize) {
        (self.k1(), self.k2())
    }
}

/// Term weights `(α1, α2, α3, α4)` for descriptor preservation,
/// multiplication-operator commutativity, orientation and mask.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights<T: Scalar> {
    pub desc: T,
    pub mult: T,
    pub orient: T,
    pub mask: T,
}

impl<T: Scalar> Weights<T> {
    pub fn new(desc: T, mult: T, orient: T, mask: T) -> Self {
        Weights { desc, mult, orient, mask }
    }

    fn as_array(&self) -> [T; 4] {
        [self.desc, self.mult, self.orient, self.mask]
    }
}

/// Unweighted energy terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms<T: Scalar> {
    pub desc: T,
    pub mult: T,
    pub orient: T,
    pub mask: T,
}

impl<T: Scalar> EnergyTerms<T> {
    pub fn weighted(&self, w: &Weights<T>) -> T {
        w.desc * self.desc + w.mult * self.mult + w.orient * self.orient + w.mask * self.mask
    }
}

/// A convex quadratic energy term in `C`, supplied by the caller.
pub trait QuadraticTerm<T: Scalar>: Send + Sync {
    fn value(&self, c: &DMatrix<T>) -> T;
    fn gradient(&self, c: &DMatrix<T>) -> DMatrix<T>;
}

#[derive(Clone)]
pub struct EnergyProblem<T: Scalar> {
    pub a1: DMatrix<T>,
    pub a2: DMatrix<T>,
    pub mult_pairs: Vec<(DMatrix<T>, DMatrix<T>)>,
    pub mask: Mask<T>,
    pub weights: Weights<T>,
    pub orient: Option<Arc<dyn QuadraticTerm<T>>>,
}

impl<T: Scalar> std::fmt::Debug for EnergyProblem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EnergyProblem")
            .field("k1", &self.k1())
            .field("k2", &self.k2())
            .field("d", &self.a1.ncols())
            .field("mult_pairs", &self.mult_pairs.len())
            .field("mask", &self.mask.kind)
            .field("weights", &self.weights)
            .field("orient", &self.orient.is_some())
            .finish()
    }
}

impl<T: Scalar> EnergyProblem<T> {
    /// Problem with descriptor and mask terms, both weighted 1.
    pub fn new(a1: DMatrix<T>, a2: DMatrix<T>, mask: Mask<T>) -> Result<Self> {
        let p = EnergyProblem {
            a1,
            a2,
            mult_pairs: Vec::new(),
            mask,
            weights: Weights::new(T::one(), T::zero(), T::zero(), T::one()),
            orient: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_mult_pairs(mut self, pairs: Vec<(DMatrix<T>, DMatrix<T>)>) -> Result<Self> {
        self.mult_pairs = pairs;
        self.validate()?;
        Ok(self)
    }

    pub fn with_weights(mut self, weights: Weights<T>) -> Result<Self> {
        self.weights = weights;
        self.validate()?;
        Ok(self)
    }

    pub fn with_orient(mut self, term: Arc<dyn QuadraticTerm<T>>) -> Self {
        self.orient = Some(term);
        self
    }

    pub fn k1(&self) -> usize {
        self.a1.nrows()
    }

    pub fn k2(&self) -> usize {
        self.a2.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (k1, k2, d) = (self.k1(), self.k2(), self.a1.ncols());
        if self.a2.ncols() != d {
            return Err(Error::dim(format!("A1 has {d} descriptors, A2 has {}", self.a2.ncols())));
        }
        if self.mask.weights.shape() != (k2, k1) {
            return Err(Error::dim(format!("mask is {:?}, expected ({k2}, {k1})", self.mask.weights.shape())));
        }
        for (i, (d1, d2)) in self.mult_pairs.iter().enumerate() {
            if d1.shape() != (k1, k1) || d2.shape() != (k2, k2) {
                return Err(Error::dim(format!(
                    "multiplication pair {i} is {:?}/{:?}, expected ({k1}, {k1})/({k2}, {k2})",
                    d1.shape(),
                    d2.shape()
                )));
            }
        }
        if self.weights.as_array().iter().any(|w| !(*w >= T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidParameter(format!("weights must be finite and nonnegative: {:?}", self.weights)));
        }
        if !((self.weights.desc > T::zero() && d > 0) || self.weights.mask > T::zero()) {
            return Err(Error::InvalidParameter("need a descriptor term (α1 > 0, d > 0) or a mask term (α4 > 0)".into()));
        }
        if self.weights.orient > T::zero() && self.orient.is_none() {
            return Err(Error::Unsupported("α3 > 0 requires an orientation term to be supplied".into()));
        }
        Ok(())
    }

    fn check_map(&self, c: &DMatrix<T>) -> Result<()> {
        if c.shape() != (self.k2(), self.k1()) {
            return Err(Error::dim(format!("map is {:?}, problem expects ({}, {})", c.shape(), self.k2(), self.k1())));
        }
        Ok(())
    }

    fn uses_cg(&self) -> bool {
        (self.weights.mult > T::zero() && !self.mult_pairs.is_empty())
            || (self.weights.orient > T::zero() && self.orient.is_some())
    }
}

/// Every term evaluated without its weight.
pub fn energy_terms<T: Scalar>(p: &EnergyProblem<T>, c: &DMatrix<T>) -> Result<EnergyTerms<T>> {
    p.check_map(c)?;
    let desc = (c * &p.a1 - &p.a2).norm_squared();
    let mult = p
        .mult_pairs
        .iter()
        .fold(T::zero(), |acc, (d1, d2)| acc + (c * d1 - d2 * c).norm_squared());
    let orient = p.orient.as_ref().map_or(T::zero(), |o| o.value(c));
    let mask = weighted_penalty(&p.mask.weights, c)?;
    Ok(EnergyTerms { desc, mult, orient, mask })
}

pub fn energy_value<T: Scalar>(p: &EnergyProblem<T>, c: &FunctionalMap<T>) -> Result<T> {
    Ok(energy_terms(p, c.matrix())?.weighted(&p.weights))
}

pub fn energy_gradient<T: Scalar>(p: &EnergyProblem<T>, c: &FunctionalMap<T>) -> Result<DMatrix<T>> {
    p.check_map(c.matrix())?;
    Ok(gradient(p, c.matrix()))
}

fn gradient<T: Scalar>(p: &EnergyProblem<T>, c: &DMatrix<T>) -> DMatrix<T> {
    let two = T::of(2.0);
    let w = &p.weights;
    let mut g = (c * &p.a1 - &p.a2) * p.a1.transpose() * (two * w.desc);
    if w.mult > T::zero() {
        for (d1, d2) in &p.mult_pairs {
            let r = c * d1 - d2 * c;
            g += (&r * d1.transpose() - d2.transpose() * &r) * (two * w.mult);
        }
    }
    if w.orient > T::zero() {
        if let Some(o) = &p.orient {
            g += o.gradient(c) * w.orient;
        }
    }
    g += p.mask.weights.component_mul(c) * (two * w.mask);
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    RowDecoupled,
    ConjugateGradient,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T: Scalar> {
    pub map: FunctionalMap<T>,
    pub path: SolvePath,
    pub iterations: usize,
    /// Frobenius norm of the gradient at the returned map.
    pub gradient_norm: T,
    /// Gradient norm the solver had to reach.
    pub tolerance: T,
    /// Energy after initialization and after every CG step.
    pub energy_trace: Vec<T>,
}

/// Minimizes the energy; see [`solve_with_report`].
pub fn solve<T: Scalar>(p: &EnergyProblem<T>) -> Result<FunctionalMap<T>> {
    solve_with_report(p).map(|r| r.map)
}

/// Solves a symmetric positive semidefinite system, falling back to the
/// minimum-norm least-squares solution when Cholesky fails.
fn spd_solve<T: Scalar>(a: DMatrix<T>, b: &DVector<T>) -> DVector<T> {
    if let Some(ch) = Cholesky::new(a.clone()) {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return x;
        }
    }
    pinv(a) * b
}

fn pinv<T: Scalar>(a: DMatrix<T>) -> DMatrix<T> {
    let n = a.nrows();
    let svd = SVD::new(a, true, true);
    let smax = svd.singular_values.iter().copied().fold(T::zero(), T::max);
    let cut = smax * T::eps() * T::of_usize(n.max(1)) * T::of(10.0);
    svd.pseudo_inverse(cut).unwrap_or_else(|_| DMatrix::zeros(n, n))
}

/// Row-wise solve of the descriptor + mask normal equations.
fn decoupled<T: Scalar>(a1: &DMatrix<T>, a2: &DMatrix<T>, mask: &DMatrix<T>, alpha_desc: T, alpha_mask: T) -> DMatrix<T> {
    let (k2, k1) = mask.shape();
    let gram = a1 * a1.transpose() * alpha_desc;
    let rhs = a2 * a1.transpose() * alpha_desc;
    let rows: Vec<DVector<T>> = (0..k2)
        .into_par_iter()
        .map(|i| {
            let mut m = gram.clone();
            for j in 0..k1 {
                m[(j, j)] += alpha_mask * mask[(i, j)];
            }
            spd_solve(m, &rhs.row(i).transpose())
        })
        .collect();
    DMatrix::from_fn(k2, k1, |i, j| rows[i][j])
}

struct BlockJacobi<T: Scalar> {
    inverses: Vec<Cholesky<T, Dyn>>,
}

/// Cholesky factor of `b + δI`, with `δ` grown from zero until `b + δI` is
/// numerically positive definite. Blocks can be singular when terms outside
/// the preconditioner (such as a supplied orientation term) carry the missing
/// curvature.
fn shifted_cholesky<T: Scalar>(b: DMatrix<T>) -> Cholesky<T, Dyn> {
    let n = b.nrows();
    if let Some(ch) = Cholesky::new(b.clone()) {
        let d = ch.l_dirty().diagonal();
        let (lo, hi) = d.iter().fold((T::max_value().unwrap(), T::zero()), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        if lo > hi * T::eps().sqrt() {
            return ch;
        }
    }
    let scale = (b.trace() / T::of_usize(n.max(1))).max(T::one());
    let mut delta = scale * T::eps().sqrt();
    loop {
        let mut s = b.clone();
        for i in 0..n {
            s[(i, i)] += delta;
        }
        if let Some(ch) = Cholesky::new(s) {
            return ch;
        }
        delta *= T::of(10.0);
    }
}

impl<T: Scalar> BlockJacobi<T> {
    fn new(p: &EnergyProblem<T>) -> Self {
        let (k1, k2) = (p.k1(), p.k2());
        let two = T::of(2.0);
        let w = &p.weights;
        let gram = &p.a1 * p.a1.transpose() * (two * w.desc);
        // Per-pair pieces shared by all rows: D1D1ᵀ, D1 + D1ᵀ, diag(D2) and
        // the squared column norms of D2.
        let pairs: Vec<(DMatrix<T>, DMatrix<T>, DVector<T>, DVector<T>)> = if w.mult > T::zero() {
            p.mult_pairs
                .iter()
                .map(|(d1, d2)| {
                    let col_sq = DVector::from_fn(k2, |i, _| d2.column(i).norm_squared());
                    (d1 * d1.transpose(), d1 + d1.transpose(), d2.diagonal(), col_sq)
                })
                .collect()
        } else {
            Vec::new()
        };
        let inverses = (0..k2)
            .into_par_iter()
            .map(|i| {
                let mut b = gram.clone();
                for j in 0..k1 {
                    b[(j, j)] += two * w.mask * p.mask.weights[(i, j)];
                }
                for (d1d1t, d1sym, d2diag, col_sq) in &pairs {
                    // (D1 − dI)(D1 − dI)ᵀ + Σ_{m≠i} D2_mi² I with d = D2_ii
                    let mut blk = d1d1t - d1sym * d2diag[i];
                    for j in 0..k1 {
                        blk[(j, j)] += col_sq[i];
                    }
                    b += blk * (two * w.mult);
                }
                shifted_cholesky(b)
            })
            .collect();
        BlockJacobi { inverses }
    }

    fn apply(&self, r: &DMatrix<T>) -> DMatrix<T> {
        let mut z = r.clone();
        for (i, inv) in self.inverses.iter().enumerate() {
            let row = r.row(i).transpose();
            let sol = inv.solve(&row);
            z.row_mut(i).copy_from(&sol.transpose());
        }
        z
    }
}

fn frob_dot<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter().zip(b.iter()).fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

/// Minimizes the energy and reports how.
///
/// Stops when `‖∇E‖ ≤ 1e-8·(1 + ‖∇E(0)‖)`; the CG path fails with
/// [`Error::Solver`] if that is not reached within [`CG_MAX_ITERS`].
pub fn solve_with_report<T: Scalar>(p: &EnergyProblem<T>) -> Result<SolveReport<T>> {
    p.validate()?;
    let x = decoupled(&p.a1, &p.a2, &p.mask.weights, p.weights.desc, p.weights.mask);
    if !p.uses_cg() {
        let g = gradient(p, &x);
        let e = energy_terms(p, &x)?.weighted(&p.weights);
        let tol = T::of(CG_TOLERANCE) * (T::one() + gradient(p, &DMatrix::zeros(p.k2(), p.k1())).norm());
        return Ok(SolveReport {
            map: FunctionalMap::new(x)?,
            path: SolvePath::RowDecoupled,
            iterations: 0,
            gradient_norm: g.norm(),
            tolerance: tol,
            energy_trace: vec![e],
        });
    }
    pcg(p, x)
}

/// Preconditioned CG from `x0` (zeros if `None`), even when the problem
/// decouples by rows. Same stopping rule as [`solve_with_report`].
pub fn solve_iterative<T: Scalar>(p: &EnergyProblem<T>, x0: Option<&DMatrix<T>>) -> Result<SolveReport<T>> {
    p.validate()?;
    let x = match x0 {
        Some(x) => {
            p.check_map(x)?;
            x.clone()
        }
        None => DMatrix::zeros(p.k2(), p.k1()),
    };
    pcg(p, x)
}

fn pcg<T: Scalar>(p: &EnergyProblem<T>, mut x: DMatrix<T>) -> Result<SolveReport<T>> {
    let zero = DMatrix::zeros(p.k2(), p.k1());
    // ∇E(C) = H(C) − b, so b = −∇E(0).
    let b = -gradient(p, &zero);
    let tol = T::of(CG_TOLERANCE) * (T::one() + b.norm());
    let e0 = energy_terms(p, &zero)?.weighted(&p.weights);
    let hess = |v: &DMatrix<T>| gradient(p, v) + &b;
    let precond = BlockJacobi::new(p);
    let half = T::of(0.5);
    let quad_energy = |x: &DMatrix<T>, r: &DMatrix<T>| e0 - half * (frob_dot(x, &b) + frob_dot(x, r));
    let mut r = &b - hess(&x);
    let mut trace = vec![quad_energy(&x, &r)];
    let mut z = precond.apply(&r);
    let mut dir = z.clone();
    let mut rz = frob_dot(&r, &z);
    let mut iterations = 0;
    while r.norm() > tol && iterations < CG_MAX_ITERS {
        let q = hess(&dir);
        let curvature = frob_dot(&dir, &q);
        if !(curvature > T::zero()) {
            break;
        }
        let step = rz / curvature;
        x += &dir * step;
        iterations += 1;
        if iterations % RESIDUAL_REFRESH == 0 {
            r = &b - hess(&x);
        } else {
            r -= &q * step;
        }
        trace.push(quad_energy(&x, &r));
        z = precond.apply(&r);
        let rz_new = frob_dot(&r, &z);
        dir = &z + &dir * (rz_new / rz);
        rz = rz_new;
    }
    let g = gradient(p, &x);
    let gnorm = g.norm();
    if gnorm > tol {
        return Err(Error::Solver { iterations, residual: (gnorm / (T::one() + b.norm())).as_f64() });
    }
    Ok(SolveReport {
        map: FunctionalMap::new(x)?,
        path: SolvePath::ConjugateGradient,
        iterations,
        gradient_norm: gnorm,
        tolerance: tol,
        energy_trace: trace,
    })
}

/// Descriptor-only minimizer (α1 = 1, all other terms off).
pub fn descriptor_only_solve<T: Scalar>(a1: &DMatrix<T>, a2: &DMatrix<T>) -> Result<FunctionalMap<T>> {
    if a1.ncols() != a2.ncols() {
        return Err(Error::dim(format!("A1 has {} descriptors, A2 has {}", a1.ncols(), a2.ncols())));
    }
    let mask = DMatrix::zeros(a2.nrows(), a1.nrows());
    FunctionalMap::new(decoupled(a1, a2, &mask, T::one(), T::zero()))
}

/// Relative weighting: `αᵢ = αᵢ* / Eᵢ(C_ini)` with `C_ini` the
/// descriptor-only solution. Terms that `C_ini` already satisfies keep
/// their base weight.
pub fn normalize_weights<T: Scalar>(p: &EnergyProblem<T>, base: Weights<T>) -> Result<Weights<T>> {
    if base.as_array().iter().any(|w| !(*w >= T::zero())) {
        return Err(Error::InvalidParameter(format!("base weights must be nonnegative: {base:?}")));
    }
    let c = descriptor_only_solve(&p.a1, &p.a2)?.into_matrix();
    let terms = energy_terms(p, &c)?;
    let c2 = c.norm_squared();
    let mult_scale = p
        .mult_pairs
        .iter()
        .fold(T::zero(), |acc, (d1, d2)| acc + d1.norm_squared() + d2.norm_squared());
    let refs = [
        p.a2.norm_squared(),
        mult_scale * c2,
        T::zero(),
        p.mask.weights.amax() * c2,
    ];
    let energies = [terms.desc, terms.mult, terms.orient, terms.mask];
    let floor = T::eps().sqrt();
    let out: Vec<T> = base
        .as_array()
        .iter()
        .zip(energies.iter().zip(refs.iter()))
        .map(|(&a, (&e, &r))| if e > floor * r && e > T::zero() { a / e } else { a })
        .collect();
    Ok(Weights::new(out[0], out[1], out[2], out[3]))
}

/// `‖C·diag(op1) − diag(op2)·C‖²` for real diagonal operators.
pub fn commutator_energy<T: Scalar>(c: &DMatrix<T>, op1: &[T], op2: &[T]) -> Result<T> {
    if c.shape() != (op2.len(), op1.len()) {
        return Err(Error::dim(format!("map is {:?}, operators have {} and {} values", c.shape(), op1.len(), op2.len())));
    }
    let mut acc = T::zero();
    for j in 0..op1.len() {
        for i in 0..op2.len() {
            let v = c[(i, j)] * (op1[j] - op2[i]);
            acc += v * v;
        }
    }
    Ok(acc)
}

/// Complex variant; squared moduli are summed.
pub fn commutator_energy_complex<T: Scalar>(c: &DMatrix<T>, op1: &[Complex<T>], op2: &[Complex<T>]) -> Result<T> {
    if c.shape() != (op2.len(), op1.len()) {
        return Err(Error::dim(format!("map is {:?}, operators have {} and {} values", c.shape(), op1.len(), op2.len())));
    }
    let mut acc = T::zero();
    for j in 0..op1.len() {
        for i in 0..op2.len() {
            let d = op1[j] - op2[i];
            acc += c[(i, j)] * c[(i, j)] * (d.re * d.re + d.im * d.im);
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::{mask_penalty, resolvent_mask, standard_mask};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn rand_sym(rng: &mut ChaCha8Rng, k: usize) -> DMatrix<f64> {
        let m = rand_mat(rng, k, k);
        (&m + m.transpose()) * 0.5
    }

    fn spectrum(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[0] = 0.0;
        v
    }

    fn random_problem(seed: u64, k1: usize, k2: usize, d: usize, n_mult: usize, w: Weights<f64>) -> EnergyProblem<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a1 = rand_mat(&mut rng, k1, d);
        let a2 = rand_mat(&mut rng, k2, d);
        let mask = resolvent_mask(&spectrum(&mut rng, k1), &spectrum(&mut rng, k2), 0.5, 0.5).unwrap();
        let pairs = (0..n_mult).map(|_| (rand_sym(&mut rng, k1), rand_sym(&mut rng, k2))).collect();
        EnergyProblem::new(a1, a2, mask).unwrap().with_mult_pairs(pairs).unwrap().with_weights(w).unwrap()
    }

    /// Term-by-term energy with explicit index loops.
    fn brute_energy(p: &EnergyProblem<f64>, c: &DMatrix<f64>) -> f64 {
        let (k2, k1, d) = (p.k2(), p.k1(), p.a1.ncols());
        let mut desc = 0.0;
        for i in 0..k2 {
            for s in 0..d {
                let mut v = -p.a2[(i, s)];
                for j in 0..k1 {
                    v += c[(i, j)] * p.a1[(j, s)];
                }
                desc += v * v;
            }
        }
        let mut mult = 0.0;
        for (d1, d2) in &p.mult_pairs {
            for i in 0..k2 {
                for j in 0..k1 {
                    let mut v = 0.0;
                    for l in 0..k1 {
                        v += c[(i, l)] * d1[(l, j)];
                    }
                    for l in 0..k2 {
                        v -= d2[(i, l)] * c[(l, j)];
                    }
                    mult += v * v;
                }
            }
        }
        let mut mask = 0.0;
        for i in 0..k2 {
            for j in 0..k1 {
                mask += p.mask.weights[(i, j)] * c[(i, j)] * c[(i, j)];
            }
        }
        p.weights.desc * desc + p.weights.mult * mult + p.weights.mask * mask
    }

    fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        a.kronecker(b)
    }

    #[test]
    fn energy_examples() {
        let l = [0.0, 0.4, 1.0];
        let mask = standard_mask(&l, &l).unwrap();
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let p = EnergyProblem::new(a.clone(), DMatrix::zeros(3, 2), mask.clone()).unwrap();
        assert_eq!(energy_value(&p, &FunctionalMap::zeros(3, 3)).unwrap(), 0.0);
        let p = EnergyProblem::new(a.clone(), a, mask).unwrap();
        let t = energy_terms(&p, &DMatrix::identity(3, 3)).unwrap();
        assert_eq!((t.desc, t.mask), (0.0, 0.0));
        assert!(matches!(energy_value(&p, &FunctionalMap::zeros(2, 3)), Err(Error::Dimension(_))));
    }

    #[test]
    fn energy_matches_brute_force() {
        for seed in 0..5 {
            let p = random_problem(seed, 7, 6, 9, 3, Weights::new(0.7, 0.3, 0.0, 1.3));
            let c = rand_mat(&mut ChaCha8Rng::seed_from_u64(100 + seed), 6, 7);
            let e = energy_value(&p, &FunctionalMap::new(c.clone()).unwrap()).unwrap();
            let o = brute_energy(&p, &c);
            assert!((e - o).abs() <= 1e-12 * o, "{e} vs {o}");
        }
    }

    #[test]
    fn gradient_examples() {
        let p = random_problem(3, 6, 6, 12, 0, Weights::new(1.0, 0.0, 0.0, 0.0));
        let g0 = energy_gradient(&p, &FunctionalMap::zeros(6, 6)).unwrap();
        assert!((g0 + (&p.a2 * p.a1.transpose()) * 2.0).amax() < 1e-12);
        let gram = &p.a1 * p.a1.transpose();
        let cstar = &p.a2 * p.a1.transpose() * gram.try_inverse().unwrap();
        let g = energy_gradient(&p, &FunctionalMap::new(cstar).unwrap()).unwrap();
        assert!(g.norm() < 1e-8);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let combos = [
            Weights::new(1.0, 0.0, 0.0, 0.0),
            Weights::new(0.0, 1.0, 0.0, 1.0),
            Weights::new(0.0, 0.0, 0.0, 1.0),
            Weights::new(1.0, 1.0, 0.0, 0.0),
            Weights::new(1.0, 0.0, 0.0, 1.0),
            Weights::new(0.5, 2.0, 0.0, 1.5),
        ];
        for (s, w) in combos.into_iter().enumerate() {
            let p = random_problem(10 + s as u64, 8, 8, 8, 2, w);
            let c = rand_mat(&mut ChaCha8Rng::seed_from_u64(s as u64), 8, 8);
            let g = energy_gradient(&p, &FunctionalMap::new(c.clone()).unwrap()).unwrap();
            let h = 1e-6;
            let mut fd = DMatrix::zeros(8, 8);
            for i in 0..8 {
                for j in 0..8 {
                    let (mut cp, mut cm) = (c.clone(), c.clone());
                    cp[(i, j)] += h;
                    cm[(i, j)] -= h;
                    fd[(i, j)] = (brute_energy(&p, &cp) - brute_energy(&p, &cm)) / (2.0 * h);
                }
            }
            assert!((&g - &fd).norm() <= 1e-5 * g.norm(), "combo {s}: {}", (&g - &fd).norm() / g.norm());
        }
    }

    #[test]
    fn decoupled_solve_matches_row_normal_equations() {
        let p = random_problem(21, 30, 25, 40, 0, Weights::new(0.8, 0.0, 0.0, 2.5));
        let r = solve_with_report(&p).unwrap();
        assert_eq!(r.path, SolvePath::RowDecoupled);
        for i in 0..25 {
            let mut m = &p.a1 * p.a1.transpose() * 0.8;
            for j in 0..30 {
                m[(j, j)] += 2.5 * p.mask.weights[(i, j)];
            }
            let rhs = &p.a1 * p.a2.row(i).transpose() * 0.8;
            let ci = m.lu().solve(&rhs).unwrap();
            assert!((r.map.matrix().row(i).transpose() - ci).amax() < 1e-8);
        }
        assert!(r.gradient_norm <= r.tolerance);
    }

    #[test]
    fn cg_matches_dense_normal_equations() {
        let (k, d) = (10, 14);
        let p = random_problem(33, k, k, d, 4, Weights::new(1.0, 0.6, 0.0, 1.7));
        let r = solve_with_report(&p).unwrap();
        assert_eq!(r.path, SolvePath::ConjugateGradient);
        // Column-major vec: vec(CA) = (Aᵀ⊗I)vec(C), vec(DC) = (I⊗D)vec(C).
        let id = DMatrix::<f64>::identity(k, k);
        let ad = kron(&p.a1.transpose(), &id);
        let mut h = ad.transpose() * &ad * p.weights.desc;
        let mut rhs = ad.transpose() * DVector::from_column_slice(p.a2.as_slice()) * p.weights.desc;
        for (d1, d2) in &p.mult_pairs {
            let m = kron(&d1.transpose(), &id) - kron(&id, d2);
            h += m.transpose() * &m * p.weights.mult;
        }
        for (idx, w) in p.mask.weights.iter().enumerate() {
            h[(idx, idx)] += p.weights.mask * w;
        }
        rhs *= 1.0;
        let x = h.lu().solve(&rhs).unwrap();
        let got = DVector::from_column_slice(r.map.matrix().as_slice());
        assert!((&got - &x).norm() <= 1e-7 * x.norm(), "rel {}", (&got - &x).norm() / x.norm());
    }

    #[test]
    fn cg_energy_is_monotone() {
        let p = random_problem(44, 20, 20, 30, 6, Weights::new(1.0, 0.5, 0.0, 1.0));
        let r = solve_with_report(&p).unwrap();
        assert!(r.iterations > 0);
        for w in r.energy_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{} -> {}", w[0], w[1]);
        }
        let e = energy_value(&p, &r.map).unwrap();
        assert!((e - r.energy_trace.last().unwrap()).abs() <= 1e-8 * e.max(1.0));
    }

    #[test]
    fn pure_mask_problem_gives_zero() {
        let p = random_problem(5, 8, 8, 4, 0, Weights::new(0.0, 0.0, 0.0, 1.0));
        let c = solve(&p).unwrap();
        assert_eq!(c.matrix().amax(), 0.0);
    }

    #[test]
    fn invalid_problems_are_rejected() {
        let mask = standard_mask(&[0.0, 1.0], &[0.0, 1.0]).unwrap();
        let a = DMatrix::from_element(2, 3, 1.0);
        assert!(EnergyProblem::new(a.clone(), DMatrix::zeros(2, 2), mask.clone()).is_err());
        let p = EnergyProblem::new(a.clone(), a.clone(), mask.clone()).unwrap();
        assert!(p.clone().with_weights(Weights::new(0.0, 1.0, 0.0, 0.0)).is_err());
        assert!(matches!(p.clone().with_weights(Weights::new(1.0, 0.0, 1.0, 0.0)), Err(Error::Unsupported(_))));
        assert!(p.with_mult_pairs(vec![(DMatrix::zeros(3, 3), DMatrix::zeros(2, 2))]).is_err());
    }

    struct Tikhonov(DMatrix<f64>);

    impl QuadraticTerm<f64> for Tikhonov {
        fn value(&self, c: &DMatrix<f64>) -> f64 {
            (c - &self.0).norm_squared()
        }
        fn gradient(&self, c: &DMatrix<f64>) -> DMatrix<f64> {
            (c - &self.0) * 2.0
        }
    }

    #[test]
    fn pluggable_quadratic_term() {
        let base = random_problem(8, 6, 6, 3, 0, Weights::new(1.0, 0.0, 0.0, 0.0));
        let target = DMatrix::from_fn(6, 6, |i, j| (i * 6 + j) as f64 * 0.01);
        let p = base
            .with_orient(Arc::new(Tikhonov(target)))
            .with_weights(Weights::new(1.0, 0.0, 2.0, 0.0))
            .unwrap();
        let r = solve_with_report(&p).unwrap();
        assert_eq!(r.path, SolvePath::ConjugateGradient);
        // Closed form: C (A1A1ᵀ + 2I) = A2A1ᵀ + 2·target.
        let lhs = &p.a1 * p.a1.transpose() + DMatrix::identity(6, 6) * 2.0;
        let rhs = &p.a2 * p.a1.transpose() + DMatrix::from_fn(6, 6, |i, j| (i * 6 + j) as f64 * 0.02);
        let expect = rhs * lhs.try_inverse().unwrap();
        assert!((r.map.matrix() - expect).amax() < 1e-8);
    }

    #[test]
    fn midpoint_convexity() {
        let p = random_problem(55, 8, 7, 10, 2, Weights::new(1.0, 0.4, 0.0, 0.9));
        let mut rng = ChaCha8Rng::seed_from_u64(56);
        for _ in 0..100 {
            let x = rand_mat(&mut rng, 7, 8) * 3.0;
            let y = rand_mat(&mut rng, 7, 8) * 3.0;
            let mid = (&x + &y) * 0.5;
            let e = |m: &DMatrix<f64>| energy_terms(&p, m).unwrap().weighted(&p.weights);
            assert!(e(&mid) <= 0.5 * (e(&x) + e(&y)) + 1e-12);
        }
    }

    #[test]
    fn mask_only_energy_equals_mask_penalty() {
        let p = random_problem(66, 9, 9, 5, 0, Weights::new(0.0, 0.0, 0.0, 1.0));
        let c = rand_mat(&mut ChaCha8Rng::seed_from_u64(67), 9, 9);
        let e = energy_value(&p, &FunctionalMap::new(c.clone()).unwrap()).unwrap();
        assert!((e - mask_penalty(&p.mask, &c).unwrap()).abs() <= 1e-12 * e);
    }

    #[test]
    fn weight_normalization() {
        // Identity descriptors: C_ini = I, so every term is 1 except the mask.
        let k = 4;
        let l = [0.0, 0.2, 0.5, 1.0];
        let mask = standard_mask(&l, &l).unwrap();
        let a = DMatrix::<f64>::identity(k, k);
        let p = EnergyProblem::new(a.clone(), a, mask).unwrap();
        let w = normalize_weights(&p, Weights::new(1.0, 1.0, 0.0, 3.0)).unwrap();
        // E_desc(C_ini) = 0 and E_mask(C_ini) = 0: both pass through.
        assert_eq!(w, Weights::new(1.0, 1.0, 0.0, 3.0));

        let p = random_problem(77, 6, 6, 10, 2, Weights::new(1.0, 1.0, 0.0, 1.0));
        let w = normalize_weights(&p, Weights::new(1.0, 1.0, 0.0, 1.0)).unwrap();
        let mut scaled = p.clone();
        scaled.a1 *= 10.0;
        scaled.a2 *= 10.0;
        let ws = normalize_weights(&scaled, Weights::new(1.0, 1.0, 0.0, 1.0)).unwrap();
        let c = rand_mat(&mut ChaCha8Rng::seed_from_u64(78), 6, 6);
        let t = energy_terms(&p, &c).unwrap();
        let ts = energy_terms(&scaled, &c).unwrap();
        // C_ini is unchanged, so α1·E_desc is scale-free and the other weights stay put.
        assert!((ws.desc * ts.desc - w.desc * t.desc).abs() <= 1e-10 * w.desc * t.desc);
        assert!(((ws.mask - w.mask) / w.mask).abs() < 1e-10);
        assert!(((ws.mult - w.mult) / w.mult).abs() < 1e-10);
    }

    #[test]
    fn commutator_energies() {
        let l = [0.0f64, 1.0, 2.5];
        assert_eq!(commutator_energy(&DMatrix::identity(3, 3), &l, &l).unwrap(), 0.0);
        let c: DMatrix<f64> = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0]);
        let op2 = [0.5, 4.0];
        let e = commutator_energy(&c, &l, &op2).unwrap();
        let direct = (&c * DMatrix::from_diagonal(&DVector::from_row_slice(&l))
            - DMatrix::from_diagonal(&DVector::from_row_slice(&op2)) * &c)
            .norm_squared();
        assert!((e - direct).abs() < 1e-12);
        let z1: Vec<Complex<f64>> = l.iter().map(|&v| Complex::new(v, 0.0)).collect();
        let z2: Vec<Complex<f64>> = op2.iter().map(|&v| Complex::new(v, 0.0)).collect();
        assert!((commutator_energy_complex(&c, &z1, &z2).unwrap() - e).abs() < 1e-12);
        assert!(commutator_energy(&c, &op2, &l).is_err());
    }
}
