//! Penalty masks `M` for the energy `Σ M_ij C_ij²`.
//!
//! All spectral masks take `Λ1` (columns, source shape) and `Λ2` (rows,
//! target shape) and produce a `k2 × k1` matrix.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskKind {
    Standard,
    Slanted,
    Resolvent,
    Heat,
    Custom,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::Standard => "standard",
            MaskKind::Slanted => "slanted",
            MaskKind::Resolvent => "resolvent",
            MaskKind::Heat => "heat",
            MaskKind::Custom => "custom",
        }
    }
}

/// Parameters a mask was built with; unused fields stay `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaskParams {
    pub gamma: Option<f64>,
    pub w: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub t: Option<f64>,
    pub eta: Option<f64>,
    pub estimated_rank: Option<usize>,
    pub frobenius_normalized: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mask<T: Scalar> {
    pub weights: DMatrix<T>,
    pub kind: MaskKind,
    pub params: MaskParams,
}

impl<T: Scalar> Mask<T> {
    pub fn custom(weights: DMatrix<T>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidParameter("mask weights must be finite and nonnegative".into()));
        }
        Ok(Mask { weights, kind: MaskKind::Custom, params: MaskParams::default() })
    }

    pub fn k1(&self) -> usize {
        self.weights.ncols()
    }

    pub fn k2(&self) -> usize {
        self.weights.nrows()
    }

    /// Copy scaled to unit Frobenius norm (unchanged if all weights are zero).
    pub fn frobenius_normalized(&self) -> Self {
        let norm = self.weights.norm();
        let mut out = self.clone();
        if norm > T::zero() {
            out.weights /= norm;
        }
        out.params.frobenius_normalized = true;
        out
    }
}

fn check_nonnegative<T: Scalar>(name: &str, l: &[T]) -> Result<()> {
    match l.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
        Some(v) => Err(Error::InvalidParameter(format!("{name} contains {v}, expected finite nonnegative eigenvalues"))),
        None => Ok(()),
    }
}

fn check_rescaled<T: Scalar>(l1: &[T], l2: &[T]) -> Result<()> {
    check_nonnegative("Λ1", l1)?;
    check_nonnegative("Λ2", l2)?;
    let max = l1.iter().chain(l2).copied().fold(T::zero(), T::max);
    if max > T::one() + T::of(1e-12) {
        return Err(Error::NotRescaled { max: max.as_f64() });
    }
    Ok(())
}

/// `(Λ2[i] − Λ1[j])²`.
pub fn standard_mask<T: Scalar>(l1: &[T], l2: &[T]) -> Result<Mask<T>> {
    check_nonnegative("Λ1", l1)?;
    check_nonnegative("Λ2", l2)?;
    let weights = DMatrix::from_fn(l2.len(), l1.len(), |i, j| (l2[i] - l1[j]).powi(2));
    Ok(Mask { weights, kind: MaskKind::Standard, params: MaskParams::default() })
}

/// Slanted diagonal penalty with 1-based indices: zero along the line
/// through `(1, 1)` with direction `(1, r/k2)`, growing with the distance to
/// it and damped by `exp(−η‖(i, j)‖)`.
pub fn slanted_mask<T: Scalar>(k1: usize, k2: usize, estimated_rank: usize, eta: f64) -> Result<Mask<T>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("η must be positive, got {eta}")));
    }
    if estimated_rank < 1 || estimated_rank > k1 {
        return Err(Error::InvalidParameter(format!("estimated rank {estimated_rank} outside 1..={k1}")));
    }
    let slope = estimated_rank as f64 / k2 as f64;
    let norm = (1.0 + slope * slope).sqrt();
    let (nx, ny) = (1.0 / norm, slope / norm);
    let weights = DMatrix::from_fn(k2, k1, |r, c| {
        let (i, j) = ((r + 1) as f64, (c + 1) as f64);
        let cross = (nx * (j - 1.0) - ny * (i - 1.0)).abs();
        T::of((-eta * (i * i + j * j).sqrt()).exp() * cross)
    });
    let params = MaskParams { eta: Some(eta), estimated_rank: Some(estimated_rank), ..Default::default() };
    Ok(Mask { weights, kind: MaskKind::Slanted, params })
}

fn check_resolvent_point<T: Scalar>(gamma: T, a: T, b: T) -> Result<()> {
    if !(gamma > T::zero()) {
        return Err(Error::InvalidParameter(format!("γ must be positive, got {gamma}")));
    }
    if b == T::zero() && a >= T::zero() {
        return Err(Error::InvalidResolventPoint { re: a.as_f64(), im: b.as_f64() });
    }
    Ok(())
}

fn resolvent_value<T: Scalar>(lambda: T, gamma: T, a: T, b: T) -> Complex<T> {
    let x = lambda.powf(gamma) - a;
    let d = x * x + b * b;
    Complex::new(x / d, b / d)
}

/// Eigenvalues `1/(λ^γ − μ)` of the resolvent at `μ = a + ib`.
pub fn resolvent_eigenvalues<T: Scalar>(l: &[T], gamma: T, a: T, b: T) -> Result<Vec<Complex<T>>> {
    check_resolvent_point(gamma, a, b)?;
    check_nonnegative("Λ", l)?;
    Ok(l.iter().map(|&v| resolvent_value(v, gamma, a, b)).collect())
}

/// Real and imaginary component masks `(M_Re, M_Im)`, signed.
pub fn resolvent_components<T: Scalar>(l1: &[T], l2: &[T], gamma: T, a: T, b: T) -> Result<(DMatrix<T>, DMatrix<T>)> {
    check_rescaled(l1, l2)?;
    let r1 = resolvent_eigenvalues(l1, gamma, a, b)?;
    let r2 = resolvent_eigenvalues(l2, gamma, a, b)?;
    let re = DMatrix::from_fn(l2.len(), l1.len(), |i, j| r2[i].re - r1[j].re);
    let im = DMatrix::from_fn(l2.len(), l1.len(), |i, j| r2[i].im - r1[j].im);
    Ok((re, im))
}

/// Resolvent mask at `μ = a + ib`: `2(w·M_Im² + (1 − w)·M_Re²)`.
pub fn resolvent_mask_at<T: Scalar>(l1: &[T], l2: &[T], gamma: T, w: T, a: T, b: T) -> Result<Mask<T>> {
    if !(w >= T::zero() && w <= T::one()) {
        return Err(Error::InvalidParameter(format!("w must lie in [0, 1], got {w}")));
    }
    let (re, im) = resolvent_components(l1, l2, gamma, a, b)?;
    let two = T::of(2.0);
    let weights = re.zip_map(&im, |r, i| two * (w * i * i + (T::one() - w) * r * r));
    let params = MaskParams {
        gamma: Some(gamma.as_f64()),
        w: Some(w.as_f64()),
        a: Some(a.as_f64()),
        b: Some(b.as_f64()),
        ..Default::default()
    };
    Ok(Mask { weights, kind: MaskKind::Resolvent, params })
}

/// Resolvent mask at `μ = i`.
pub fn resolvent_mask<T: Scalar>(l1: &[T], l2: &[T], gamma: T, w: T) -> Result<Mask<T>> {
    resolvent_mask_at(l1, l2, gamma, w, T::zero(), T::one())
}

/// `(exp(−TΛ2[i]) − exp(−TΛ1[j]))²`.
pub fn heat_mask<T: Scalar>(l1: &[T], l2: &[T], t: T) -> Result<Mask<T>> {
    if !(t > T::zero()) {
        return Err(Error::InvalidParameter(format!("T must be positive, got {t}")));
    }
    check_nonnegative("Λ1", l1)?;
    check_nonnegative("Λ2", l2)?;
    let h1: Vec<T> = l1.iter().map(|&v| (-t * v).exp()).collect();
    let h2: Vec<T> = l2.iter().map(|&v| (-t * v).exp()).collect();
    let weights = DMatrix::from_fn(l2.len(), l1.len(), |i, j| (h2[i] - h1[j]).powi(2));
    let params = MaskParams { t: Some(t.as_f64()), ..Default::default() };
    Ok(Mask { weights, kind: MaskKind::Heat, params })
}

/// `Σ M_ij C_ij²`.
pub fn mask_penalty<T: Scalar>(mask: &Mask<T>, c: &DMatrix<T>) -> Result<T> {
    weighted_penalty(&mask.weights, c)
}

pub(crate) fn weighted_penalty<T: Scalar>(weights: &DMatrix<T>, c: &DMatrix<T>) -> Result<T> {
    if weights.shape() != c.shape() {
        return Err(Error::dim(format!("mask is {:?}, map is {:?}", weights.shape(), c.shape())));
    }
    Ok(weights.iter().zip(c.iter()).fold(T::zero(), |acc, (w, x)| acc + *w * *x * *x))
}
