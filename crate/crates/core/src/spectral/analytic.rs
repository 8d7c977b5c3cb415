//! Closed-form spectra and the scalar series built on them.

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalyticSurface {
    Sphere,
    FlatSquareTorus,
}

/// Exact Laplace–Beltrami eigenvalues of a round sphere or flat square torus.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSpectrum<T: Scalar> {
    pub eigenvalues: Vec<T>,
    pub surface: AnalyticSurface,
    pub area: T,
}

fn check_args<T: Scalar>(k: usize, area: T) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(area > T::zero()) {
        return Err(Error::InvalidParameter(format!("area must be positive, got {area}")));
    }
    Ok(())
}

/// First `k` eigenvalues of the round sphere of the given area:
/// `(4π / area)·l(l+1)` with multiplicity `2l + 1`.
pub fn sphere_spectrum<T: Scalar>(k: usize, area: T) -> Result<AnalyticSpectrum<T>> {
    check_args(k, area)?;
    let scale = T::of(4.0) * T::pi() / area;
    let mut eigenvalues = Vec::with_capacity(k);
    let mut l = 0usize;
    while eigenvalues.len() < k {
        let value = scale * T::of_usize(l * (l + 1));
        let mult = (2 * l + 1).min(k - eigenvalues.len());
        eigenvalues.extend(std::iter::repeat_n(value, mult));
        l += 1;
    }
    Ok(AnalyticSpectrum { eigenvalues, surface: AnalyticSurface::Sphere, area })
}

/// First `k` eigenvalues of the flat square torus of the given area:
/// `(4π² / area)·(m² + n²)` over all integer pairs.
///
/// Lattice points are enumerated inside a disc whose radius grows until at
/// least `k` of them are found; every value inside the disc is present, so
/// sorting and truncating is exact.
pub fn torus_spectrum<T: Scalar>(k: usize, area: T) -> Result<AnalyticSpectrum<T>> {
    check_args(k, area)?;
    let mut radius = ((k as f64 / std::f64::consts::PI).sqrt().ceil() as i64).max(1);
    let norms = loop {
        let r2 = radius * radius;
        let mut norms: Vec<i64> = (-radius..=radius)
            .flat_map(|m| (-radius..=radius).map(move |n| m * m + n * n))
            .filter(|&q| q <= r2)
            .collect();
        if norms.len() >= k {
            norms.sort_unstable();
            norms.truncate(k);
            break norms;
        }
        radius += 1;
    };
    let scale = T::of(4.0) * T::pi() * T::pi() / area;
    let eigenvalues = norms.into_iter().map(|q| scale * T::of(q as f64)).collect();
    Ok(AnalyticSpectrum { eigenvalues, surface: AnalyticSurface::FlatSquareTorus, area })
}

/// Weyl's asymptotic estimate `(4π / area)·k` of the k-th eigenvalue.
pub fn weyl_estimate<T: Scalar>(k: usize, area: T) -> Result<T> {
    check_args(k, area)?;
    Ok(T::of(4.0) * T::pi() / area * T::of_usize(k))
}

/// Divides both spectra by their common maximum so the largest value is 1.
pub fn rescale_spectra<T: Scalar>(l1: &[T], l2: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if l1.is_empty() || l2.is_empty() {
        return Err(Error::InvalidParameter("spectra must be nonempty".into()));
    }
    if l1.iter().chain(l2).any(|v| !(*v >= T::zero()) || !v.is_finite()) {
        return Err(Error::InvalidParameter("spectra must be finite and nonnegative".into()));
    }
    let max = l1.iter().chain(l2).fold(T::zero(), |a, &b| a.max(b));
    if max == T::zero() {
        return Err(Error::DegenerateSpectrum("both spectra are identically zero".into()));
    }
    Ok((l1.iter().map(|&v| v / max).collect(), l2.iter().map(|&v| v / max).collect()))
}

/// Partial Hilbert–Schmidt sum `Σ_{n<k} 1 / |Λ[n]^γ − μ|²` of the resolvent
/// of `Δ^γ`.
pub fn hs_partial_sum<T: Scalar>(eigenvalues: &[T], gamma: T, mu: Complex<T>, k: usize) -> Result<T> {
    if !(gamma > T::zero()) {
        return Err(Error::InvalidParameter(format!("gamma must be positive, got {gamma}")));
    }
    if mu.im == T::zero() && mu.re >= T::zero() {
        return Err(Error::InvalidResolventPoint { re: mu.re.as_f64(), im: mu.im.as_f64() });
    }
    if k > eigenvalues.len() {
        return Err(Error::dim(format!("k = {k} exceeds spectrum length {}", eigenvalues.len())));
    }
    Ok(eigenvalues[..k].iter().fold(T::zero(), |acc, &lambda| {
        let z = Complex::new(lambda.powf(gamma) - mu.re, -mu.im);
        acc + T::one() / z.norm_sqr()
    }))
}
