//! Wave kernel signatures, their reduced-basis coefficients and
//! multiplication operators.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::SpectralDecomposition;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Wks,
    LandmarkWks,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorParams {
    pub n_energies: usize,
    pub sigma_scale: f64,
    pub landmarks: Vec<usize>,
}

/// `n_vertices × d` matrix of pointwise descriptors, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet<T: Scalar> {
    pub values: DMatrix<T>,
    pub kind: DescriptorKind,
    pub params: Option<DescriptorParams>,
}

impl<T: Scalar> DescriptorSet<T> {
    pub fn custom(values: DMatrix<T>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("descriptor values must be finite".into()));
        }
        Ok(DescriptorSet { values, kind: DescriptorKind::Custom, params: None })
    }

    pub fn n_vertices(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Scales every column to unit norm in the mass-weighted inner product.
    /// Columns that vanish identically are left as zero.
    pub fn normalized(&self, mass: &DVector<T>) -> Result<Self> {
        if mass.len() != self.n_vertices() {
            return Err(Error::dim(format!("mass has {} entries, descriptors {} rows", mass.len(), self.n_vertices())));
        }
        let mut out = self.clone();
        for mut col in out.values.column_iter_mut() {
            let norm = col.iter().zip(mass.iter()).fold(T::zero(), |acc, (v, m)| acc + *v * *v * *m).sqrt();
            if norm > T::zero() {
                col /= norm;
            }
        }
        Ok(out)
    }

    /// Keeps `d` columns at uniformly spaced indices (first and last included).
    pub fn subsample(&self, d: usize) -> Result<Self> {
        let total = self.dim();
        if d > total {
            return Err(Error::dim(format!("cannot pick {d} of {total} descriptors")));
        }
        let idx = uniform_indices(total, d);
        let values = DMatrix::from_fn(self.n_vertices(), d, |r, c| self.values[(r, idx[c])]);
        Ok(DescriptorSet { values, kind: self.kind, params: self.params.clone() })
    }

    /// Horizontal concatenation.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.n_vertices() != self.n_vertices() {
            return Err(Error::dim("descriptor sets have different vertex counts"));
        }
        let (n, d1, d2) = (self.n_vertices(), self.dim(), other.dim());
        let values = DMatrix::from_fn(n, d1 + d2, |r, c| {
            if c < d1 {
                self.values[(r, c)]
            } else {
                other.values[(r, c - d1)]
            }
        });
        let kind = if self.kind == other.kind { self.kind } else { DescriptorKind::Custom };
        Ok(DescriptorSet { values, kind, params: None })
    }
}

/// `d` indices spread evenly over `0..total`.
pub fn uniform_indices(total: usize, d: usize) -> Vec<usize> {
    match d {
        0 => Vec::new(),
        1 => vec![(total - 1) / 2],
        _ => (0..d).map(|j| ((j * (total - 1)) as f64 / (d - 1) as f64).round() as usize).collect(),
    }
}

/// Log-energy grid and per-energy normalized Gaussian weights over the
/// nonzero part of the spectrum. Returns `(first_nonzero_index, weights)`
/// with `weights` of shape `n_nonzero × n_energies`.
fn wks_filters<T: Scalar>(spec: &SpectralDecomposition<T>, n_energies: usize, sigma_scale: f64) -> Result<(usize, DMatrix<T>)> {
    if n_energies == 0 {
        return Err(Error::InvalidParameter("n_energies must be at least 1".into()));
    }
    if !(sigma_scale > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma_scale must be positive, got {sigma_scale}")));
    }
    let evals = spec.eigenvalues();
    let k = evals.len();
    let top = evals.iter().copied().fold(T::zero(), T::max);
    let cut = T::of(1e-8) * top;
    let first = evals.iter().position(|&v| v > cut).unwrap_or(k);
    let logs: Vec<T> = evals.iter().skip(first).map(|v| v.ln()).collect();
    if logs.len() < 2 {
        return Err(Error::DegenerateSpectrum(format!("WKS needs two nonzero eigenvalues, found {}", logs.len())));
    }
    let (lo, hi) = (logs[0], logs[logs.len() - 1]);
    if !(hi > lo) {
        return Err(Error::DegenerateSpectrum("nonzero eigenvalues span no log-energy range".into()));
    }
    let sigma = T::of(sigma_scale) * (hi - lo) / T::of_usize(n_energies);
    let (e0, e1) = (lo + sigma * T::of(2.0), hi - sigma * T::of(2.0));
    let two_var = sigma * sigma * T::of(2.0);
    let mut w = DMatrix::zeros(logs.len(), n_energies);
    for j in 0..n_energies {
        let e = if n_energies == 1 { (e0 + e1) * T::of(0.5) } else { e0 + (e1 - e0) * T::of_usize(j) / T::of_usize(n_energies - 1) };
        let expo: Vec<T> = logs.iter().map(|&l| -(e - l) * (e - l) / two_var).collect();
        let peak = expo.iter().copied().fold(T::min_value().unwrap(), T::max);
        let mut total = T::zero();
        for (i, x) in expo.iter().enumerate() {
            let g = (*x - peak).exp();
            w[(i, j)] = g;
            total += g;
        }
        for i in 0..logs.len() {
            w[(i, j)] /= total;
        }
    }
    Ok((first, w))
}

/// Wave kernel signature with `n_energies` log-spaced energies.
pub fn wks<T: Scalar>(spec: &SpectralDecomposition<T>, n_energies: usize, sigma_scale: f64) -> Result<DescriptorSet<T>> {
    let (first, w) = wks_filters(spec, n_energies, sigma_scale)?;
    let nz = w.nrows();
    let phi2 = spec.eigenfunctions().columns(first, nz).map(|v| v * v);
    Ok(DescriptorSet {
        values: phi2 * w,
        kind: DescriptorKind::Wks,
        params: Some(DescriptorParams { n_energies, sigma_scale, landmarks: Vec::new() }),
    })
}

/// Landmark-anchored WKS: for each landmark `ℓ`, `Σ φ(x)φ(ℓ) g(e)` over
/// the same energy grid as [`wks`]. Columns are grouped by landmark.
pub fn landmark_wks<T: Scalar>(
    spec: &SpectralDecomposition<T>,
    landmarks: &[usize],
    n_energies: usize,
    sigma_scale: f64,
) -> Result<DescriptorSet<T>> {
    let n = spec.n_vertices();
    if let Some(&bad) = landmarks.iter().find(|&&l| l >= n) {
        return Err(Error::Index { index: bad, len: n });
    }
    let params = Some(DescriptorParams { n_energies, sigma_scale, landmarks: landmarks.to_vec() });
    if landmarks.is_empty() {
        return Ok(DescriptorSet { values: DMatrix::zeros(n, 0), kind: DescriptorKind::LandmarkWks, params });
    }
    let (first, w) = wks_filters(spec, n_energies, sigma_scale)?;
    let phi = spec.eigenfunctions().columns(first, w.nrows());
    let mut values = DMatrix::zeros(n, landmarks.len() * n_energies);
    for (li, &l) in landmarks.iter().enumerate() {
        let scaled = DMatrix::from_fn(w.nrows(), n_energies, |r, c| w[(r, c)] * phi[(l, r)]);
        values.columns_mut(li * n_energies, n_energies).copy_from(&(phi * scaled));
    }
    Ok(DescriptorSet { values, kind: DescriptorKind::LandmarkWks, params })
}

/// Basis coefficients `A = ΦᵀM F`, shape `k × d`.
pub fn project<T: Scalar>(spec: &SpectralDecomposition<T>, descriptors: &DescriptorSet<T>) -> Result<DMatrix<T>> {
    project_values(spec, &descriptors.values)
}

pub fn project_values<T: Scalar>(spec: &SpectralDecomposition<T>, values: &DMatrix<T>) -> Result<DMatrix<T>> {
    if values.nrows() != spec.n_vertices() {
        return Err(Error::dim(format!("{} descriptor rows for a {}-vertex basis", values.nrows(), spec.n_vertices())));
    }
    let mut mf = values.clone();
    for mut col in mf.column_iter_mut() {
        col.component_mul_assign(spec.mass());
    }
    Ok(spec.eigenfunctions().tr_mul(&mf))
}

/// Function values `Φ A` reconstructed from coefficients.
pub fn reconstruct<T: Scalar>(spec: &SpectralDecomposition<T>, coeffs: &DMatrix<T>) -> Result<DMatrix<T>> {
    if coeffs.nrows() != spec.k() {
        return Err(Error::dim(format!("{} coefficient rows for a {}-function basis", coeffs.nrows(), spec.k())));
    }
    Ok(spec.eigenfunctions() * coeffs)
}

/// Reduced multiplication operator `ΦᵀM diag(f) Φ`.
pub fn mult_operator<T: Scalar>(spec: &SpectralDecomposition<T>, f: &DVector<T>) -> Result<DMatrix<T>> {
    if f.len() != spec.n_vertices() {
        return Err(Error::dim(format!("descriptor has {} values, mesh {} vertices", f.len(), spec.n_vertices())));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("descriptor values must be finite".into()));
    }
    let phi = spec.eigenfunctions();
    let weight = spec.mass().component_mul(f);
    let mut wphi = phi.clone();
    for mut col in wphi.column_iter_mut() {
        col.component_mul_assign(&weight);
    }
    let d = phi.tr_mul(&wphi);
    Ok((&d + d.transpose()) * T::of(0.5))
}

/// Writes one whitespace-separated row per vertex.
pub fn write_descriptors<T: Scalar>(set: &DescriptorSet<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    for row in set.values.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{:e}", v.as_f64())).collect();
        writeln!(out, "{}", line.join(" ")).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a delimited text matrix (whitespace or comma separated, `#`
/// comments) as a custom descriptor set.
pub fn read_descriptors<T: Scalar>(path: impl AsRef<Path>) -> Result<DescriptorSet<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let rows = crate::export::parse_matrix_text(&text).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse { path: Some(path.to_path_buf()), line, msg },
        other => other,
    })?;
    DescriptorSet::custom(rows.map(T::of))
}
