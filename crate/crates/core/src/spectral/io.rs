//! Binary container for spectral decompositions.
//!
//! Layout (little-endian): 8-byte magic, `u64` vertex count `n`, `u64`
//! basis size `k`, `f64` source area, `k` eigenvalues, the `n×k`
//! eigenfunction matrix in row-major order, then `n` lumped masses. Values
//! are stored as `f64`, so `f64` decompositions round-trip bit-exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::SpectralDecomposition;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 8] = b"FMSPEC\0\x01";

pub fn write_spectrum<T: Scalar, W: Write>(spec: &SpectralDecomposition<T>, mut w: W) -> Result<()> {
    let (n, k) = (spec.n_vertices(), spec.k());
    let mut buf = Vec::with_capacity(32 + 8 * (k + n * k + n));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(k as u64).to_le_bytes());
    buf.extend_from_slice(&spec.source_area().as_f64().to_le_bytes());
    for v in spec.eigenvalues().iter() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    let phi = spec.eigenfunctions();
    for i in 0..n {
        for j in 0..k {
            buf.extend_from_slice(&phi[(i, j)].as_f64().to_le_bytes());
        }
    }
    for m in spec.mass().iter() {
        buf.extend_from_slice(&m.as_f64().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_spectrum<T: Scalar, R: Read>(mut r: R) -> Result<SpectralDecomposition<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 32 || &bytes[..8] != MAGIC {
        return Err(Error::Format("not a spectral decomposition file".into()));
    }
    let word = |i: usize| -> [u8; 8] { bytes[i..i + 8].try_into().unwrap() };
    let n = u64::from_le_bytes(word(8)) as usize;
    let k = u64::from_le_bytes(word(16)) as usize;
    let area = f64::from_le_bytes(word(24));
    let expected = n
        .checked_mul(k)
        .and_then(|nk| nk.checked_add(n + k))
        .and_then(|c| c.checked_mul(8))
        .and_then(|c| c.checked_add(32));
    if expected != Some(bytes.len()) {
        return Err(Error::Format(format!(
            "spectral file has {} bytes, header declares n = {n}, k = {k}",
            bytes.len()
        )));
    }
    let mut pos = 32;
    let mut next = || {
        let v = f64::from_le_bytes(word(pos));
        pos += 8;
        T::of(v)
    };
    let eigenvalues = DVector::from_fn(k, |_, _| next());
    let eigenfunctions = DMatrix::from_row_iterator(n, k, (0..n * k).map(|_| next()));
    let mass = DVector::from_fn(n, |_, _| next());
    let mut spec = SpectralDecomposition::from_parts(eigenvalues, eigenfunctions, mass)?;
    spec.source_area = T::of(area);
    Ok(spec)
}

pub fn write_spectrum_file<T: Scalar>(spec: &SpectralDecomposition<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_spectrum(spec, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_spectrum_file<T: Scalar>(path: impl AsRef<Path>) -> Result<SpectralDecomposition<T>> {
    read_spectrum(fs::File::open(path)?)
}
