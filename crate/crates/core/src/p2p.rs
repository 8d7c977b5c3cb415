//! Conversions between functional maps and vertex-to-vertex maps.
//!
//! A [`PointwiseMap`] `T` sends every vertex of shape 2 to a vertex of
//! shape 1. Its functional map `C` (functions on shape 1 to functions on
//! shape 2) is the pullback `f ↦ f ∘ T`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fmap::FunctionalMap;
use crate::scalar::Scalar;
use crate::spectral::SpectralDecomposition;

pub const DEFAULT_ICP_ITERATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PointwiseMap {
    targets: Vec<usize>,
    n_source: usize,
}

impl PointwiseMap {
    /// `targets[j]` is the vertex of shape 1 matched to vertex `j` of shape 2.
    pub fn new(targets: Vec<usize>, n_source: usize) -> Result<Self> {
        if let Some(&bad) = targets.iter().find(|&&t| t >= n_source) {
            return Err(Error::Index { index: bad, len: n_source });
        }
        Ok(PointwiseMap { targets, n_source })
    }

    pub fn identity(n: usize) -> Self {
        PointwiseMap { targets: (0..n).collect(), n_source: n }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Number of vertices of shape 1.
    pub fn n_source(&self) -> usize {
        self.n_source
    }

    pub fn get(&self, j: usize) -> usize {
        self.targets[j]
    }

    /// Number of `j` with `T(j) = j`.
    pub fn fixed_points(&self) -> usize {
        self.targets.iter().enumerate().filter(|(j, &t)| *j == t).count()
    }

    /// One 0-based index per line.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.targets.len() * 6);
        for t in &self.targets {
            writeln!(s, "{t}").unwrap();
        }
        s
    }

    /// Parses one index per line; `one_based` shifts every index down by one.
    pub fn parse(text: &str, n_source: usize, one_based: bool) -> Result<Self> {
        let mut targets = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let l = raw.split('#').next().unwrap_or("").trim();
            if l.is_empty() {
                continue;
            }
            let v: usize = l
                .parse()
                .map_err(|_| Error::Parse { path: None, line: i + 1, msg: format!("bad vertex index {l:?}") })?;
            let v = if one_based {
                v.checked_sub(1)
                    .ok_or_else(|| Error::Parse { path: None, line: i + 1, msg: "index 0 in a 1-based file".into() })?
            } else {
                v
            };
            targets.push(v);
        }
        PointwiseMap::new(targets, n_source)
    }
}

pub fn write_pointwise(map: &PointwiseMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, map.to_text())?;
    Ok(())
}

pub fn read_pointwise(path: impl AsRef<Path>, n_source: usize, one_based: bool) -> Result<PointwiseMap> {
    let path = path.as_ref();
    PointwiseMap::parse(&fs::read_to_string(path)?, n_source, one_based).map_err(|e| match e {
        Error::Parse { line, msg, .. } => Error::Parse { path: Some(path.to_path_buf()), line, msg },
        other => other,
    })
}

fn check_sizes<T: Scalar>(c: &DMatrix<T>, spec1: &SpectralDecomposition<T>, spec2: &SpectralDecomposition<T>) -> Result<()> {
    if c.ncols() > spec1.k() || c.nrows() > spec2.k() {
        return Err(Error::dim(format!(
            "map is {}×{}, bases have {} and {} functions",
            c.nrows(),
            c.ncols(),
            spec2.k(),
            spec1.k()
        )));
    }
    Ok(())
}

/// For each row of `query`, the index of the nearest row of `points`
/// (squared Euclidean distance, ties to the smallest index).
pub fn nearest_rows<T: Scalar>(points: &DMatrix<T>, query: &DMatrix<T>) -> Vec<usize> {
    let dim = points.ncols();
    let flat_points: Vec<T> = points.transpose().as_slice().to_vec();
    let flat_query: Vec<T> = query.transpose().as_slice().to_vec();
    (0..query.nrows())
        .into_par_iter()
        .map(|j| {
            let q = &flat_query[j * dim..(j + 1) * dim];
            let mut best = 0;
            let mut best_d = T::max_value().unwrap();
            for (i, p) in flat_points.chunks_exact(dim.max(1)).enumerate().take(points.nrows()) {
                let d = p.iter().zip(q).fold(T::zero(), |acc, (a, b)| acc + (*a - *b) * (*a - *b));
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Nearest neighbours between the rows of `Φ1 Cᵀ` and `Φ2`.
pub fn fmap_to_pointwise<T: Scalar>(
    c: &FunctionalMap<T>,
    spec1: &SpectralDecomposition<T>,
    spec2: &SpectralDecomposition<T>,
) -> Result<PointwiseMap> {
    let c = c.matrix();
    check_sizes(c, spec1, spec2)?;
    let emb1 = spec1.basis(c.ncols()) * c.transpose();
    let emb2 = spec2.basis(c.nrows()).into_owned();
    if c.nrows() == 0 {
        return PointwiseMap::new(vec![0; spec2.n_vertices()], spec1.n_vertices());
    }
    PointwiseMap::new(nearest_rows(&emb1, &emb2), spec1.n_vertices())
}

/// Pullback `C = Φ2ᵀ M2 Φ1[T, :]` in bases of sizes `k1`, `k2`.
pub fn pointwise_to_fmap<T: Scalar>(
    t: &PointwiseMap,
    spec1: &SpectralDecomposition<T>,
    spec2: &SpectralDecomposition<T>,
    k1: usize,
    k2: usize,
) -> Result<FunctionalMap<T>> {
    if t.len() != spec2.n_vertices() {
        return Err(Error::dim(format!("map covers {} vertices, shape 2 has {}", t.len(), spec2.n_vertices())));
    }
    if let Some(&bad) = t.targets().iter().find(|&&v| v >= spec1.n_vertices()) {
        return Err(Error::Index { index: bad, len: spec1.n_vertices() });
    }
    if k1 > spec1.k() || k2 > spec2.k() {
        return Err(Error::dim(format!("requested {k2}×{k1} map from bases of {} and {}", spec2.k(), spec1.k())));
    }
    let phi1 = spec1.eigenfunctions();
    let pulled = DMatrix::from_fn(t.len(), k1, |j, c| phi1[(t.get(j), c)]);
    let mut weighted = spec2.basis(k2).into_owned();
    for mut col in weighted.column_iter_mut() {
        col.component_mul_assign(spec2.mass());
    }
    FunctionalMap::new(weighted.tr_mul(&pulled))
}

/// Orthogonal factor `UVᵀ` of `m = UΣVᵀ`.
pub fn polar_orthogonal<T: Scalar>(m: DMatrix<T>) -> DMatrix<T> {
    let svd = m.svd(true, true);
    svd.u.unwrap() * svd.v_t.unwrap()
}

/// `Σⱼ ‖Φ1(T(j),:)·Cᵀ − Φ2(j,:)‖²`.
pub fn alignment_cost<T: Scalar>(
    c: &DMatrix<T>,
    t: &PointwiseMap,
    spec1: &SpectralDecomposition<T>,
    spec2: &SpectralDecomposition<T>,
) -> T {
    let phi1 = spec1.basis(c.ncols());
    let phi2 = spec2.basis(c.nrows());
    let mut total = T::zero();
    for j in 0..t.len() {
        let x = phi1.row(t.get(j)) * c.transpose();
        total += (x - phi2.row(j)).norm_squared();
    }
    total
}

#[derive(Debug, Clone)]
pub struct IcpResult<T: Scalar> {
    pub map: FunctionalMap<T>,
    pub pointwise: PointwiseMap,
    pub iterations: usize,
    /// The pointwise map stopped changing before the iteration cap.
    pub converged: bool,
    /// Set when the iteration cap was reached without convergence.
    pub warning: Option<String>,
    /// Alignment cost after every round.
    pub cost_trace: Vec<T>,
}

/// Spectral ICP: alternate nearest-neighbour matching with an orthogonal
/// Procrustes update of `C`.
pub fn icp_refine<T: Scalar>(
    c: &FunctionalMap<T>,
    spec1: &SpectralDecomposition<T>,
    spec2: &SpectralDecomposition<T>,
    iterations: usize,
) -> Result<IcpResult<T>> {
    if c.k1() != c.k2() {
        return Err(Error::dim(format!("ICP needs a square map, got {}×{}", c.k2(), c.k1())));
    }
    check_sizes(c.matrix(), spec1, spec2)?;
    let k = c.k1();
    let phi1 = spec1.basis(k);
    let phi2 = spec2.basis(k);
    let mut cur = c.matrix().clone();
    let mut t = fmap_to_pointwise(c, spec1, spec2)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut done = 0;
    for _ in 0..iterations {
        // YᵀX with X rows Φ1(T(j), :) and Y rows Φ2(j, :).
        let x = DMatrix::from_fn(t.len(), k, |j, col| phi1[(t.get(j), col)]);
        let yx = phi2.tr_mul(&x);
        cur = polar_orthogonal(yx);
        let next = fmap_to_pointwise(&FunctionalMap::new(cur.clone())?, spec1, spec2)?;
        done += 1;
        trace.push(alignment_cost(&cur, &next, spec1, spec2));
        let same = next == t;
        t = next;
        if same {
            converged = true;
            break;
        }
    }
    let warning = (!converged && iterations > 0).then(|| format!("ICP stopped at the iteration cap ({iterations}) before the map settled"));
    Ok(IcpResult { map: FunctionalMap::new(cur)?, pointwise: t, iterations: done, converged, warning, cost_trace: trace })
}
