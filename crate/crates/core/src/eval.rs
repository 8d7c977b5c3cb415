//! Geodesic error measures and the mask-penalty/error correlation study.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::masks::{mask_penalty, Mask};
use crate::mesh::TriangleMesh;
use crate::p2p::{fmap_to_pointwise, pointwise_to_fmap, PointwiseMap};
use crate::scalar::{cmp, Scalar};
use crate::spectral::SpectralDecomposition;

/// Normalized geodesic distance between two vertices of one shape.
pub trait GeodesicProvider<T: Scalar>: Sync {
    fn n_vertices(&self) -> usize;
    fn distance(&self, u: usize, v: usize) -> Result<T>;
}

/// Edge-graph shortest-path distances from a set of sources, divided by
/// `√area`.
#[derive(Debug, Clone)]
pub struct GeodesicTable<T: Scalar> {
    sources: Vec<usize>,
    row_of: HashMap<usize, usize>,
    distances: Vec<Vec<T>>,
    normalization: T,
}

#[derive(PartialEq)]
struct Entry<T: Scalar>(T, usize);

impl<T: Scalar> Eq for Entry<T> {}

impl<T: Scalar> PartialOrd for Entry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Entry<T> {
    // Reversed so that BinaryHeap pops the smallest distance.
    fn cmp(&self, other: &Self) -> Ordering {
        cmp(&other.0, &self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Unnormalized Dijkstra distances from `source`.
pub fn dijkstra<T: Scalar>(adjacency: &[Vec<(usize, T)>], source: usize) -> Vec<T> {
    let inf = T::max_value().unwrap();
    let mut dist = vec![inf; adjacency.len()];
    dist[source] = T::zero();
    let mut heap = BinaryHeap::new();
    heap.push(Entry(T::zero(), source));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adjacency[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

/// Distances from each vertex in `sources`, computed in parallel.
pub fn geodesic_distances<T: Scalar>(mesh: &TriangleMesh<T>, sources: &[usize]) -> Result<GeodesicTable<T>> {
    let n = mesh.n_vertices();
    if let Some(&bad) = sources.iter().find(|&&s| s >= n) {
        return Err(Error::Index { index: bad, len: n });
    }
    let adj = mesh.adjacency();
    let normalization = mesh.surface_area().sqrt();
    let distances: Vec<Vec<T>> = sources
        .par_iter()
        .map(|&s| dijkstra(&adj, s).into_iter().map(|d| d / normalization).collect())
        .collect();
    let row_of = sources.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    Ok(GeodesicTable { sources: sources.to_vec(), row_of, distances, normalization })
}

/// Distances between all vertex pairs.
pub fn all_pairs_geodesics<T: Scalar>(mesh: &TriangleMesh<T>) -> GeodesicTable<T> {
    let all: Vec<usize> = (0..mesh.n_vertices()).collect();
    geodesic_distances(mesh, &all).expect("all indices are in range")
}

impl<T: Scalar> GeodesicTable<T> {
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    /// `√area` of the mesh; multiply a stored distance by it to recover length units.
    pub fn normalization(&self) -> T {
        self.normalization
    }

    /// Normalized distances from `source`, if it is one of the sources.
    pub fn from_source(&self, source: usize) -> Option<&[T]> {
        self.row_of.get(&source).map(|&r| self.distances[r].as_slice())
    }
}

impl<T: Scalar> GeodesicProvider<T> for GeodesicTable<T> {
    fn n_vertices(&self) -> usize {
        self.distances.first().map_or(0, Vec::len)
    }

    fn distance(&self, u: usize, v: usize) -> Result<T> {
        let n = self.n_vertices();
        for (a, b) in [(u, v), (v, u)] {
            if b >= n {
                return Err(Error::Index { index: b, len: n });
            }
            if let Some(row) = self.from_source(a) {
                return Ok(row[b]);
            }
        }
        Err(Error::InvalidParameter(format!("neither {u} nor {v} is a source of this geodesic table")))
    }
}

/// Per-vertex error `min(d(T(j), gt(j)), d(T(j), sym(j)))` and its mean.
pub fn per_vertex_error<T: Scalar>(
    t: &PointwiseMap,
    gt_direct: &PointwiseMap,
    gt_symmetric: Option<&PointwiseMap>,
    geo: &dyn GeodesicProvider<T>,
) -> Result<(Vec<T>, T)> {
    let n = t.len();
    if gt_direct.len() != n || gt_symmetric.is_some_and(|s| s.len() != n) {
        return Err(Error::dim("maps must be defined on the same shape"));
    }
    let errs = (0..n)
        .into_par_iter()
        .map(|j| {
            let d = geo.distance(t.get(j), gt_direct.get(j))?;
            match gt_symmetric {
                Some(s) => Ok(d.min(geo.distance(t.get(j), s.get(j))?)),
                None => Ok(d),
            }
        })
        .collect::<Result<Vec<T>>>()?;
    let mean = if n == 0 { T::zero() } else { errs.iter().copied().fold(T::zero(), |a, b| a + b) / T::of_usize(n) };
    Ok((errs, mean))
}

/// Error to the direct ground truth only.
pub fn direct_error<T: Scalar>(t: &PointwiseMap, gt_direct: &PointwiseMap, geo: &dyn GeodesicProvider<T>) -> Result<(Vec<T>, T)> {
    per_vertex_error(t, gt_direct, None, geo)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dim(format!("samples of length {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidParameter("need at least two samples".into()));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidParameter("a sample is constant; correlation undefined".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

/// Which pointwise map the error column of the correlation study measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorSource {
    /// The map recovered from the sampled functional map by nearest neighbours.
    Recovered,
    /// The rewired pointwise map the functional map was built from.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub sample: usize,
    pub noise: f64,
    pub mask: String,
    pub penalty: f64,
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct CorrelationConfig {
    pub n_samples: usize,
    pub noise_levels: Vec<f64>,
    pub seed: u64,
    pub error_source: ErrorSource,
}

/// Rewires `round(noise·n)` distinct correspondences of `gt` to uniformly
/// random vertices of shape 1.
pub fn rewire(gt: &PointwiseMap, noise: f64, rng: &mut ChaCha8Rng) -> PointwiseMap {
    let n = gt.len();
    let count = ((noise.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut targets = gt.targets().to_vec();
    for j in sample(rng, n, count) {
        targets[j] = rng.random_range(0..gt.n_source());
    }
    PointwiseMap::new(targets, gt.n_source()).expect("targets drawn in range")
}

/// Samples maps of varying quality by rewiring `gt`, normalizes each
/// functional map to unit Frobenius norm and records every mask's penalty
/// next to the map's mean direct geodesic error.
///
/// Sample `s` uses noise level `noise_levels[s % len]` and its own RNG
/// stream, so the table does not depend on thread scheduling.
pub fn correlation_experiment<T: Scalar>(
    spec1: &SpectralDecomposition<T>,
    spec2: &SpectralDecomposition<T>,
    gt: &PointwiseMap,
    masks: &[Mask<T>],
    config: &CorrelationConfig,
    geo: &dyn GeodesicProvider<T>,
) -> Result<Vec<CorrelationRow>> {
    let (k2, k1) = match masks.first() {
        Some(m) => m.weights.shape(),
        None => return Ok(Vec::new()),
    };
    if masks.iter().any(|m| m.weights.shape() != (k2, k1)) {
        return Err(Error::dim("all masks must have the same shape"));
    }
    if config.noise_levels.is_empty() {
        return Err(Error::InvalidParameter("at least one noise level is required".into()));
    }
    if gt.len() != spec2.n_vertices() || gt.n_source() != spec1.n_vertices() {
        return Err(Error::dim("ground truth does not match the spectral decompositions"));
    }
    let per_sample = (0..config.n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(s as u64);
            let noise = config.noise_levels[s % config.noise_levels.len()];
            let sampled = rewire(gt, noise, &mut rng);
            let c = pointwise_to_fmap(&sampled, spec1, spec2, k1, k2)?;
            let norm = c.matrix().norm();
            let c = if norm > T::zero() { crate::fmap::FunctionalMap::new(c.matrix() / norm)? } else { c };
            let evaluated = match config.error_source {
                ErrorSource::Sampled => sampled,
                ErrorSource::Recovered => fmap_to_pointwise(&c, spec1, spec2)?,
            };
            let (_, err) = direct_error(&evaluated, gt, geo)?;
            masks
                .iter()
                .map(|m| {
                    Ok(CorrelationRow {
                        sample: s,
                        noise,
                        mask: m.kind.name().to_string(),
                        penalty: mask_penalty(m, c.matrix())?.as_f64(),
                        error: err.as_f64(),
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}

/// Spearman correlation between penalty and error for rows of one mask kind.
pub fn penalty_error_correlation(rows: &[CorrelationRow], mask: &str) -> Result<f64> {
    let (p, e): (Vec<f64>, Vec<f64>) = rows.iter().filter(|r| r.mask == mask).map(|r| (r.penalty, r.error)).unzip();
    spearman(&p, &e)
}

/// Tab-separated table with a header line.
pub fn correlation_table_text(rows: &[CorrelationRow]) -> String {
    let mut s = String::from("sample\tnoise\tmask\tpenalty\terror\n");
    for r in rows {
        s.push_str(&format!("{}\t{:.16e}\t{}\t{:.16e}\t{:.16e}\n", r.sample, r.noise, r.mask, r.penalty, r.error));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::primitives::{bumpy_icosphere, icosphere};
    use nalgebra::Point3;

    fn chain() -> TriangleMesh<f64> {
        // A strip of triangles whose bottom vertices form a straight chain.
        let mut v = Vec::new();
        for i in 0..5 {
            v.push(Point3::new(i as f64, 0.0, 0.0));
            v.push(Point3::new(i as f64 + 0.5, 10.0, 0.0));
        }
        let mut f = Vec::new();
        for i in 0..4 {
            f.push([2 * i, 2 * i + 2, 2 * i + 1]);
            f.push([2 * i + 1, 2 * i + 2, 2 * i + 3]);
        }
        TriangleMesh::new(v, f).unwrap()
    }

    #[test]
    fn dijkstra_basics() {
        let m = chain();
        let g = geodesic_distances(&m, &[0]).unwrap();
        let s = g.normalization();
        assert_eq!(g.distance(0, 0).unwrap(), 0.0);
        assert!((g.distance(0, 8).unwrap() * s - 4.0).abs() < 1e-12);
        assert!(matches!(geodesic_distances(&m, &[99]), Err(Error::Index { .. })));
        assert!(g.distance(3, 5).is_err());
    }

    #[test]
    fn geodesics_are_symmetric_and_close_to_great_circles() {
        let mesh = icosphere::<f64>(3);
        let g = all_pairs_geodesics(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = mesh.n_vertices();
        let s = g.normalization();
        for _ in 0..50 {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            let (a, b) = (g.distance(u, v).unwrap(), g.distance(v, u).unwrap());
            assert!((a - b).abs() <= 1e-14 * a.max(1.0));
        }
        // Paths along a triangle lattice overshoot by up to 2/√3 per pair.
        let mut ratios = Vec::new();
        while ratios.len() < 20 {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            if u == v {
                continue;
            }
            let (a, b) = (mesh.vertices()[u].coords, mesh.vertices()[v].coords);
            let exact = a.dot(&b).clamp(-1.0, 1.0).acos();
            let graph = g.distance(u, v).unwrap() * s;
            assert!(graph >= exact * 0.98 && graph <= exact * 1.2, "{graph} vs {exact}");
            ratios.push(graph / exact);
        }
        let mean = ratios.iter().sum::<f64>() / 20.0;
        assert!(mean < 1.10, "mean overshoot {mean}");
    }

    #[test]
    fn error_measures() {
        let mesh = bumpy_icosphere::<f64>(2, 0.1);
        let g = all_pairs_geodesics(&mesh);
        let n = mesh.n_vertices();
        let gt = PointwiseMap::identity(n);
        assert_eq!(direct_error(&gt, &gt, &g).unwrap().1, 0.0);
        let sym = PointwiseMap::new((0..n).map(|j| (j * 7) % n).collect(), n).unwrap();
        assert_eq!(per_vertex_error(&sym, &gt, Some(&sym), &g).unwrap().1, 0.0);

        let mut t = gt.targets().to_vec();
        t[5] = 40;
        let t = PointwiseMap::new(t, n).unwrap();
        let (per, mean) = direct_error(&t, &gt, &g).unwrap();
        assert!((mean - g.distance(40, 5).unwrap() / n as f64).abs() < 1e-15);
        assert_eq!(per.iter().filter(|&&e| e > 0.0).count(), 1);
        let (pv, pmean) = per_vertex_error(&t, &gt, Some(&sym), &g).unwrap();
        assert!(pmean <= mean);
        assert!(pv.iter().zip(&per).all(|(a, b)| a <= b));
        assert!(direct_error(&PointwiseMap::identity(3), &gt, &g).is_err());
    }

    #[test]
    fn error_is_scale_invariant() {
        let mesh = bumpy_icosphere::<f64>(2, 0.1);
        let n = mesh.n_vertices();
        let t = PointwiseMap::new((0..n).map(|j| (j + 3) % n).collect(), n).unwrap();
        let gt = PointwiseMap::identity(n);
        let a = direct_error(&t, &gt, &all_pairs_geodesics(&mesh)).unwrap().1;
        let b = direct_error(&t, &gt, &all_pairs_geodesics(&mesh.scaled(3.0))).unwrap().1;
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn spearman_values() {
        assert!((spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        // Ties: ranks of x are 1.5, 1.5, 3, 4; closed form gives 0.9486832980505138.
        let r = spearman(&[1.0, 1.0, 2.0, 3.0], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r - 0.9486832980505138).abs() < 1e-14);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn rewire_counts_and_determinism() {
        let gt = PointwiseMap::identity(100);
        let mut r1 = ChaCha8Rng::seed_from_u64(5);
        let mut r2 = ChaCha8Rng::seed_from_u64(5);
        let a = rewire(&gt, 0.3, &mut r1);
        assert_eq!(a, rewire(&gt, 0.3, &mut r2));
        assert!(a.fixed_points() >= 70);
        assert_eq!(rewire(&gt, 0.0, &mut r1), gt);
    }

    #[test]
    fn correlation_experiment_small() {
        let mesh = bumpy_icosphere::<f64>(2, 0.1);
        let s = SpectralDecomposition::from_mesh(&mesh, 20).unwrap();
        let g = all_pairs_geodesics(&mesh);
        let gt = PointwiseMap::identity(mesh.n_vertices());
        let l = s.eigenvalues().as_slice().to_vec();
        let top = l[19];
        let l: Vec<f64> = l.iter().map(|v| v / top).collect();
        let masks = vec![
            crate::masks::resolvent_mask(&l, &l, 0.5, 0.5).unwrap(),
            crate::masks::standard_mask(&l, &l).unwrap(),
        ];
        let cfg = CorrelationConfig { n_samples: 12, noise_levels: vec![0.0, 0.2, 0.6], seed: 3, error_source: ErrorSource::Recovered };
        let rows = correlation_experiment(&s, &s, &gt, &masks, &cfg, &g).unwrap();
        assert_eq!(rows.len(), 24);
        let zero: Vec<&CorrelationRow> = rows.iter().filter(|r| r.noise == 0.0).collect();
        assert!(zero.iter().all(|r| r.error == 0.0));
        let again = correlation_experiment(&s, &s, &gt, &masks, &cfg, &g).unwrap();
        assert_eq!(rows, again);
        assert!(correlation_table_text(&rows).lines().count() == 25);
    }
}
