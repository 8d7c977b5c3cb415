//! End-to-end matching of two shapes given their spectra: descriptors,
//! mask, energy solve, pointwise recovery and optional ICP.

use nalgebra::{DMatrix, DVector};

use crate::descriptors::{landmark_wks, mult_operator, project, uniform_indices, wks, DescriptorSet};
use crate::error::{Error, Result};
use crate::fmap::{normalize_weights, solve_with_report, EnergyProblem, FunctionalMap, SolveReport, Weights};
use crate::masks::{heat_mask, resolvent_mask_at, slanted_mask, standard_mask, Mask};
use crate::p2p::{fmap_to_pointwise, icp_refine, IcpResult, PointwiseMap, DEFAULT_ICP_ITERATIONS};
use crate::scalar::Scalar;
use crate::spectral::{rescale_spectra, SpectralDecomposition};

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSpec {
    Standard,
    /// `rank = None` uses `min(k1, k2)`.
    Slanted { eta: f64, rank: Option<usize> },
    Resolvent { gamma: f64, w: f64, a: f64, b: f64 },
    Heat { t: f64 },
}

impl Default for MaskSpec {
    fn default() -> Self {
        MaskSpec::Resolvent { gamma: 0.5, w: 0.5, a: 0.0, b: 1.0 }
    }
}

impl MaskSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MaskSpec::Standard => "standard",
            MaskSpec::Slanted { .. } => "slanted",
            MaskSpec::Resolvent { .. } => "resolvent",
            MaskSpec::Heat { .. } => "heat",
        }
    }
}

/// Builds the mask for eigenvalue lists `l1` (columns) and `l2` (rows).
/// Spectral masks see both lists divided by their common maximum.
pub fn build_mask<T: Scalar>(spec: &MaskSpec, l1: &[T], l2: &[T]) -> Result<Mask<T>> {
    if let MaskSpec::Slanted { eta, rank } = *spec {
        let rank = rank.unwrap_or(l1.len().min(l2.len()));
        return slanted_mask(l1.len(), l2.len(), rank, eta);
    }
    let (r1, r2) = rescale_spectra(l1, l2)?;
    match *spec {
        MaskSpec::Standard => standard_mask(&r1, &r2),
        MaskSpec::Resolvent { gamma, w, a, b } => resolvent_mask_at(&r1, &r2, T::of(gamma), T::of(w), T::of(a), T::of(b)),
        MaskSpec::Heat { t } => heat_mask(&r1, &r2, T::of(t)),
        MaskSpec::Slanted { .. } => unreachable!(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSpec {
    pub n_energies: usize,
    pub sigma_scale: f64,
    /// Keep this many uniformly spaced WKS columns; `None` keeps all.
    pub count: Option<usize>,
    /// Corresponding landmark vertices on shape 1 and shape 2.
    pub landmarks: Option<(Vec<usize>, Vec<usize>)>,
    pub landmark_energies: usize,
}

impl Default for DescriptorSpec {
    fn default() -> Self {
        DescriptorSpec { n_energies: 100, sigma_scale: 1.0, count: None, landmarks: None, landmark_energies: 10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchSettings {
    pub k1: usize,
    pub k2: usize,
    pub descriptors: DescriptorSpec,
    pub mask: MaskSpec,
    /// `(α1*, α2*, α3*, α4*)`.
    pub base_weights: [f64; 4],
    pub relative_weighting: bool,
    /// Number of descriptor columns turned into multiplication operators.
    pub mult_count: usize,
    /// `None` skips refinement.
    pub icp_iterations: Option<usize>,
}

impl Default for MatchSettings {
    fn default() -> Self {
        MatchSettings {
            k1: 50,
            k2: 50,
            descriptors: DescriptorSpec::default(),
            mask: MaskSpec::default(),
            base_weights: [1.0, 1.0, 0.0, 1.0],
            relative_weighting: true,
            mult_count: 5,
            icp_iterations: Some(DEFAULT_ICP_ITERATIONS),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatchOutcome<T: Scalar> {
    pub map: FunctionalMap<T>,
    pub pointwise: PointwiseMap,
    pub refined: Option<IcpResult<T>>,
    pub weights: Weights<T>,
    pub mask: Mask<T>,
    pub report: SolveReport<T>,
}

impl<T: Scalar> MatchOutcome<T> {
    /// Refined map if ICP ran, otherwise the direct one.
    pub fn final_pointwise(&self) -> &PointwiseMap {
        self.refined.as_ref().map_or(&self.pointwise, |r| &r.pointwise)
    }

    pub fn final_map(&self) -> &FunctionalMap<T> {
        self.refined.as_ref().map_or(&self.map, |r| &r.map)
    }
}

fn descriptors_for<T: Scalar>(spec: &SpectralDecomposition<T>, d: &DescriptorSpec, landmarks: Option<&[usize]>) -> Result<DescriptorSet<T>> {
    let mut set = wks(spec, d.n_energies, d.sigma_scale)?;
    if let Some(count) = d.count {
        set = set.subsample(count)?;
    }
    if let Some(l) = landmarks {
        set = set.concat(&landmark_wks(spec, l, d.landmark_energies, d.sigma_scale)?)?;
    }
    set.normalized(spec.mass())
}

/// `mult_operator(1) = I` up to the basis orthonormality tolerance.
fn check_unit_multiplier<T: Scalar>(spec: &SpectralDecomposition<T>) -> Result<()> {
    let d = mult_operator(spec, &DVector::from_element(spec.n_vertices(), T::one()))?;
    let dev = (d - DMatrix::identity(spec.k(), spec.k())).amax();
    let tol = T::eps().sqrt() * T::of(10.0);
    if !(dev <= tol) {
        return Err(Error::Numerical(format!("multiplication by 1 deviates from the identity by {dev}")));
    }
    Ok(())
}

/// Matches shape 2 onto shape 1. Returns `C` (`k2 × k1`) and `T: S2 → S1`.
pub fn match_spectra<T: Scalar>(
    spec1: &SpectralDecomposition<T>,
    spec2: &SpectralDecomposition<T>,
    s: &MatchSettings,
) -> Result<MatchOutcome<T>> {
    if s.k1 == 0 || s.k2 == 0 {
        return Err(Error::InvalidParameter("basis sizes must be positive".into()));
    }
    if s.base_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter(format!("base weights must be finite and nonnegative: {:?}", s.base_weights)));
    }
    let b1 = spec1.truncated(s.k1)?;
    let b2 = spec2.truncated(s.k2)?;
    check_unit_multiplier(&b1)?;
    check_unit_multiplier(&b2)?;

    let (lm1, lm2) = match &s.descriptors.landmarks {
        Some((l1, l2)) if l1.len() != l2.len() => {
            return Err(Error::dim(format!("{} landmarks on shape 1, {} on shape 2", l1.len(), l2.len())))
        }
        Some((l1, l2)) => (Some(l1.as_slice()), Some(l2.as_slice())),
        None => (None, None),
    };
    let f1 = descriptors_for(spec1, &s.descriptors, lm1)?;
    let f2 = descriptors_for(spec2, &s.descriptors, lm2)?;
    let a1 = project(&b1, &f1)?;
    let a2 = project(&b2, &f2)?;

    let mask = build_mask(&s.mask, b1.eigenvalues().as_slice(), b2.eigenvalues().as_slice())?;
    let mut mult = Vec::new();
    if s.mult_count > 0 && s.base_weights[1] > 0.0 {
        for j in uniform_indices(f1.dim(), s.mult_count.min(f1.dim())) {
            let d1 = mult_operator(&b1, &f1.values.column(j).into_owned())?;
            let d2 = mult_operator(&b2, &f2.values.column(j).into_owned())?;
            mult.push((d1, d2));
        }
    }
    let problem = EnergyProblem::new(a1, a2, mask.clone())?.with_mult_pairs(mult)?;
    let [w1, w2, w3, w4] = s.base_weights.map(T::of);
    let base = Weights::new(w1, w2, w3, w4);
    let weights = if s.relative_weighting { normalize_weights(&problem, base)? } else { base };
    let problem = problem.with_weights(weights)?;
    let report = solve_with_report(&problem)?;
    let map = report.map.clone();
    let pointwise = fmap_to_pointwise(&map, &b1, &b2)?;
    let refined = match s.icp_iterations {
        Some(it) if s.k1 == s.k2 => Some(icp_refine(&map, &b1, &b2, it)?),
        Some(_) => return Err(Error::dim("ICP refinement needs k1 = k2")),
        None => None,
    };
    Ok(MatchOutcome { map, pointwise, refined, weights, mask, report })
}
