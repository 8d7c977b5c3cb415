//! Run configuration: a TOML file with sections, overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use fmapkit::pipeline::{DescriptorSpec, MaskSpec, MatchSettings};
use serde::Deserialize;

use crate::errors::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub meshes: MeshSection,
    pub basis: BasisSection,
    pub descriptors: DescriptorSection,
    pub mask: MaskSection,
    pub weights: WeightSection,
    pub refine: RefineSection,
    pub ground_truth: GroundTruthSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisSection {
    pub k: Option<usize>,
    pub k1: Option<usize>,
    pub k2: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DescriptorSection {
    pub n_energies: Option<usize>,
    pub sigma_scale: Option<f64>,
    pub count: Option<usize>,
    pub landmarks_source: Option<PathBuf>,
    pub landmarks_target: Option<PathBuf>,
    pub landmark_energies: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskSection {
    pub kind: Option<String>,
    pub gamma: Option<f64>,
    pub w: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub t: Option<f64>,
    pub eta: Option<f64>,
    pub rank: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeightSection {
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub alpha3: Option<f64>,
    pub alpha4: Option<f64>,
    pub relative: Option<bool>,
    pub mult_count: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineSection {
    /// `"icp"` or `"none"`.
    pub method: Option<String>,
    pub iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroundTruthSection {
    pub direct: Option<PathBuf>,
    pub symmetric: Option<PathBuf>,
    pub one_based: Option<bool>,
}

/// Flags shared by every subcommand that runs the matching pipeline.
#[derive(Debug, Default, Clone, Args)]
pub struct RunFlags {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Shape 1 (the map goes from target vertices to source vertices).
    #[arg(long)]
    pub source: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Sets both basis sizes.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub n_energies: Option<usize>,
    #[arg(long)]
    pub sigma_scale: Option<f64>,
    /// Keep this many uniformly spaced WKS descriptors.
    #[arg(long)]
    pub descriptor_count: Option<usize>,
    #[arg(long)]
    pub landmarks_source: Option<PathBuf>,
    #[arg(long)]
    pub landmarks_target: Option<PathBuf>,
    /// standard | slanted | resolvent | heat
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub w: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub b: Option<f64>,
    /// Heat-mask time.
    #[arg(long = "t", allow_negative_numbers = true)]
    pub t: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub eta: Option<f64>,
    /// Estimated rank for the slanted mask.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha3: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha4: Option<f64>,
    /// Use the base weights as given instead of relative weighting.
    #[arg(long)]
    pub no_relative: bool,
    /// Number of descriptors turned into multiplication operators.
    #[arg(long)]
    pub mult_count: Option<usize>,
    /// ICP iteration count.
    #[arg(long, conflicts_with = "no_icp")]
    pub icp: Option<usize>,
    #[arg(long)]
    pub no_icp: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Direct ground-truth map (one shape-1 vertex per shape-2 vertex).
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Symmetric ground-truth map.
    #[arg(long)]
    pub gt_sym: Option<PathBuf>,
    /// Map and landmark files use 1-based indices.
    #[arg(long)]
    pub one_based: bool,
}

/// Fully resolved configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub settings: MatchSettings,
    pub landmark_files: Option<(PathBuf, PathBuf)>,
    pub output: PathBuf,
    pub seed: u64,
    pub gt_direct: Option<PathBuf>,
    pub gt_symmetric: Option<PathBuf>,
    pub one_based: bool,
}

impl RunConfig {
    pub fn source(&self) -> Result<&Path, CliError> {
        self.source.as_deref().ok_or_else(|| CliError::config("no source mesh given (--source or [meshes] source)"))
    }

    pub fn target(&self) -> Result<&Path, CliError> {
        self.target.as_deref().ok_or_else(|| CliError::config("no target mesh given (--target or [meshes] target)"))
    }
}

pub fn load_file(path: &Path) -> Result<ConfigFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io("config", format!("{}: {e}", path.display())))?;
    let mut file: ConfigFile = toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let rebase = |p: &mut Option<PathBuf>| {
        if let Some(q) = p.as_mut() {
            if q.is_relative() {
                *q = base.join(&*q);
            }
        }
    };
    rebase(&mut file.output);
    rebase(&mut file.meshes.source);
    rebase(&mut file.meshes.target);
    rebase(&mut file.descriptors.landmarks_source);
    rebase(&mut file.descriptors.landmarks_target);
    rebase(&mut file.ground_truth.direct);
    rebase(&mut file.ground_truth.symmetric);
    Ok(file)
}

fn mask_spec(kind: &str, m: &MaskSection) -> Result<MaskSpec, CliError> {
    let spec = match kind {
        "standard" => MaskSpec::Standard,
        "slanted" => MaskSpec::Slanted { eta: m.eta.unwrap_or(0.03), rank: m.rank },
        "resolvent" => MaskSpec::Resolvent {
            gamma: m.gamma.unwrap_or(0.5),
            w: m.w.unwrap_or(0.5),
            a: m.a.unwrap_or(0.0),
            b: m.b.unwrap_or(1.0),
        },
        "heat" => MaskSpec::Heat { t: m.t.unwrap_or(5.0) },
        other => return Err(CliError::config(format!("unknown mask kind {other:?}; expected standard, slanted, resolvent or heat"))),
    };
    let stray = match spec {
        MaskSpec::Standard => [("gamma", m.gamma.is_some()), ("w", m.w.is_some()), ("t", m.t.is_some()), ("eta", m.eta.is_some())].to_vec(),
        MaskSpec::Slanted { .. } => [("gamma", m.gamma.is_some()), ("w", m.w.is_some()), ("t", m.t.is_some())].to_vec(),
        MaskSpec::Resolvent { .. } => [("t", m.t.is_some()), ("eta", m.eta.is_some()), ("rank", m.rank.is_some())].to_vec(),
        MaskSpec::Heat { .. } => [("gamma", m.gamma.is_some()), ("w", m.w.is_some()), ("eta", m.eta.is_some())].to_vec(),
    };
    if let Some((name, _)) = stray.iter().find(|(_, set)| *set) {
        return Err(CliError::config(format!("parameter {name} does not apply to the {kind} mask")));
    }
    validate_mask(&spec)?;
    Ok(spec)
}

pub fn validate_mask(spec: &MaskSpec) -> Result<(), CliError> {
    let bad = |msg: String| Err(CliError::config(msg));
    match *spec {
        MaskSpec::Resolvent { gamma, w, a, b } => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return bad(format!("gamma must be positive, got {gamma}"));
            }
            if !(0.0..=1.0).contains(&w) {
                return bad(format!("w must lie in [0, 1], got {w}"));
            }
            if !(a.is_finite() && b.is_finite()) || (b == 0.0 && a >= 0.0) {
                return bad(format!("resolvent point {a} + {b}i must lie off the nonnegative real axis"));
            }
        }
        MaskSpec::Heat { t } if !(t > 0.0 && t.is_finite()) => return bad(format!("T must be positive, got {t}")),
        MaskSpec::Slanted { eta, .. } if !(eta > 0.0 && eta.is_finite()) => return bad(format!("eta must be positive, got {eta}")),
        _ => {}
    }
    Ok(())
}

/// Merges the optional config file with flags and validates the result.
pub fn resolve(flags: &RunFlags) -> Result<RunConfig, CliError> {
    let file = match &flags.config {
        Some(p) => load_file(p)?,
        None => ConfigFile::default(),
    };
    let pick = |flag: Option<f64>, file: Option<f64>| flag.or(file);

    let k = flags.k.or(file.basis.k);
    let k1 = flags.k1.or(flags.k).or(file.basis.k1).or(k).unwrap_or(50);
    let k2 = flags.k2.or(flags.k).or(file.basis.k2).or(k).unwrap_or(50);
    if k1 == 0 || k2 == 0 {
        return Err(CliError::config("basis sizes must be positive"));
    }

    let m = MaskSection {
        kind: flags.mask.clone().or(file.mask.kind.clone()),
        gamma: pick(flags.gamma, file.mask.gamma),
        w: pick(flags.w, file.mask.w),
        a: pick(flags.a, file.mask.a),
        b: pick(flags.b, file.mask.b),
        t: pick(flags.t, file.mask.t),
        eta: pick(flags.eta, file.mask.eta),
        rank: flags.rank.or(file.mask.rank),
    };
    let mask = mask_spec(m.kind.as_deref().unwrap_or("resolvent"), &m)?;

    let defaults = MatchSettings::default();
    let dd = DescriptorSpec::default();
    let descriptors = DescriptorSpec {
        n_energies: flags.n_energies.or(file.descriptors.n_energies).unwrap_or(dd.n_energies),
        sigma_scale: pick(flags.sigma_scale, file.descriptors.sigma_scale).unwrap_or(dd.sigma_scale),
        count: flags.descriptor_count.or(file.descriptors.count),
        landmarks: None,
        landmark_energies: file.descriptors.landmark_energies.unwrap_or(dd.landmark_energies),
    };
    if descriptors.n_energies == 0 || !(descriptors.sigma_scale > 0.0) {
        return Err(CliError::config("n_energies and sigma_scale must be positive"));
    }
    if descriptors.count.is_some_and(|c| c == 0 || c > descriptors.n_energies) {
        return Err(CliError::config(format!("descriptor count must lie in 1..={}", descriptors.n_energies)));
    }
    let landmark_files = match (
        flags.landmarks_source.clone().or(file.descriptors.landmarks_source),
        flags.landmarks_target.clone().or(file.descriptors.landmarks_target),
    ) {
        (Some(a), Some(b)) => Some((a, b)),
        (None, None) => None,
        _ => return Err(CliError::config("landmark files must be given for both shapes")),
    };

    let [d1, d2, d3, d4] = defaults.base_weights;
    let base_weights = [
        pick(flags.alpha1, file.weights.alpha1).unwrap_or(d1),
        pick(flags.alpha2, file.weights.alpha2).unwrap_or(d2),
        pick(flags.alpha3, file.weights.alpha3).unwrap_or(d3),
        pick(flags.alpha4, file.weights.alpha4).unwrap_or(d4),
    ];
    if base_weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(CliError::config(format!("weights must be finite and nonnegative, got {base_weights:?}")));
    }
    if base_weights[2] > 0.0 {
        return Err(CliError::config("alpha3 > 0 needs an orientation term plugin; none is registered in this build"));
    }

    let method = file.refine.method.as_deref().unwrap_or("icp");
    let icp_iterations = if flags.no_icp {
        None
    } else if let Some(n) = flags.icp {
        Some(n)
    } else {
        match method {
            "icp" => Some(file.refine.iterations.unwrap_or(10)),
            "none" => None,
            other => return Err(CliError::config(format!("unknown refinement {other:?}; expected icp or none"))),
        }
    };
    if icp_iterations.is_some() && k1 != k2 {
        return Err(CliError::config("ICP refinement needs k1 = k2 (use --no-icp for rectangular maps)"));
    }

    let settings = MatchSettings {
        k1,
        k2,
        descriptors,
        mask,
        base_weights,
        relative_weighting: !flags.no_relative && file.weights.relative.unwrap_or(true),
        mult_count: flags.mult_count.or(file.weights.mult_count).unwrap_or(defaults.mult_count),
        icp_iterations,
    };
    Ok(RunConfig {
        source: flags.source.clone().or(file.meshes.source),
        target: flags.target.clone().or(file.meshes.target),
        settings,
        landmark_files,
        output: flags.out.clone().or(file.output).unwrap_or_else(|| PathBuf::from("fmapkit-out")),
        seed: flags.seed.or(file.seed).unwrap_or(0),
        gt_direct: flags.gt.clone().or(file.ground_truth.direct),
        gt_symmetric: flags.gt_sym.clone().or(file.ground_truth.symmetric),
        one_based: flags.one_based || file.ground_truth.one_based.unwrap_or(false),
    })
}
