use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use fmapkit::eval::{
    correlation_experiment, correlation_table_text, geodesic_distances, penalty_error_correlation, per_vertex_error,
    CorrelationConfig, CorrelationRow, ErrorSource,
};
use fmapkit::export::{matrix_to_text, pgm_bytes, read_matrix, svg_heatmap, svg_line_plot, svg_scatter, Series};
use fmapkit::fmap::FunctionalMap;
use fmapkit::masks::{mask_penalty, resolvent_eigenvalues, Mask};
use fmapkit::p2p::{fmap_to_pointwise, icp_refine, read_pointwise, PointwiseMap};
use fmapkit::pipeline::{build_mask, match_spectra, MaskSpec, MatchOutcome, MatchSettings};
use fmapkit::spectral::{read_spectrum_file, rescale_spectra, sphere_spectrum, torus_spectrum, weyl_estimate, write_spectrum_file};
use fmapkit::{Mesh, Spectrum};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;

use crate::cache::{load_mesh, LoadedMesh, SpectralCache};
use crate::config::{validate_mask, RunConfig};
use crate::errors::{CliError, Stage};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io("output", format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io("output", format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_file(path, serde_json::to_string_pretty(value).expect("json values serialize") + "\n")
}

fn cache_for(cfg: &RunConfig) -> SpectralCache {
    SpectralCache::from_env(Some(&cfg.output.join("cache")))
}

struct Pair {
    m1: LoadedMesh,
    m2: LoadedMesh,
    s1: Spectrum,
    s2: Spectrum,
    cache_hits: [bool; 2],
}

fn load_pair(cfg: &RunConfig, k1: usize, k2: usize) -> Result<Pair, CliError> {
    let m1 = load_mesh(cfg.source()?)?;
    let m2 = load_mesh(cfg.target()?)?;
    let cache = cache_for(cfg);
    let (s1, h1) = cache.spectrum(&m1, k1)?;
    let (s2, h2) = if m2.hash == m1.hash && k2 == k1 { (s1.clone(), true) } else { cache.spectrum(&m2, k2)? };
    Ok(Pair { m1, m2, s1, s2, cache_hits: [h1, h2] })
}

fn read_indices(path: &Path, n: usize, one_based: bool) -> Result<Vec<usize>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io("input", format!("{}: {e}", path.display())))?;
    PointwiseMap::parse(&text, n, one_based).map(|m| m.targets().to_vec()).stage("input")
}

fn with_landmarks(cfg: &RunConfig, pair: &Pair) -> Result<MatchSettings, CliError> {
    let mut s = cfg.settings.clone();
    if let Some((a, b)) = &cfg.landmark_files {
        let l1 = read_indices(a, pair.m1.mesh.n_vertices(), cfg.one_based)?;
        let l2 = read_indices(b, pair.m2.mesh.n_vertices(), cfg.one_based)?;
        s.descriptors.landmarks = Some((l1, l2));
    }
    Ok(s)
}

struct GroundTruth {
    direct: PointwiseMap,
    symmetric: Option<PointwiseMap>,
    implied: bool,
}

/// Ground truth from files, or the identity when both meshes are the same file content.
fn ground_truth(cfg: &RunConfig, m1: &LoadedMesh, m2: &LoadedMesh) -> Result<Option<GroundTruth>, CliError> {
    let (n1, n2) = (m1.mesh.n_vertices(), m2.mesh.n_vertices());
    let load = |p: &PathBuf| -> Result<PointwiseMap, CliError> {
        let map = read_pointwise(p, n1, cfg.one_based).stage("ground_truth")?;
        if map.len() != n2 {
            return Err(CliError::config(format!("{}: {} entries, target mesh has {n2} vertices", p.display(), map.len())));
        }
        Ok(map)
    };
    let symmetric = cfg.gt_symmetric.as_ref().map(load).transpose()?;
    match &cfg.gt_direct {
        Some(p) => Ok(Some(GroundTruth { direct: load(p)?, symmetric, implied: false })),
        None if m1.hash == m2.hash => Ok(Some(GroundTruth { direct: PointwiseMap::identity(n2), symmetric, implied: true })),
        None if symmetric.is_some() => Err(CliError::config("a symmetric ground truth needs a direct one")),
        None => Ok(None),
    }
}

/// Mean direct and per-vertex geodesic errors of `t`, plus per-vertex values.
fn errors_of(t: &PointwiseMap, gt: &GroundTruth, mesh: &Mesh) -> Result<(f64, f64, Vec<f64>), CliError> {
    let sources: Vec<usize> = t.targets().iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let geo = geodesic_distances(mesh, &sources).stage("eval")?;
    let (_, direct) = per_vertex_error(t, &gt.direct, None, &geo).stage("eval")?;
    let (per_vertex, mean) = per_vertex_error(t, &gt.direct, gt.symmetric.as_ref(), &geo).stage("eval")?;
    Ok((direct, mean, per_vertex))
}

fn write_map_outputs(dir: &Path, stem: &str, c: &DMatrix<f64>) -> Result<(), CliError> {
    write_file(&dir.join(format!("{stem}.txt")), matrix_to_text(c))?;
    write_file(&dir.join(format!("{stem}.pgm")), pgm_bytes(c))?;
    write_file(&dir.join(format!("{stem}.svg")), svg_heatmap(c, stem))
}

fn mask_json(spec: &MaskSpec) -> serde_json::Value {
    match *spec {
        MaskSpec::Standard => json!({ "kind": "standard" }),
        MaskSpec::Slanted { eta, rank } => json!({ "kind": "slanted", "eta": eta, "rank": rank }),
        MaskSpec::Resolvent { gamma, w, a, b } => json!({ "kind": "resolvent", "gamma": gamma, "w": w, "a": a, "b": b }),
        MaskSpec::Heat { t } => json!({ "kind": "heat", "t": t }),
    }
}

fn outcome_json(o: &MatchOutcome<f64>) -> serde_json::Value {
    let w = &o.weights;
    json!({
        "weights": { "alpha1": w.desc, "alpha2": w.mult, "alpha3": w.orient, "alpha4": w.mask },
        "solver": {
            "path": format!("{:?}", o.report.path),
            "iterations": o.report.iterations,
            "gradient_norm": o.report.gradient_norm,
            "tolerance": o.report.tolerance,
        },
        "mask_penalty": mask_penalty(&o.mask, o.map.matrix()).unwrap_or(f64::NAN),
        "icp": o.refined.as_ref().map(|r| json!({
            "iterations": r.iterations,
            "converged": r.converged,
            "warning": r.warning,
        })),
    })
}

pub fn run_match(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.settings;
    let pair = load_pair(cfg, s.k1, s.k2)?;
    let settings = with_landmarks(cfg, &pair)?;
    let gt = ground_truth(cfg, &pair.m1, &pair.m2)?;
    let outcome = match_spectra(&pair.s1, &pair.s2, &settings).stage("match")?;
    if let Some(w) = outcome.refined.as_ref().and_then(|r| r.warning.as_ref()) {
        eprintln!("warning: {w}");
    }

    let out = &cfg.output;
    create_dir(out)?;
    write_map_outputs(out, "fmap_init", outcome.map.matrix())?;
    write_map_outputs(out, "fmap", outcome.final_map().matrix())?;
    write_file(&out.join("p2p_init.txt"), outcome.pointwise.to_text())?;
    write_file(&out.join("p2p.txt"), outcome.final_pointwise().to_text())?;

    let mut report = json!({
        "source": pair.m1.path, "target": pair.m2.path,
        "source_sha256": pair.m1.hash, "target_sha256": pair.m2.hash,
        "k1": s.k1, "k2": s.k2, "seed": cfg.seed,
        "mask": mask_json(&s.mask),
        "relative_weighting": s.relative_weighting,
        "spectral_cache_hits": pair.cache_hits,
        "result": outcome_json(&outcome),
    });
    if let Some(gt) = gt {
        let (direct, mean, per_vertex) = errors_of(outcome.final_pointwise(), &gt, &pair.m1.mesh)?;
        let (direct_init, mean_init, _) = errors_of(&outcome.pointwise, &gt, &pair.m1.mesh)?;
        let text: String = per_vertex.iter().map(|e| num(*e) + "\n").collect();
        write_file(&out.join("errors.txt"), text)?;
        report["errors"] = json!({
            "ground_truth": if gt.implied { "identity (same mesh)".to_string() } else { cfg.gt_direct.as_ref().unwrap().display().to_string() },
            "mean_direct_error": direct,
            "mean_per_vertex_error": mean,
            "mean_direct_error_before_refinement": direct_init,
            "mean_per_vertex_error_before_refinement": mean_init,
        });
    }
    write_json(&out.join("report.json"), &report)?;
    println!("{}", out.display());
    Ok(())
}

pub fn spectrum(mesh: &Path, k: usize, out: Option<&Path>) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::config("k must be positive"));
    }
    let m = load_mesh(mesh)?;
    let (spec, _) = SpectralCache::from_env(None).spectrum(&m, k)?;
    if let Some(out) = out {
        if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_spectrum_file(&spec, out).stage("output")?;
    }
    let text: String = spec.eigenvalues().iter().map(|v| num(*v) + "\n").collect();
    print!("{text}");
    Ok(())
}

pub fn refine(cfg: &RunConfig, map_file: &Path, iterations: usize) -> Result<(), CliError> {
    let c = read_matrix(map_file).stage("input")?;
    let (k2, k1) = c.shape();
    if k1 != k2 {
        return Err(CliError::config(format!("ICP needs a square map, {} is {k2}×{k1}", map_file.display())));
    }
    let pair = load_pair(cfg, k1, k2)?;
    let c = FunctionalMap::new(c).stage("input")?;
    let before = fmap_to_pointwise(&c, &pair.s1, &pair.s2).stage("refine")?;
    let r = icp_refine(&c, &pair.s1, &pair.s2, iterations).stage("refine")?;
    if let Some(w) = &r.warning {
        eprintln!("warning: {w}");
    }
    let out = &cfg.output;
    create_dir(out)?;
    write_map_outputs(out, "fmap", r.map.matrix())?;
    write_file(&out.join("p2p_init.txt"), before.to_text())?;
    write_file(&out.join("p2p.txt"), r.pointwise.to_text())?;
    let cost: Vec<f64> = r.cost_trace.clone();
    write_json(
        &out.join("report.json"),
        &json!({ "k": k1, "iterations": r.iterations, "converged": r.converged, "warning": r.warning, "alignment_cost": cost }),
    )?;
    println!("{}", out.display());
    Ok(())
}

pub struct EvalArgs<'a> {
    pub source: &'a Path,
    pub map: &'a Path,
    pub gt: &'a Path,
    pub gt_sym: Option<&'a Path>,
    pub one_based: bool,
    pub out: Option<&'a Path>,
}

pub fn eval(a: &EvalArgs<'_>) -> Result<(), CliError> {
    let m1 = load_mesh(a.source)?;
    let n1 = m1.mesh.n_vertices();
    let t = read_pointwise(a.map, n1, a.one_based).stage("input")?;
    let direct = read_pointwise(a.gt, n1, a.one_based).stage("ground_truth")?;
    let symmetric = a.gt_sym.map(|p| read_pointwise(p, n1, a.one_based)).transpose().stage("ground_truth")?;
    if direct.len() != t.len() || symmetric.as_ref().is_some_and(|s| s.len() != t.len()) {
        return Err(CliError::config("map and ground-truth files have different lengths"));
    }
    let gt = GroundTruth { direct, symmetric, implied: false };
    let (direct, mean, per_vertex) = errors_of(&t, &gt, &m1.mesh)?;
    let summary = json!({
        "vertices": t.len(),
        "mean_direct_error": direct,
        "mean_per_vertex_error": mean,
        "normalization": "geodesic distance / sqrt(area)",
    });
    if let Some(out) = a.out {
        create_dir(out)?;
        write_file(&out.join("errors.txt"), per_vertex.iter().map(|e| num(*e) + "\n").collect::<String>())?;
        write_json(&out.join("eval.json"), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(())
}

/// Where a mask's eigenvalues come from.
fn eigenvalues_from(source: &str, k: usize, cache: &SpectralCache) -> Result<Vec<f64>, CliError> {
    let analytic = match source {
        "sphere" => Some(sphere_spectrum::<f64>(k, 1.0).stage("spectrum")?.eigenvalues),
        "torus" => Some(torus_spectrum::<f64>(k, 1.0).stage("spectrum")?.eigenvalues),
        // λ_0 = 0 followed by the Weyl estimates 4πi.
        "weyl" => Some(
            (0..k)
                .map(|i| if i == 0 { Ok(0.0) } else { weyl_estimate::<f64>(i, 1.0) })
                .collect::<fmapkit::Result<_>>()
                .stage("spectrum")?,
        ),
        _ => None,
    };
    if let Some(v) = analytic {
        return Ok(v);
    }
    let path = Path::new(source);
    if path.extension().is_some_and(|e| e == "fmspec") {
        let spec = read_spectrum_file::<f64>(path).stage("spectrum")?;
        if spec.k() < k {
            return Err(CliError::config(format!("{source} holds {} eigenvalues, {k} requested", spec.k())));
        }
        return Ok(spec.eigenvalues().as_slice()[..k].to_vec());
    }
    let (spec, _) = cache.spectrum(&load_mesh(path)?, k)?;
    Ok(spec.eigenvalues().as_slice().to_vec())
}

pub fn render_mask(cfg: &RunConfig, l1: &str, l2: &str, normalize: bool) -> Result<(), CliError> {
    let cache = cache_for(cfg);
    let e1 = eigenvalues_from(l1, cfg.settings.k1, &cache)?;
    let e2 = eigenvalues_from(l2, cfg.settings.k2, &cache)?;
    let mut mask = build_mask(&cfg.settings.mask, &e1, &e2).stage("mask")?;
    if normalize {
        mask = mask.frobenius_normalized();
    }
    let out = &cfg.output;
    create_dir(out)?;
    let stem = format!("mask_{}", cfg.settings.mask.name());
    write_file(&out.join(format!("{stem}.txt")), matrix_to_text(&mask.weights))?;
    write_file(&out.join(format!("{stem}.pgm")), pgm_bytes(&mask.weights))?;
    write_file(&out.join(format!("{stem}.svg")), svg_heatmap(&mask.weights, &stem))?;
    println!("{}", out.join(format!("{stem}.pgm")).display());
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    W,
    T,
    Eta,
    Alpha4,
    K,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "gamma" => SweepParam::Gamma,
            "w" => SweepParam::W,
            "T" | "t" => SweepParam::T,
            "eta" => SweepParam::Eta,
            "alpha4" => SweepParam::Alpha4,
            "k" => SweepParam::K,
            other => return Err(CliError::config(format!("cannot sweep {other:?}; expected gamma, w, T, eta, alpha4 or k"))),
        })
    }

    fn name(self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::W => "w",
            SweepParam::T => "T",
            SweepParam::Eta => "eta",
            SweepParam::Alpha4 => "alpha4",
            SweepParam::K => "k",
        }
    }

    /// Settings with this parameter set to `v`.
    fn apply(self, base: &MatchSettings, v: f64) -> Result<MatchSettings, CliError> {
        let mut s = base.clone();
        let wrong = |kind: &str| Err(CliError::config(format!("{} does not apply to the {kind} mask", self.name())));
        match (self, &mut s.mask) {
            (SweepParam::Gamma, MaskSpec::Resolvent { gamma, .. }) => *gamma = v,
            (SweepParam::W, MaskSpec::Resolvent { w, .. }) => *w = v,
            (SweepParam::T, MaskSpec::Heat { t }) => *t = v,
            (SweepParam::Eta, MaskSpec::Slanted { eta, .. }) => *eta = v,
            (SweepParam::Alpha4, _) => {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(CliError::config(format!("alpha4 must be finite and nonnegative, got {v}")));
                }
                s.base_weights[3] = v;
            }
            (SweepParam::K, _) => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(CliError::config(format!("k must be a positive integer, got {v}")));
                }
                s.k1 = v as usize;
                s.k2 = v as usize;
            }
            (_, m) => return wrong(m.name()),
        }
        validate_mask(&s.mask)?;
        Ok(s)
    }
}

pub fn sweep_header() -> &'static str {
    "parameter\tvalue\tmean_direct_error\tmean_per_vertex_error\tmask_penalty\n"
}

pub fn sweep(cfg: &RunConfig, param: SweepParam, values: &[f64], parallel: bool) -> Result<String, CliError> {
    let points = values.iter().map(|&v| param.apply(&cfg.settings, v)).collect::<Result<Vec<_>, _>>()?;
    let out = &cfg.output;
    let table_path = out.join(format!("sweep_{}.tsv", param.name()));
    let mut table = sweep_header().to_string();
    if points.is_empty() {
        create_dir(out)?;
        write_file(&table_path, &table)?;
        return Ok(table);
    }
    let k1 = points.iter().map(|s| s.k1).max().unwrap();
    let k2 = points.iter().map(|s| s.k2).max().unwrap();
    let pair = load_pair(cfg, k1, k2)?;
    let gt = ground_truth(cfg, &pair.m1, &pair.m2)?;
    let run = |settings: &MatchSettings| -> Result<String, CliError> {
        let settings = MatchSettings { descriptors: with_landmarks(cfg, &pair)?.descriptors, ..settings.clone() };
        let s1 = pair.s1.truncated(settings.k1).stage("sweep")?;
        let s2 = pair.s2.truncated(settings.k2).stage("sweep")?;
        let o = match_spectra(&s1, &s2, &settings).stage("sweep")?;
        let penalty = mask_penalty(&o.mask, o.map.matrix()).stage("sweep")?;
        let (direct, per_vertex) = match &gt {
            Some(gt) => {
                let (d, p, _) = errors_of(o.final_pointwise(), gt, &pair.m1.mesh)?;
                (num(d), if gt.symmetric.is_some() { num(p) } else { "nan".into() })
            }
            None => ("nan".into(), "nan".into()),
        };
        Ok(format!("{direct}\t{per_vertex}\t{}", num(penalty)))
    };
    let rows: Vec<String> = if parallel {
        points.par_iter().map(run).collect::<Result<_, _>>()?
    } else {
        points.iter().map(run).collect::<Result<_, _>>()?
    };
    for (v, row) in values.iter().zip(rows) {
        table.push_str(&format!("{}\t{}\t{row}\n", param.name(), num(*v)));
    }
    create_dir(out)?;
    write_file(&table_path, &table)?;
    Ok(table)
}

/// One row of the sphere/torus demonstration.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoRow {
    pub k: usize,
    pub sphere: f64,
    pub torus: f64,
    pub weyl: f64,
    pub laplacian_energy: f64,
    pub resolvent_energy: f64,
}

/// Spectra of the unit-area sphere and torus and the commutator energies of
/// `C = Id` truncated to the first `k` eigenpairs, resolvent at γ = 1, μ = i
/// with both spectra rescaled by their common maximum at `k_max`.
pub fn demo_rows(k_max: usize) -> Result<Vec<DemoRow>, CliError> {
    if k_max < 2 {
        return Err(CliError::config(format!("k_max must be at least 2, got {k_max}")));
    }
    let sphere = sphere_spectrum::<f64>(k_max, 1.0).stage("demo")?.eigenvalues;
    let torus = torus_spectrum::<f64>(k_max, 1.0).stage("demo")?.eigenvalues;
    let (rs, rt) = rescale_spectra(&sphere, &torus).stage("demo")?;
    let r1 = resolvent_eigenvalues(&rs, 1.0, 0.0, 1.0).stage("demo")?;
    let r2 = resolvent_eigenvalues(&rt, 1.0, 0.0, 1.0).stage("demo")?;
    let (mut lap, mut res) = (0.0, 0.0);
    (0..k_max)
        .map(|i| {
            lap += (sphere[i] - torus[i]).powi(2);
            res += (r1[i] - r2[i]).norm_sqr();
            Ok(DemoRow {
                k: i + 1,
                sphere: sphere[i],
                torus: torus[i],
                weyl: weyl_estimate::<f64>(i + 1, 1.0).stage("demo")?,
                laplacian_energy: lap,
                resolvent_energy: res,
            })
        })
        .collect()
}

pub fn demo_sphere_torus(k_max: usize, out: &Path) -> Result<(), CliError> {
    let rows = demo_rows(k_max)?;
    create_dir(out)?;
    let mut table = String::from("k\tsphere\ttorus\tweyl\tlaplacian_energy\tresolvent_energy\n");
    for r in &rows {
        table.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\n",
            r.k,
            num(r.sphere),
            num(r.torus),
            num(r.weyl),
            num(r.laplacian_energy),
            num(r.resolvent_energy)
        ));
    }
    write_file(&out.join("demo.tsv"), &table)?;
    let pts = |f: fn(&DemoRow) -> f64| rows.iter().map(|r| (r.k as f64, f(r))).collect::<Vec<_>>();
    let spectra = [
        Series { label: "sphere", points: pts(|r| r.sphere) },
        Series { label: "torus", points: pts(|r| r.torus) },
        Series { label: "Weyl", points: pts(|r| r.weyl) },
    ];
    write_file(&out.join("spectra.svg"), svg_line_plot(&spectra, "Unit-area spectra", "k", "eigenvalue"))?;
    let lap = [Series { label: "Laplacian commutator", points: pts(|r| r.laplacian_energy) }];
    write_file(&out.join("laplacian_energy.svg"), svg_line_plot(&lap, "‖CΔ1 − Δ2C‖², C = Id", "k", "energy"))?;
    let res = [Series { label: "resolvent commutator", points: pts(|r| r.resolvent_energy) }];
    write_file(&out.join("resolvent_energy.svg"), svg_line_plot(&res, "Resolvent commutator, C = Id", "k", "energy"))?;

    let last = rows.last().unwrap();
    let tail_increment = rows
        .windows(2)
        .filter(|w| w[1].k > 50)
        .map(|w| (w[1].resolvent_energy - w[0].resolvent_energy) / w[1].resolvent_energy)
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    let summary = json!({
        "k_max": k_max,
        "laplacian_energy": last.laplacian_energy,
        "resolvent_energy": last.resolvent_energy,
        "max_relative_resolvent_increment_beyond_50": tail_increment,
    });
    write_json(&out.join("demo.json"), &summary)?;
    print!("{table}");
    Ok(())
}

pub struct CorrelateArgs {
    pub samples: usize,
    pub noise: Vec<f64>,
    pub masks: Vec<String>,
    pub error_source: ErrorSource,
}

fn mask_for_name(name: &str, base: &MaskSpec) -> Result<MaskSpec, CliError> {
    if name == base.name() {
        return Ok(base.clone());
    }
    Ok(match name {
        "standard" => MaskSpec::Standard,
        "slanted" => MaskSpec::Slanted { eta: 0.03, rank: None },
        "resolvent" => MaskSpec::Resolvent { gamma: 0.5, w: 0.5, a: 0.0, b: 1.0 },
        "heat" => MaskSpec::Heat { t: 5.0 },
        other => return Err(CliError::config(format!("unknown mask kind {other:?}"))),
    })
}

pub fn correlate(cfg: &RunConfig, a: &CorrelateArgs) -> Result<Vec<CorrelationRow>, CliError> {
    if a.noise.is_empty() || a.noise.iter().any(|n| !(0.0..=1.0).contains(n)) {
        return Err(CliError::config("noise levels must be a nonempty list of fractions in [0, 1]"));
    }
    let specs = a.masks.iter().map(|m| mask_for_name(m, &cfg.settings.mask)).collect::<Result<Vec<_>, _>>()?;
    let s = &cfg.settings;
    let pair = load_pair(cfg, s.k1, s.k2)?;
    let gt = ground_truth(cfg, &pair.m1, &pair.m2)?
        .ok_or_else(|| CliError::config("the correlation study needs a ground-truth map (--gt)"))?;
    let l1 = pair.s1.eigenvalues().as_slice();
    let l2 = pair.s2.eigenvalues().as_slice();
    let masks: Vec<Mask<f64>> = specs.iter().map(|m| build_mask(m, l1, l2)).collect::<fmapkit::Result<_>>().stage("mask")?;
    let config = CorrelationConfig { n_samples: a.samples, noise_levels: a.noise.clone(), seed: cfg.seed, error_source: a.error_source };
    let sources: Vec<usize> = (0..pair.m1.mesh.n_vertices()).collect();
    let geo = geodesic_distances(&pair.m1.mesh, &sources).stage("eval")?;
    let rows = correlation_experiment(&pair.s1, &pair.s2, &gt.direct, &masks, &config, &geo).stage("correlate")?;

    let out = &cfg.output;
    create_dir(out)?;
    write_file(&out.join("correlation.tsv"), correlation_table_text(&rows))?;
    let mut summary = serde_json::Map::new();
    for spec in &specs {
        let name = spec.name();
        let points: Vec<(f64, f64)> = rows.iter().filter(|r| r.mask == name).map(|r| (r.penalty, r.error)).collect();
        let series = [Series { label: name, points }];
        write_file(&out.join(format!("correlation_{name}.svg")), svg_scatter(&series, name, "mask penalty", "mean geodesic error"))?;
        let rho = penalty_error_correlation(&rows, name).ok();
        summary.insert(name.to_string(), json!({ "spearman": rho }));
    }
    let summary = json!({ "samples": a.samples, "seed": cfg.seed, "masks": summary });
    write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(rows)
}
