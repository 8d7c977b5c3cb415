//! On-disk spectral cache keyed by (mesh content hash, k).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use fmapkit::mesh::{parse_obj, parse_off};
use fmapkit::spectral::{read_spectrum_file, write_spectrum_file};
use fmapkit::{Mesh, Spectrum};
use sha2::{Digest, Sha256};

use crate::errors::{CliError, Stage};

pub const CACHE_ENV: &str = "FMAPKIT_CACHE_DIR";

#[derive(Debug, Clone)]
pub struct SpectralCache {
    dir: Option<PathBuf>,
}

/// A loaded mesh with its content hash.
#[derive(Debug, Clone)]
pub struct LoadedMesh {
    pub path: PathBuf,
    pub mesh: Mesh,
    pub hash: String,
}

pub fn load_mesh(path: &Path) -> Result<LoadedMesh, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io("mesh", format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| CliError::io("mesh", format!("{}: not UTF-8 text", path.display())))?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    let parsed = match ext.as_deref() {
        Some("off") => parse_off(&text),
        Some("obj") => parse_obj(&text),
        _ => return Err(CliError::io("mesh", format!("{}: expected a .off or .obj file", path.display()))),
    };
    let mesh = parsed.map_err(|e| {
        let mut err = CliError::at("mesh", e);
        err.cause = format!("{}: {}", path.display(), err.cause);
        err
    })?;
    Ok(LoadedMesh { path: path.to_path_buf(), mesh, hash: hex::encode(Sha256::digest(&bytes)) })
}

impl SpectralCache {
    /// Uses `$FMAPKIT_CACHE_DIR` if set, otherwise `fallback`; with
    /// neither, nothing is cached.
    pub fn from_env(fallback: Option<&Path>) -> Self {
        let dir = std::env::var_os(CACHE_ENV).map(PathBuf::from).or_else(|| fallback.map(Path::to_path_buf));
        SpectralCache { dir }
    }

    pub fn entry(&self, hash: &str, k: usize) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{hash}-k{k}.fmspec")))
    }

    /// Cached decomposition of `mesh` with `k` eigenpairs, computing and
    /// storing it on a miss. The flag reports a hit.
    pub fn spectrum(&self, mesh: &LoadedMesh, k: usize) -> Result<(Spectrum, bool), CliError> {
        let path = self.entry(&mesh.hash, k);
        if let Some(Ok(spec)) = path.as_ref().map(read_spectrum_file::<f64>) {
            if spec.n_vertices() == mesh.mesh.n_vertices() && spec.k() == k {
                return Ok((spec, true));
            }
        }
        let spec = Spectrum::from_mesh(&mesh.mesh, k).stage("spectrum")?;
        if let (Some(dir), Some(path)) = (&self.dir, path) {
            store(dir, &spec, &path)?;
        }
        Ok((spec, false))
    }
}

/// Writes to a private temporary file, then renames it into place so
/// concurrent readers never see a partial entry.
fn store(dir: &Path, spec: &Spectrum, path: &Path) -> Result<(), CliError> {
    static COUNTER: AtomicU64 = AtomicU64::new(0);
    fs::create_dir_all(dir).stage("cache")?;
    let tmp = dir.join(format!(".tmp-{}-{}", std::process::id(), COUNTER.fetch_add(1, Ordering::Relaxed)));
    write_spectrum_file(spec, &tmp).stage("cache")?;
    fs::rename(&tmp, path).stage("cache")
}
