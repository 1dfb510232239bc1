//! Lattice snapshot dumps: raw little-endian `f64` displacements in
//! row-major window order, with a `key=value` text sidecar (`.meta`).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use homlat_core::lattice::{Axis, LatticeWindow, ScalarField};

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotMeta {
    pub dim: usize,
    /// Points per axis (`[n, 1]` in 1D).
    pub shape: [usize; 2],
    pub half: [usize; 2],
    pub epsilon: f64,
    pub t: f64,
    pub tau: f64,
    pub seed: u64,
    pub realization: usize,
    pub model: String,
    pub model_hash: String,
    pub config_hash: String,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

pub fn write_snapshot(path: &Path, field: &ScalarField, meta: &SnapshotMeta) -> Result<()> {
    let w = field.window();
    if w.shape() != meta.shape || w.dim() != meta.dim {
        bail!("snapshot metadata does not describe the field");
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut bytes = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let side = format!(
        "format=f64le-row-major\ndim={}\nshape={},{}\nhalf={},{}\nepsilon={}\nt={}\ntau={}\nseed={}\nrealization={}\nmodel={}\nmodel_hash={}\nconfig_hash={}\n",
        meta.dim,
        meta.shape[0],
        meta.shape[1],
        meta.half[0],
        meta.half[1],
        meta.epsilon,
        meta.t,
        meta.tau,
        meta.seed,
        meta.realization,
        meta.model,
        meta.model_hash,
        meta.config_hash
    );
    fs::write(sidecar_path(path), side)?;
    Ok(())
}

fn pair(s: &str) -> Result<[usize; 2]> {
    let (a, b) = s.split_once(',').context("expected a,b")?;
    Ok([a.parse()?, b.parse()?])
}

pub fn read_snapshot(path: &Path) -> Result<(ScalarField, SnapshotMeta)> {
    let side = fs::read_to_string(sidecar_path(path))
        .with_context(|| format!("snapshot {} has no sidecar", path.display()))?;
    let kv: BTreeMap<&str, &str> = side.lines().filter_map(|l| l.split_once('=')).collect();
    let get = |k: &str| kv.get(k).copied().with_context(|| format!("sidecar lacks {k}"));
    if get("format")? != "f64le-row-major" {
        bail!("unknown snapshot format");
    }
    let meta = SnapshotMeta {
        dim: get("dim")?.parse()?,
        shape: pair(get("shape")?)?,
        half: pair(get("half")?)?,
        epsilon: get("epsilon")?.parse()?,
        t: get("t")?.parse()?,
        tau: get("tau")?.parse()?,
        seed: get("seed")?.parse()?,
        realization: get("realization")?.parse()?,
        model: get("model")?.to_string(),
        model_hash: get("model_hash")?.to_string(),
        config_hash: get("config_hash")?.to_string(),
    };
    let window = LatticeWindow::new(meta.dim, meta.half)?;
    if window.shape() != meta.shape {
        bail!("sidecar shape disagrees with its half extents");
    }
    let raw = fs::read(path)?;
    if raw.len() != 8 * window.len() {
        bail!("snapshot holds {} bytes, expected {}", raw.len(), 8 * window.len());
    }
    let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok((ScalarField::from_values(window, values)?, meta))
}

/// Sidecar metadata for a field on `window`.
pub fn meta_for(window: &LatticeWindow) -> ([usize; 2], [usize; 2]) {
    let half2 = if window.dim() == 1 { 0 } else { window.half_extent(Axis::X2) };
    (window.shape(), [window.half_extent(Axis::X1), half2])
}
