//! On-disk cache of Green tables.
//!
//! File layout: text header lines ending with `end`, then the table values
//! as little-endian `f64` in row-major window order.
//!
//! ```text
//! homlat-green
//! version=1
//! method=quadrature
//! dim=2
//! radius=390
//! tolerance=1e-10
//! end
//! ```

use std::fs;
use std::io::{BufRead, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use homlat_core::green::{green_for_dim, GreenMethod, GreenTable};
use homlat_core::lattice::{LatticeWindow, ScalarField};

const MAGIC: &str = "homlat-green";
const VERSION: u32 = 1;

pub fn cache_path(dir: &Path, dim: usize, radius: usize, tolerance: f64) -> PathBuf {
    dir.join(format!("green_d{dim}_r{radius}_tol{tolerance:e}.bin"))
}

pub fn write_green(path: &Path, table: &GreenTable) -> Result<()> {
    let mut bytes = format!(
        "{MAGIC}\nversion={VERSION}\nmethod={}\ndim={}\nradius={}\ntolerance={:e}\nend\n",
        table.method().name(),
        table.dim(),
        table.radius(),
        table.tolerance()
    )
    .into_bytes();
    for v in table.values().values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_green(path: &Path) -> Result<GreenTable> {
    let raw = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cursor = std::io::Cursor::new(&raw);
    let mut fields = std::collections::BTreeMap::new();
    let mut line = String::new();
    cursor.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        bail!("{} is not a green cache file", path.display());
    }
    loop {
        line.clear();
        if cursor.read_line(&mut line)? == 0 {
            bail!("truncated header in {}", path.display());
        }
        let l = line.trim_end();
        if l == "end" {
            break;
        }
        let (k, v) = l.split_once('=').context("malformed header line")?;
        fields.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| fields.get(k).with_context(|| format!("header lacks {k}"));
    if get("version")?.parse::<u32>()? != VERSION {
        bail!("unsupported green cache version");
    }
    let method = GreenMethod::parse(get("method")?).context("unknown method")?;
    let dim: usize = get("dim")?.parse()?;
    let radius: usize = get("radius")?.parse()?;
    let tolerance: f64 = get("tolerance")?.parse()?;
    let window = LatticeWindow::cube(dim, radius)?;
    let mut rest = Vec::new();
    cursor.read_to_end(&mut rest)?;
    if rest.len() != 8 * window.len() {
        bail!("{} holds {} bytes of values, expected {}", path.display(), rest.len(), 8 * window.len());
    }
    let values: Vec<f64> = rest.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(GreenTable::from_parts(method, tolerance, ScalarField::from_values(window, values)?)?)
}

/// Where a table came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Source {
    Computed,
    Cache,
}

/// Loads a cached table of at least `radius` (restricted to `radius`) or
/// computes and stores one.
pub fn load_or_compute(dir: &Path, dim: usize, radius: usize, tolerance: f64) -> Result<(GreenTable, Source)> {
    if let Ok(entries) = fs::read_dir(dir) {
        let mut best: Option<(usize, PathBuf)> = None;
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            let Some(rest) = name.strip_prefix(&format!("green_d{dim}_r")) else { continue };
            let Some((r, tol)) = rest.split_once("_tol") else { continue };
            let (Ok(r), Some(Ok(t))) = (r.parse::<usize>(), tol.strip_suffix(".bin").map(str::parse::<f64>)) else {
                continue;
            };
            if r >= radius && t <= tolerance && best.as_ref().map_or(true, |(b, _)| r < *b) {
                best = Some((r, e.path()));
            }
        }
        if let Some((_, path)) = best {
            let t = read_green(&path)?;
            return Ok((restrict(&t, radius)?, Source::Cache));
        }
    }
    let t = green_for_dim(dim, radius, tolerance)?;
    write_green(&cache_path(dir, dim, radius, tolerance), &t)?;
    Ok((t, Source::Computed))
}

fn restrict(t: &GreenTable, radius: usize) -> Result<GreenTable> {
    if t.radius() == radius {
        return Ok(t.clone());
    }
    let w = LatticeWindow::cube(t.dim(), radius)?;
    Ok(GreenTable::from_parts(t.method(), t.tolerance(), t.values().resample(w))?)
}
