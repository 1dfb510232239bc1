//! Experiment configuration files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use homlat_core::analysis::{cutoff_radius, DEFAULT_SIGMA};
use homlat_core::mass::MassModel;
use homlat_core::sim::{max_stable_dt, window_half_extent};
use homlat_core::wave::initial_data;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

fn default_epsilons() -> Vec<f64> {
    vec![0.5, 0.25, 0.125, 0.0625, 0.03125]
}
fn default_realizations() -> usize {
    10
}
fn default_horizon() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    DEFAULT_SIGMA
}
fn default_dt_factor() -> f64 {
    0.25
}
fn default_dt_eps_ref() -> f64 {
    0.0625
}
fn default_sample_count() -> usize {
    33
}
fn default_safety() -> usize {
    4
}
fn default_green_tolerance() -> f64 {
    1e-10
}
fn default_true() -> bool {
    true
}

/// Optional metric groups beyond the absolute errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricSet {
    /// Residual norms, the five-term split, and the microstate constant.
    #[serde(default = "default_true")]
    pub residual: bool,
    /// Coarse-graining errors for `U` and `∂_τ U`.
    #[serde(default)]
    pub coarse_grain: bool,
}

impl Default for MetricSet {
    fn default() -> Self {
        Self { residual: true, coarse_grain: false }
    }
}

/// Resource ceiling checked before a run starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub max_memory_mb: f64,
    /// Lattice site updates summed over the sweep.
    pub max_site_steps: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_memory_mb: 8192.0, max_site_steps: 2e11 }
    }
}

/// Lattice snapshots to dump for side-by-side plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSpec {
    pub epsilon: f64,
    /// Macroscopic times `τ`; each is dumped at the nearest sample time.
    pub taus: Vec<f64>,
    #[serde(default)]
    pub realizations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub name: String,
    pub model: MassModel,
    pub dim: usize,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_realizations")]
    pub realizations: usize,
    /// Seed of realization `r` is `seed + r` unless `seeds` lists them.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    pub initial_data: String,
    /// `dt = dt_factor · √(a/2)`
    #[serde(default = "default_dt_factor")]
    pub dt_factor: f64,
    /// Above this ε the step shrinks like `1/ε`: long-wave data put more
    /// energy near the lattice cutoff there, where the Verlet energy band is
    /// widest.
    #[serde(default = "default_dt_eps_ref")]
    pub dt_eps_ref: f64,
    #[serde(default = "default_sample_count")]
    pub sample_count: usize,
    /// Boundary shells kept free of energy.
    #[serde(default = "default_safety")]
    pub safety: usize,
    #[serde(default = "default_green_tolerance")]
    pub green_tolerance: f64,
    #[serde(default)]
    pub metrics: MetricSet,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub snapshots: Option<SnapshotSpec>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate().with_context(|| format!("validating {}", path.display()))?;
        Ok(cfg)
    }

    pub fn seeds(&self) -> Vec<u64> {
        match &self.seeds {
            Some(s) => s.clone(),
            None => (0..self.realizations as u64).map(|r| self.seed.wrapping_add(r)).collect(),
        }
    }

    /// Canonical single-line JSON.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Sweep order: heaviest (smallest) ε first.
    pub fn sweep_order(&self) -> Vec<f64> {
        let mut e = self.epsilons.clone();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            bail!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version);
        }
        if !(self.dim == 1 || self.dim == 2) {
            bail!("dim must be 1 or 2");
        }
        self.model.validate()?;
        let data = initial_data(&self.initial_data)?;
        if data.dim() != self.dim {
            bail!("initial data {} is {}-dimensional, config says {}", self.initial_data, data.dim(), self.dim);
        }
        if self.epsilons.is_empty() {
            bail!("no ε values");
        }
        let mut seen = self.epsilons.clone();
        seen.sort_by(f64::total_cmp);
        seen.dedup();
        if seen.len() != self.epsilons.len() {
            bail!("duplicate ε values");
        }
        for &e in &self.epsilons {
            if !(e > 0.0 && e <= 0.5) {
                bail!("ε = {e} must lie in (0, 1/2]");
            }
        }
        if self.realizations == 0 {
            bail!("realizations must be positive");
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.realizations {
                bail!("{} seeds listed for {} realizations", s.len(), self.realizations);
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bail!("horizon must be positive");
        }
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            bail!("σ must lie in (0, 1)");
        }
        let (a, _) = self.model.bounds();
        if !(self.dt_factor > 0.0 && self.dt_factor * (a / 2.0).sqrt() <= max_stable_dt(a)) {
            bail!("dt_factor {} violates the stability bound (at most 0.5)", self.dt_factor);
        }
        if !(self.dt_eps_ref > 0.0 && self.dt_eps_ref.is_finite()) {
            bail!("dt_eps_ref must be positive");
        }
        if self.sample_count < 2 {
            bail!("at least two sample times are needed");
        }
        if !(self.green_tolerance > 0.0 && self.green_tolerance <= 1e-8) {
            bail!("green_tolerance must lie in (0, 1e-8]");
        }
        if let Some(sn) = &self.snapshots {
            if !self.epsilons.contains(&sn.epsilon) {
                bail!("snapshot ε = {} is not swept", sn.epsilon);
            }
            if let Some(&r) = sn.realizations.iter().find(|&&r| r >= self.realizations) {
                bail!("snapshot realization {r} out of range");
            }
        }
        Ok(())
    }

    /// `dt = dt_factor · √(a/2) · min(1, dt_eps_ref / ε)`
    pub fn dt(&self, eps: f64) -> f64 {
        let (a, _) = self.model.bounds();
        self.dt_factor * (a / 2.0).sqrt() * (self.dt_eps_ref / eps).min(1.0)
    }

    /// Window half extent at `eps`.
    pub fn window_half(&self, eps: f64) -> Result<usize> {
        let data = initial_data(&self.initial_data)?;
        let (a, _) = self.model.bounds();
        Ok(window_half_extent(eps, self.horizon, data.support_radius(), 1.0 / a.sqrt(), self.safety))
    }

    /// Green table radius needed by the correctors of the whole sweep.
    pub fn green_radius(&self) -> Result<usize> {
        let c = self.model.mean().powf(-0.5);
        let mut need = 0;
        for &e in &self.epsilons {
            let r = cutoff_radius(c, self.horizon, e, self.sigma).floor() as usize;
            need = need.max(self.window_half(e)? + 1 + r);
        }
        Ok(need)
    }

    /// Whether correctors (and hence a Green table) are needed.
    pub fn needs_green(&self) -> bool {
        self.metrics.residual && !self.model.is_constant()
    }
}
