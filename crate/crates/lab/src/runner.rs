//! ε sweeps: masses, wave solution, lattice integration and every metric, one
//! ε at a time with all realizations advanced in lockstep so the wave fields
//! of each sample time are built once.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use homlat_core::analysis::{
    assemble_residual, coarse_grain_sample, error_sample, microstate_error, residual_field, residual_terms,
    ApproximateSolution, ErrorRecord, ErrorSeries, SliceSpec,
};
use homlat_core::corrector::verify_corrector_pde;
use homlat_core::green::GreenTable;
use homlat_core::mass::{fluctuation_field, sample_masses};
use homlat_core::sim::{boundary_energy, hamiltonian, initialize, Integrator, SimConfig};
use homlat_core::wave::{initial_data, InitialData};
use sha2::{Digest, Sha256};

use crate::cache::{load_or_compute, Source};
use crate::config::ExperimentConfig;
use crate::csv::{partial_path, read_series, SeriesWriter};
use crate::snapshot::{meta_for, write_snapshot, SnapshotMeta};

pub mod metric {
    pub const AED: &str = "aed";
    pub const AEV: &str = "aev";
    pub const AED_REL: &str = "aed_rel";
    pub const AEV_REL: &str = "aev_rel";
    pub const H_DRIFT: &str = "h_drift";
    pub const BOUNDARY: &str = "boundary_ratio";
    pub const RESIDUAL: &str = "residual_sup";
    pub const TERMS: [&str; 5] = ["res_term1", "res_term2", "res_term3", "res_term4", "res_term5"];
    pub const CONSISTENCY: &str = "residual_consistency";
    pub const PDE: &str = "corrector_pde";
    pub const MICROSTATE: &str = "microstate";
    pub const MICRO_C: &str = "microstate_c";
    pub const CG_U: &str = "cg_u";
    pub const CG_UT: &str = "cg_ut";
}

pub const H_DRIFT_LIMIT: f64 = 1e-4;
pub const CONSISTENCY_LIMIT: f64 = 1e-8;
pub const MICRO_C_RATIO_LIMIT: f64 = 4.0;

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    /// Green cache directory; defaults to `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    pub override_budget: bool,
    pub quiet: bool,
}

/// Projected cost of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub memory_mb: f64,
    pub site_steps: f64,
}

pub fn estimate(cfg: &ExperimentConfig) -> Result<Estimate> {
    let mut peak: f64 = 0.0;
    let mut steps = 0.0;
    for &e in &cfg.epsilons {
        let half = cfg.window_half(e)? as f64;
        let sites = (2.0 * half + 1.0).powi(cfg.dim as i32);
        let q = homlat_core::analysis::lattice_stride(e) as f64;
        let grid = (2.0 * (half + 2.0) * q).powi(cfg.dim as i32);
        // integrator arrays, state copies and metric temporaries per realization,
        // spectra and sampled fields shared by all
        let bytes = cfg.realizations as f64 * sites * 8.0 * 12.0 + grid * 16.0 * 6.0 + sites * 8.0 * 16.0;
        peak = peak.max(bytes);
        steps += cfg.realizations as f64 * sites * (cfg.horizon / e / cfg.dt(e)).ceil();
    }
    Ok(Estimate { memory_mb: peak / (1024.0 * 1024.0), site_steps: steps })
}

/// One pass/fail invariant of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub series: ErrorSeries,
    pub csv: PathBuf,
    pub checks: Vec<Check>,
    pub green: Option<Source>,
    pub resumed: Vec<f64>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn model_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(serde_json::to_string(&cfg.model).expect("model serializes").as_bytes()))
}

pub fn metadata(cfg: &ExperimentConfig) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("name".into(), cfg.name.clone());
    m.insert("config_hash".into(), cfg.hash());
    m.insert("config".into(), cfg.canonical_json());
    m.insert("model".into(), cfg.model.label().into());
    m.insert("model_hash".into(), model_hash(cfg));
    m.insert("dim".into(), cfg.dim.to_string());
    m.insert("horizon".into(), cfg.horizon.to_string());
    m.insert("sigma".into(), cfg.sigma.to_string());
    m.insert("sample_count".into(), cfg.sample_count.to_string());
    m.insert("sup_over".into(), "sample_times".into());
    m.insert("aggregation".into(), "median".into());
    m.insert(
        "seeds".into(),
        cfg.seeds().iter().map(u64::to_string).collect::<Vec<_>>().join(" "),
    );
    m.insert("initial_data".into(), cfg.initial_data.clone());
    m.insert("generator".into(), format!("homlat {}", env!("CARGO_PKG_VERSION")));
    m
}

#[derive(Clone, Debug, Default)]
struct Acc {
    aed: f64,
    aev: f64,
    u_norm: f64,
    ut_norm: f64,
    h: Vec<f64>,
    boundary: f64,
    residual: f64,
    terms: [f64; 5],
    consistency: f64,
    micro: f64,
    cg: (f64, f64),
}

fn log(opts: &RunOptions, msg: impl AsRef<str>) {
    if !opts.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

/// Runs one ε for every realization and returns its rows in fixed order.
fn run_epsilon(
    cfg: &ExperimentConfig,
    eps: f64,
    data: &dyn InitialData,
    green: Option<&GreenTable>,
    opts: &RunOptions,
) -> Result<Vec<ErrorRecord>> {
    let seeds = cfg.seeds();
    let mut sim = SimConfig::for_data(
        eps,
        cfg.horizon,
        data,
        cfg.model.bounds(),
        cfg.sample_count,
        cfg.safety,
        cfg.dt_factor,
    )?;
    sim.dt = cfg.dt(eps);
    sim.validate(cfg.model.bounds().0, Some((data.support_radius(), 1.0 / cfg.model.bounds().0.sqrt())))?;
    let window = sim.window;
    let leading = ApproximateSolution::leading(data, cfg.model.mean(), eps, cfg.sigma, cfg.horizon, window)?;
    let mut masses = Vec::with_capacity(seeds.len());
    let mut integrators = Vec::with_capacity(seeds.len());
    let mut corrected = Vec::new();
    let mut pde = Vec::new();
    for &seed in &seeds {
        let mf = sample_masses(&cfg.model, window, seed)?;
        integrators.push(Integrator::new(initialize(data, eps, window)?, &mf.masses)?);
        if cfg.metrics.residual {
            let c = leading.with_masses(&mf, green)?;
            let report = verify_corrector_pde(c.corrector().expect("corrected variant"), &fluctuation_field(&mf));
            pde.push(report.max_residual);
            corrected.push(c);
        }
        masses.push(mf);
    }
    let spec = SliceSpec {
        max_order: if cfg.metrics.residual { 4 } else { 1 },
        laplacian: cfg.metrics.residual,
        fine: cfg.metrics.coarse_grain,
    };
    let snap_steps: Vec<usize> = match &cfg.snapshots {
        Some(s) if s.epsilon == eps => s
            .taus
            .iter()
            .map(|tau| ((tau / cfg.horizon) * (cfg.sample_count - 1) as f64).round() as usize)
            .collect(),
        _ => Vec::new(),
    };
    let mut acc = vec![Acc::default(); seeds.len()];
    let started = Instant::now();
    for (k, &t) in sim.sample_times.iter().enumerate() {
        for it in integrators.iter_mut() {
            it.advance_to(t, sim.dt)?;
        }
        let slice = leading.slice(t, spec)?;
        for (r, it) in integrators.iter().enumerate() {
            let state = it.state();
            let m = &masses[r].masses;
            let h = hamiltonian(&state, m);
            let b = boundary_energy(&state, m, sim.safety);
            if h > 0.0 && b / h > sim.boundary_limit {
                return Err(homlat_core::Error::BoundaryBreach { t, ratio: b / h, limit: sim.boundary_limit }.into());
            }
            let a = &mut acc[r];
            a.h.push(h);
            a.boundary = a.boundary.max(if h > 0.0 { b / h } else { 0.0 });
            let e = error_sample(&leading, &slice, &state)?;
            a.aed = a.aed.max(e.disp);
            a.aev = a.aev.max(e.vel);
            a.u_norm = a.u_norm.max(e.u_norm);
            a.ut_norm = a.ut_norm.max(e.ut_norm);
            if cfg.metrics.residual {
                let c = &corrected[r];
                let direct = residual_field(c, &slice, m)?;
                let terms = residual_terms(c, &slice, m)?;
                let gap = direct.sub(&assemble_residual(&terms)).max_abs();
                let scale = direct.max_abs();
                a.consistency = a.consistency.max(if scale > 0.0 { gap / scale } else { gap });
                a.residual = a.residual.max(direct.norm_l2());
                for (slot, f) in a.terms.iter_mut().zip(&terms) {
                    *slot = slot.max(f.norm_l2());
                }
                a.micro = a.micro.max(microstate_error(c, &slice, &state)?);
            }
            if cfg.metrics.coarse_grain {
                let (cu, cut) = coarse_grain_sample(&leading, &slice, &state)?;
                a.cg = (a.cg.0.max(cu), a.cg.1.max(cut));
            }
            if snap_steps.contains(&k) {
                let sn = cfg.snapshots.as_ref().expect("snapshot spec");
                let wanted = if sn.realizations.is_empty() { r == 0 } else { sn.realizations.contains(&r) };
                if wanted {
                    let (shape, half) = meta_for(&window);
                    let meta = SnapshotMeta {
                        dim: cfg.dim,
                        shape,
                        half,
                        epsilon: eps,
                        t,
                        tau: eps * t,
                        seed: seeds[r],
                        realization: r,
                        model: cfg.model.label().into(),
                        model_hash: model_hash(cfg),
                        config_hash: cfg.hash(),
                    };
                    let path = opts
                        .out_dir
                        .join("snapshots")
                        .join(format!("{}_eps{}_r{}_tau{:.4}.f64", cfg.name, eps, r, eps * t));
                    write_snapshot(&path, &state.u, &meta)?;
                }
            }
        }
    }
    log(
        opts,
        format!(
            "  ε = {eps}: window {}x{}, {} realizations, {:.1} s",
            window.shape()[0],
            window.shape()[1],
            seeds.len(),
            started.elapsed().as_secs_f64()
        ),
    );

    let mut rows = Vec::new();
    for (r, a) in acc.iter().enumerate() {
        let mut put = |metric: &str, value: f64| {
            rows.push(ErrorRecord { epsilon: eps, realization: r, seed: seeds[r], metric: metric.into(), value });
        };
        put(metric::AED, a.aed);
        put(metric::AEV, a.aev);
        put(metric::AED_REL, a.aed / a.u_norm);
        put(metric::AEV_REL, a.aev / a.ut_norm);
        let h0 = a.h[0];
        put(metric::H_DRIFT, a.h.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max) / h0.abs());
        put(metric::BOUNDARY, a.boundary);
        if cfg.metrics.residual {
            put(metric::RESIDUAL, a.residual);
            for (name, v) in metric::TERMS.iter().zip(a.terms) {
                put(name, v);
            }
            put(metric::CONSISTENCY, a.consistency);
            put(metric::PDE, pde[r]);
            put(metric::MICROSTATE, a.micro);
            put(metric::MICRO_C, if a.residual > 0.0 { a.micro * eps / a.residual } else { 0.0 });
        }
        if cfg.metrics.coarse_grain {
            put(metric::CG_U, a.cg.0);
            put(metric::CG_UT, a.cg.1);
        }
    }
    for r in &rows {
        if !(r.value.is_finite() && r.value >= 0.0) {
            bail!("metric {} = {} at ε = {eps}, realization {}", r.metric, r.value, r.realization);
        }
    }
    Ok(rows)
}

fn max_of(series: &ErrorSeries, metric: &str) -> f64 {
    series.values(metric).iter().map(|(_, v)| *v).fold(0.0, f64::max)
}

/// Invariants declared for every sweep.
pub fn checks(cfg: &ExperimentConfig, series: &ErrorSeries) -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |name: &str, value: f64, limit: f64, pass: bool| {
        out.push(Check { name: name.into(), value, limit, pass });
    };
    let d = max_of(series, metric::H_DRIFT);
    push("hamiltonian drift", d, H_DRIFT_LIMIT, d <= H_DRIFT_LIMIT);
    let b = max_of(series, metric::BOUNDARY);
    push("boundary energy ratio", b, homlat_core::sim::BOUNDARY_ENERGY_LIMIT, b <= homlat_core::sim::BOUNDARY_ENERGY_LIMIT);
    for rel in [metric::AED_REL, metric::AEV_REL] {
        let med = series.medians(rel);
        // medians are listed from the largest ε down
        let worst = med.windows(2).map(|w| w[1].1 / w[0].1).fold(0.0, f64::max);
        push(&format!("{rel} shrinks with ε"), worst, 1.0, med.len() < 2 || worst < 1.0);
    }
    if cfg.metrics.residual {
        let p = max_of(series, metric::PDE);
        let lim = homlat_core::corrector::CORRECTOR_PDE_TOLERANCE;
        push("corrector pde", p, lim, p <= lim);
        let c = max_of(series, metric::CONSISTENCY);
        push("residual five-term consistency", c, CONSISTENCY_LIMIT, c <= CONSISTENCY_LIMIT);
        if !cfg.model.is_constant() {
            let med: Vec<f64> = series.medians(metric::MICRO_C).into_iter().map(|(_, v)| v).collect();
            let hi = med.iter().cloned().fold(0.0, f64::max);
            let lo = med.iter().cloned().fold(f64::INFINITY, f64::min);
            let ratio = hi / lo;
            push("microstate constant stable", ratio, MICRO_C_RATIO_LIMIT, ratio.is_finite() && ratio <= MICRO_C_RATIO_LIMIT);
        }
    }
    out
}

/// Runs (or resumes) the sweep of `cfg`, writing `<out_dir>/<name>.csv`.
pub fn run_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let est = estimate(cfg)?;
    if !opts.override_budget
        && (est.memory_mb > cfg.budget.max_memory_mb || est.site_steps > cfg.budget.max_site_steps)
    {
        bail!(
            "projected cost ({:.0} MB, {:.2e} site steps) exceeds the budget ({:.0} MB, {:.2e}); pass --override-budget",
            est.memory_mb,
            est.site_steps,
            cfg.budget.max_memory_mb,
            cfg.budget.max_site_steps
        );
    }
    let data = initial_data(&cfg.initial_data)?;
    let csv = opts.out_dir.join(format!("{}.csv", cfg.name));
    let meta = metadata(cfg);

    // finished output with the same config: nothing to do
    if csv.exists() {
        let done = read_series(&csv)?;
        if done.series.metadata.get("config_hash") == Some(&cfg.hash())
            && done.series.metadata.get("status").map(String::as_str) == Some("complete")
        {
            log(opts, format!("{}: reusing complete {}", cfg.name, csv.display()));
            let checks = checks(cfg, &done.series);
            return Ok(RunOutcome { series: done.series, csv, checks, green: None, resumed: cfg.epsilons.clone() });
        }
    }

    let mut blocks: Vec<(f64, Vec<ErrorRecord>)> = Vec::new();
    let mut writer = None;
    let partial = partial_path(&csv);
    if partial.exists() {
        let prev = read_series(&partial)?;
        if prev.series.metadata.get("config_hash") == Some(&cfg.hash()) {
            for e in &prev.complete {
                let rows = prev.series.records.iter().filter(|r| r.epsilon == *e).cloned().collect();
                blocks.push((*e, rows));
            }
            writer = Some(SeriesWriter::resume(&csv)?);
        }
    }
    let mut writer = match writer {
        Some(w) => w,
        None => SeriesWriter::create(&csv, &meta)?,
    };
    let resumed: Vec<f64> = blocks.iter().map(|(e, _)| *e).collect();

    let (green, source) = if cfg.needs_green() {
        let dir = opts.cache_dir.clone().unwrap_or_else(|| opts.out_dir.join("cache"));
        let radius = cfg.green_radius()?;
        let started = Instant::now();
        let (g, s) = load_or_compute(&dir, cfg.dim, radius, cfg.green_tolerance)
            .with_context(|| format!("green table of radius {radius}"))?;
        log(opts, format!("{}: green radius {radius} ({s:?}, {:.1} s)", cfg.name, started.elapsed().as_secs_f64()));
        (Some(g), Some(s))
    } else {
        (None, None)
    };

    for eps in cfg.sweep_order() {
        if resumed.contains(&eps) {
            continue;
        }
        let rows = run_epsilon(cfg, eps, data.as_ref(), green.as_ref(), opts)
            .with_context(|| format!("{} at ε = {eps}", cfg.name))?;
        writer.write_block(eps, &rows)?;
        blocks.push((eps, rows));
    }
    let order = cfg.sweep_order();
    blocks.sort_by_key(|(e, _)| order.iter().position(|o| o == e));
    let series = ErrorSeries { metadata: meta.clone(), records: blocks.into_iter().flat_map(|(_, r)| r).collect() };
    writer.finish(&meta, &series)?;
    let checks = checks(cfg, &series);
    Ok(RunOutcome { series, csv, checks, green: source, resumed })
}

/// Loads every `*.json` config of a directory, sorted by file name.
pub fn load_config_dir(dir: &Path) -> Result<Vec<ExperimentConfig>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| ExperimentConfig::load(p)).collect()
}
