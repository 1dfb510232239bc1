//! Restricted correctors `χ_r = Σ_{k ∈ D(0,⌊r⌋)} φ(· - k) z(k)` and the
//! empirical audit of their sub-Gaussian tails and growth.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::convolve_full;
use crate::green::{GreenTable, Operator};
use crate::lattice::{Axis, LatticeWindow, ScalarField, Site};
use crate::mass::{fluctuation_field, sample_masses, MassModel};

/// `χ_r` on an evaluation window plus a one-site halo, so every operator image
/// is exact on the evaluation window.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorField {
    r: f64,
    radius: usize,
    window: LatticeWindow,
    halo: ScalarField,
}

impl CorrectorField {
    pub fn r(&self) -> f64 {
        self.r
    }

    /// `⌊r⌋`
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    /// `χ_r(j)` for `j` in the evaluation window or its halo, 0 elsewhere.
    pub fn value(&self, j: Site) -> f64 {
        self.halo.get(j)
    }

    pub fn chi(&self) -> ScalarField {
        self.applied(Operator::Identity)
    }

    pub fn applied(&self, op: Operator) -> ScalarField {
        ScalarField::from_fn(self.window, |j| op.eval(j, |s| self.halo.get(s)))
    }

    pub fn applied_all(&self) -> BTreeMap<Operator, ScalarField> {
        Operator::all(self.window.dim()).into_iter().map(|op| (op, self.applied(op))).collect()
    }

    /// `Δχ_r` on the evaluation window.
    pub fn laplacian(&self) -> ScalarField {
        let lap = self.halo.laplacian();
        lap.resample(self.window)
    }

    /// Constant-zero corrector (used for constant masses).
    pub fn zero(r: f64, window: LatticeWindow) -> Result<Self> {
        let halo_window = window.grown(1)?;
        Ok(Self { r, radius: r.floor() as usize, window, halo: ScalarField::zeros(halo_window) })
    }
}

fn disk_radius(r: f64) -> Result<usize> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidConfig(format!("corrector radius {r} must be finite and nonnegative")));
    }
    Ok(r.floor() as usize)
}

/// Values of `z` on `D(0, radius)` as a dense row-major block.
fn disk_block(z: &ScalarField, radius: usize, dim: usize) -> Result<(Vec<f64>, [usize; 2])> {
    let zw = z.window();
    let corner: Site = if dim == 1 { [radius as i64, 0] } else { [radius as i64, radius as i64] };
    if !zw.contains(corner) || zw.dim() != dim {
        return Err(Error::ShapeMismatch(format!(
            "fluctuation field on {:?} does not cover D(0, {radius})",
            zw
        )));
    }
    let r = radius as i64;
    let r2 = if dim == 1 { 0 } else { r };
    let shape = [2 * radius + 1, if dim == 1 { 1 } else { 2 * radius + 1 }];
    let mut out = Vec::with_capacity(shape[0] * shape[1]);
    for k1 in -r..=r {
        for k2 in -r2..=r2 {
            out.push(z.get([k1, k2]));
        }
    }
    Ok((out, shape))
}

/// `χ_r` by zero-padded FFT convolution.
pub fn corrector(green: &GreenTable, z: &ScalarField, r: f64, eval: LatticeWindow) -> Result<CorrectorField> {
    let dim = eval.dim();
    if green.dim() != dim {
        return Err(Error::ShapeMismatch("green table and evaluation window differ in dimension".into()));
    }
    let radius = disk_radius(r)?;
    let halo_window = eval.grown(1)?;
    let (zb, zs) = disk_block(z, radius, dim)?;

    let reach = Axis::all(dim).iter().map(|&a| halo_window.half_extent(a)).max().unwrap_or(0) + radius;
    if reach > green.radius() {
        return Err(Error::GreenCoverage { radius: green.radius(), needed: reach });
    }
    let g = reach as i64;
    let g2 = if dim == 1 { 0 } else { g };
    let gs = [2 * reach + 1, if dim == 1 { 1 } else { 2 * reach + 1 }];
    let mut gb = Vec::with_capacity(gs[0] * gs[1]);
    for d1 in -g..=g {
        for d2 in -g2..=g2 {
            gb.push(green.value([d1, d2]));
        }
    }
    let (full, fs) = convolve_full(&zb, zs, &gb, gs);
    // out[p] with p = (k + R) + (d + G) and j = k + d
    let off = (radius + reach) as i64;
    let values = halo_window
        .sites()
        .map(|j| {
            let p1 = (j[0] + off) as usize;
            let p2 = if dim == 1 { 0 } else { (j[1] + off) as usize };
            full[p1 * fs[1] + p2]
        })
        .collect();
    let halo = ScalarField::from_values(halo_window, values)?;
    Ok(CorrectorField { r, radius, window: eval, halo })
}

/// Direct double sum, `O(|eval| · |D|)`. Test oracle and small-case fallback.
pub fn corrector_naive(green: &GreenTable, z: &ScalarField, r: f64, eval: LatticeWindow) -> Result<CorrectorField> {
    let dim = eval.dim();
    let radius = disk_radius(r)?;
    let halo_window = eval.grown(1)?;
    let (zb, _) = disk_block(z, radius, dim)?;
    let rr = radius as i64;
    let r2 = if dim == 1 { 0 } else { rr };
    let ks: Vec<(Site, f64)> = (-rr..=rr)
        .flat_map(|k1| (-r2..=r2).map(move |k2| [k1, k2]))
        .zip(zb)
        .filter(|(_, v)| *v != 0.0)
        .collect();
    let mut err = None;
    let values: Vec<f64> = halo_window
        .sites()
        .map(|j| {
            let mut s = 0.0;
            for &(k, zk) in &ks {
                match green.get([j[0] - k[0], j[1] - k[1]]) {
                    Some(p) => s += p * zk,
                    None => err = Some(j),
                }
            }
            s
        })
        .collect();
    if let Some(j) = err {
        let needed = (j[0].abs().max(j[1].abs()) + rr) as usize;
        return Err(Error::GreenCoverage { radius: green.radius(), needed });
    }
    Ok(CorrectorField { r, radius, window: eval, halo: ScalarField::from_values(halo_window, values)? })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeReport {
    /// `max |Δχ_r - z 1_{D(0,⌊r⌋)}|` over the evaluation window.
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub const CORRECTOR_PDE_TOLERANCE: f64 = 1e-8;

/// Checks `Δχ_r = z` on `D(0,⌊r⌋)` and `Δχ_r = 0` elsewhere on the window.
pub fn verify_corrector_pde(cf: &CorrectorField, z: &ScalarField) -> PdeReport {
    let lap = cf.laplacian();
    let r = cf.radius as u64;
    let dev: Vec<f64> = cf
        .window
        .sites()
        .map(|j| {
            let inside = j[0].unsigned_abs() <= r && j[1].unsigned_abs() <= r;
            let target = if inside { z.get(j) } else { 0.0 };
            (lap.get(j) - target).abs()
        })
        .collect();
    let max_residual = dev.into_iter().fold(0.0, f64::max);
    PdeReport { max_residual, tolerance: CORRECTOR_PDE_TOLERANCE, pass: max_residual <= CORRECTOR_PDE_TOLERANCE }
}

/// Corrector of a layered fluctuation `z(j) = ζ(j_a)` through the axis-summed
/// Green function `Φ_r(j_t, d) = Σ_{s = j_t - r}^{j_t + r} φ(d e_a + s e_t)`:
/// `χ_r(j) = Σ_{|k| ≤ r} ζ(k) Φ_r(j_t, j_a - k)`.
pub fn layered_corrector(
    green: &GreenTable,
    zeta: impl Fn(i64) -> f64,
    random_axis: Axis,
    r: f64,
    eval: LatticeWindow,
) -> Result<ScalarField> {
    if eval.dim() != 2 || green.dim() != 2 {
        return Err(Error::InvalidWindow("layered corrector is two-dimensional".into()));
    }
    let radius = disk_radius(r)? as i64;
    let a = random_axis.index();
    let t = random_axis.other().index();
    let reach = eval.half_extent(Axis::X1).max(eval.half_extent(Axis::X2)) as i64 + radius;
    if reach > green.radius() as i64 {
        return Err(Error::GreenCoverage { radius: green.radius(), needed: reach as usize });
    }
    let at = |d: i64, s: i64| {
        let mut j = [0, 0];
        j[a] = d;
        j[t] = s;
        green.value(j)
    };
    let zs: Vec<f64> = (-radius..=radius).map(&zeta).collect();
    let values: Vec<f64> = (0..eval.len())
        .into_par_iter()
        .map(|i| {
            let j = eval.site(i);
            let mut total = 0.0;
            for (idx, k) in (-radius..=radius).enumerate() {
                let d = j[a] - k;
                let phi_sum: f64 = (j[t] - radius..=j[t] + radius).map(|s| at(d, s)).sum();
                total += zs[idx] * phi_sum;
            }
            total
        })
        .collect();
    ScalarField::from_values(eval, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailAuditConfig {
    pub radii: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    /// Thresholds `t = s · |a - b| · ‖Lφ‖_{D(0,r)}` for each multiplier `s`.
    pub multipliers: Vec<f64>,
    /// Radius at which the tail exceedances are checked.
    pub tail_radius: f64,
    pub growth_ratio_limit: f64,
}

impl Default for TailAuditConfig {
    fn default() -> Self {
        Self {
            radii: vec![8.0, 16.0, 32.0, 64.0],
            realizations: 500,
            seed: 0x5eed,
            multipliers: vec![0.5, 1.0, 1.5, 2.0],
            tail_radius: 16.0,
            growth_ratio_limit: 4.0,
        }
    }
}

pub const MIN_AUDIT_REALIZATIONS: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailRow {
    pub operator: Operator,
    pub r: f64,
    pub multiplier: f64,
    pub threshold: f64,
    pub exceed_fraction: f64,
    pub bound: f64,
    pub mc_stderr: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub operator: Operator,
    /// Per-radius medians over realizations of `G(r)`.
    pub radii: Vec<f64>,
    pub median_g: Vec<f64>,
    pub max_g: Vec<f64>,
    pub ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailAudit {
    pub config: TailAuditConfig,
    pub tails: Vec<TailRow>,
    pub growth: Vec<GrowthRow>,
    pub pass: bool,
}

fn log_plus(x: f64) -> f64 {
    if x > 1.0 {
        x.ln()
    } else {
        0.0
    }
}

/// Envelope of `|Lχ_r(j)|` from the almost-sure growth bounds.
pub fn growth_envelope(op: Operator, j: Site, r: f64) -> f64 {
    let rho = ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt();
    match op {
        Operator::Centered(_) => log_plus(rho) + r.ln(),
        _ => r * (log_plus(rho).powf(1.5) + r.ln().powf(1.5)),
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Monte-Carlo audit of the tail estimate and the growth envelopes.
pub fn tail_bound_audit(model: &MassModel, green: &GreenTable, cfg: &TailAuditConfig) -> Result<TailAudit> {
    model.validate()?;
    if cfg.realizations < MIN_AUDIT_REALIZATIONS {
        return Err(Error::Insufficient(format!(
            "{} realizations requested, the audit needs at least {MIN_AUDIT_REALIZATIONS}",
            cfg.realizations
        )));
    }
    if cfg.radii.is_empty() || cfg.radii.iter().any(|&r| r < 2.0) {
        return Err(Error::InvalidConfig("audit radii must be nonempty and >= 2".into()));
    }
    let ops = [Operator::Identity, Operator::Shift(Axis::X1, crate::lattice::Sign::Plus), Operator::Centered(Axis::X1), Operator::Centered(Axis::X2)];
    let mut radii: Vec<f64> = cfg.radii.clone();
    if !radii.contains(&cfg.tail_radius) {
        radii.push(cfg.tail_radius);
    }
    let r_max = radii.iter().fold(0.0f64, |m, &r| m.max(r)).floor() as usize;
    let sample_window = LatticeWindow::square(r_max.max(1))?;

    // per realization, per radius: (L χ_r(0) for each op, G(r) for each op)
    type PerRadius = Vec<(Vec<f64>, Vec<f64>)>;
    let per_real: Vec<PerRadius> = (0..cfg.realizations)
        .into_par_iter()
        .map(|i| -> Result<PerRadius> {
            let mf = sample_masses(model, sample_window, cfg.seed.wrapping_add(i as u64))?;
            let z = fluctuation_field(&mf);
            radii
                .iter()
                .map(|&r| {
                    let rr = r.floor() as usize;
                    let eval = LatticeWindow::square(rr)?;
                    let cf = corrector(green, &z, r, eval)?;
                    let mut at_origin = Vec::with_capacity(ops.len());
                    let mut growth = Vec::with_capacity(ops.len());
                    for &op in &ops {
                        let img = cf.applied(op);
                        at_origin.push(img.get([0, 0]));
                        let g = eval
                            .sites()
                            .map(|j| img.get(j).abs() / growth_envelope(op, j, r))
                            .fold(0.0, f64::max);
                        growth.push(g);
                    }
                    Ok((at_origin, growth))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let (a, b) = model.bounds();
    let n = cfg.realizations as f64;
    let tail_idx = radii.iter().position(|&r| r == cfg.tail_radius).unwrap();
    let mut tails = Vec::new();
    for (oi, &op) in ops.iter().enumerate() {
        let norm = green.restricted_norm_sq(op, [0, 0], cfg.tail_radius.floor() as usize)?.sqrt();
        for &s in &cfg.multipliers {
            let threshold = s * (b - a).abs() * norm;
            let hits = per_real.iter().filter(|pr| pr[tail_idx].0[oi].abs() >= threshold && threshold > 0.0).count();
            let exceed_fraction = hits as f64 / n;
            let bound = (2.0 * (-2.0 * s * s).exp()).min(1.0);
            let mc_stderr = (bound * (1.0 - bound) / n).sqrt();
            tails.push(TailRow {
                operator: op,
                r: cfg.tail_radius,
                multiplier: s,
                threshold,
                exceed_fraction,
                bound,
                mc_stderr,
                pass: exceed_fraction <= bound + 3.0 * mc_stderr,
            });
        }
    }

    let mut growth = Vec::new();
    for (oi, &op) in ops.iter().enumerate() {
        let mut median_g = Vec::new();
        let mut max_g = Vec::new();
        for (ri, _) in cfg.radii.iter().enumerate() {
            let ri = radii.iter().position(|&x| x == cfg.radii[ri]).unwrap();
            let mut gs: Vec<f64> = per_real.iter().map(|pr| pr[ri].1[oi]).collect();
            max_g.push(gs.iter().cloned().fold(0.0, f64::max));
            median_g.push(median(&mut gs));
        }
        let hi = median_g.iter().cloned().fold(0.0, f64::max);
        let lo = median_g.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = if hi == 0.0 { 1.0 } else { hi / lo };
        growth.push(GrowthRow {
            operator: op,
            radii: cfg.radii.clone(),
            median_g,
            max_g,
            ratio,
            pass: ratio.is_finite() && ratio <= cfg.growth_ratio_limit,
        });
    }
    let pass = tails.iter().all(|t| t.pass) && growth.iter().all(|g| g.pass);
    Ok(TailAudit { config: cfg.clone(), tails, growth, pass })
}
