//! Measurements on simulated trajectories: the approximate solution and its
//! residual, absolute errors, coarse-graining errors and log-log slopes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::{corrector, CorrectorField};
use crate::error::{Error, Result};
use crate::fft::{convolve_full, fft2, to_complex};
use crate::green::{ols, GreenTable};
use crate::lattice::{ordered_sum, weighted_l2, Axis, LatticeWindow, ScalarField, Site};
use crate::mass::{fluctuation_field, MassField};
use crate::sim::{LatticeState, Trajectory};
use crate::wave::{Grid, GridField, InitialData, WaveSolution};

pub const DEFAULT_SIGMA: f64 = 0.1;
/// Points per lattice spacing used when integrating coarse-grained fields.
pub const COARSE_OVERSAMPLE: usize = 2;

/// `R_ε = (cT + ε^{-σ})/ε + 1`
pub fn cutoff_radius(c: f64, horizon: f64, eps: f64, sigma: f64) -> f64 {
    (c * horizon + eps.powf(-sigma)) / eps + 1.0
}

/// Wave-grid nodes per lattice spacing: even, at least 2, and with `ε/q ≤ 1/8`.
pub fn lattice_stride(eps: f64) -> usize {
    let q = (8.0 * eps).ceil() as usize;
    (q + q % 2).max(2)
}

/// Wave grid of spacing `ε/q` on which every site of `window` grown by one
/// lands on a node.
pub fn wave_grid(window: &LatticeWindow, eps: f64) -> Result<(Grid, usize)> {
    let q = lattice_stride(eps);
    let half = Axis::all(window.dim()).iter().map(|&a| window.half_extent(a)).max().unwrap_or(0);
    let grid = Grid::covering(window.dim(), (half + 1) as f64 * eps, eps / q as f64)?;
    Ok((grid, q))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// `û = ε⁻¹ U`
    Leading,
    /// `ũ = ε⁻¹ U + ε χ_{R_ε} U_ττ`
    Corrected,
}

/// `ε⁻¹ U(εj, εt)`, optionally with the corrector term, on a lattice window.
#[derive(Clone, Debug)]
pub struct ApproximateSolution {
    wave: Arc<WaveSolution>,
    stride: usize,
    eps: f64,
    sigma: f64,
    horizon: f64,
    r_eps: f64,
    mean_mass: f64,
    window: LatticeWindow,
    corrector: Option<CorrectorField>,
}

/// Which wave fields a [`TimeSlice`] carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SliceSpec {
    /// `∂_τ^k U` is sampled for `k ≤ max_order`.
    pub max_order: usize,
    pub laplacian: bool,
    /// Keep `U` and `∂_τ U` on the full wave grid for coarse graining.
    pub fine: bool,
}

impl SliceSpec {
    pub const ERRORS: SliceSpec = SliceSpec { max_order: 1, laplacian: false, fine: false };
    pub const RESIDUAL: SliceSpec = SliceSpec { max_order: 4, laplacian: true, fine: false };
    pub const ALL: SliceSpec = SliceSpec { max_order: 4, laplacian: true, fine: true };
}

/// Wave fields at one lattice time `t`, sampled on the window grown by one site.
#[derive(Clone, Debug)]
pub struct TimeSlice {
    pub t: f64,
    /// `derivs[k] = ∂_τ^k U(εj, εt)`
    pub derivs: Vec<ScalarField>,
    pub lap_x: Option<ScalarField>,
    /// `U` and `∂_τ U` on the wave grid.
    pub fine: Option<[GridField; 2]>,
}

impl TimeSlice {
    fn deriv(&self, k: usize) -> Result<&ScalarField> {
        self.derivs
            .get(k)
            .ok_or_else(|| Error::InvalidConfig(format!("time slice lacks ∂_τ^{k} U")))
    }
}

impl ApproximateSolution {
    /// The leading-order approximation for data propagating at `c = m̄^{-1/2}`.
    pub fn leading(
        data: &dyn InitialData,
        mean_mass: f64,
        eps: f64,
        sigma: f64,
        horizon: f64,
        window: LatticeWindow,
    ) -> Result<Self> {
        let (grid, stride) = wave_grid(&window, eps)?;
        let wave = Arc::new(WaveSolution::new(data, mean_mass.powf(-0.5), grid)?);
        Self::from_wave(wave, stride, eps, sigma, horizon, mean_mass, window, None)
    }

    /// The corrected approximation with `χ_{R_ε}` built from the sampled masses.
    pub fn corrected(
        data: &dyn InitialData,
        masses: &MassField,
        green: Option<&GreenTable>,
        eps: f64,
        sigma: f64,
        horizon: f64,
        window: LatticeWindow,
    ) -> Result<Self> {
        Self::leading(data, masses.mean(), eps, sigma, horizon, window)?.with_masses(masses, green)
    }

    /// The same wave with the corrector of `masses` attached.
    pub fn with_masses(&self, masses: &MassField, green: Option<&GreenTable>) -> Result<Self> {
        if (masses.mean() - self.mean_mass).abs() > 1e-14 * self.mean_mass {
            return Err(Error::InvalidModel("mass model mean differs from the wave's mean mass".into()));
        }
        let cf = if masses.model.is_constant() {
            CorrectorField::zero(self.r_eps, self.window)?
        } else {
            let green = green.ok_or_else(|| Error::InvalidConfig("random masses need a green table".into()))?;
            corrector(green, &fluctuation_field(masses), self.r_eps, self.window)?
        };
        self.with_corrector(Some(cf))
    }

    /// The same wave with another corrector (or none).
    pub fn with_corrector(&self, corrector: Option<CorrectorField>) -> Result<Self> {
        Self::from_wave(
            self.wave.clone(),
            self.stride,
            self.eps,
            self.sigma,
            self.horizon,
            self.mean_mass,
            self.window,
            corrector,
        )
    }

    /// `⌊r⌋ + window half extent + 1`: the Green table radius a corrector needs.
    pub fn green_radius_needed(&self) -> usize {
        let half = Axis::all(self.window.dim()).iter().map(|&a| self.window.half_extent(a)).max().unwrap_or(0);
        half + 1 + self.r_eps.floor() as usize
    }

    /// Assembles an approximation from parts; the wave grid spacing must be
    /// `ε / stride`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_wave(
        wave: Arc<WaveSolution>,
        stride: usize,
        eps: f64,
        sigma: f64,
        horizon: f64,
        mean_mass: f64,
        window: LatticeWindow,
        corrector: Option<CorrectorField>,
    ) -> Result<Self> {
        if !(eps > 0.0 && sigma > 0.0 && horizon > 0.0 && mean_mass > 0.0) {
            return Err(Error::InvalidConfig("ε, σ, T and m̄ must be positive".into()));
        }
        let g = wave.grid();
        if stride == 0 || ((g.h * stride as f64) / eps - 1.0).abs() > 1e-12 {
            return Err(Error::SpectralGrid(format!("grid spacing {} is not ε/{stride}", g.h)));
        }
        if g.dim != window.dim() {
            return Err(Error::ShapeMismatch("wave and window dimensions differ".into()));
        }
        let r_eps = cutoff_radius(mean_mass.powf(-0.5), horizon, eps, sigma);
        if let Some(cf) = &corrector {
            if *cf.window() != window || cf.radius() != r_eps.floor() as usize {
                return Err(Error::ShapeMismatch(format!(
                    "corrector radius {} on {:?} does not match ⌊R_ε⌋ = {} on {:?}",
                    cf.radius(),
                    cf.window(),
                    r_eps.floor(),
                    window
                )));
            }
        }
        Ok(Self { wave, stride, eps, sigma, horizon, r_eps, mean_mass, window, corrector })
    }

    pub fn variant(&self) -> Variant {
        if self.corrector.is_some() {
            Variant::Corrected
        } else {
            Variant::Leading
        }
    }

    pub fn wave(&self) -> &WaveSolution {
        &self.wave
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn r_eps(&self) -> f64 {
        self.r_eps
    }

    pub fn mean_mass(&self) -> f64 {
        self.mean_mass
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn corrector(&self) -> Option<&CorrectorField> {
        self.corrector.as_ref()
    }

    fn halo(&self) -> LatticeWindow {
        self.window.grown(1).expect("growing a window cannot fail")
    }

    /// Samples the wave fields at lattice time `t`.
    pub fn slice(&self, t: f64, spec: SliceSpec) -> Result<TimeSlice> {
        let tau = self.eps * t;
        let halo = self.halo();
        let mut derivs = Vec::with_capacity(spec.max_order + 1);
        let mut fine = Vec::new();
        for k in 0..=spec.max_order.max(if spec.fine { 1 } else { 0 }) {
            let f = self.wave.field(tau, k, [0, 0]);
            if k <= spec.max_order {
                derivs.push(f.sample_lattice(halo, self.stride)?);
            }
            if spec.fine && k <= 1 {
                fine.push(f);
            }
        }
        let lap_x = if spec.laplacian {
            Some(self.wave.laplacian_field(tau, 0).sample_lattice(halo, self.stride)?)
        } else {
            None
        };
        let fine = if spec.fine {
            let mut it = fine.into_iter();
            Some([it.next().unwrap(), it.next().unwrap()])
        } else {
            None
        };
        Ok(TimeSlice { t, derivs, lap_x, fine })
    }

    /// `χ_{R_ε}` on the window grown by one (zero for the leading variant).
    fn chi_halo(&self) -> ScalarField {
        let halo = self.halo();
        match &self.corrector {
            Some(cf) => ScalarField::from_fn(halo, |j| cf.value(j)),
            None => ScalarField::zeros(halo),
        }
    }

    /// `ũ` on the window grown by one.
    pub fn displacement_halo(&self, slice: &TimeSlice) -> Result<ScalarField> {
        let u = slice.deriv(0)?.scaled(1.0 / self.eps);
        if self.corrector.is_none() {
            return Ok(u);
        }
        Ok(u.add(&self.chi_halo().mul(slice.deriv(2)?).scaled(self.eps)))
    }

    /// `ũ̇ = U_τ + ε² χ U_τττ` on the window.
    pub fn velocity(&self, slice: &TimeSlice) -> Result<ScalarField> {
        let v = slice.deriv(1)?.resample(self.window);
        if self.corrector.is_none() {
            return Ok(v);
        }
        let corr = self.chi_halo().mul(slice.deriv(3)?).resample(self.window);
        Ok(v.axpy(self.eps * self.eps, &corr))
    }

    fn check_masses(&self, masses: &ScalarField) -> Result<()> {
        if *masses.window() != self.window {
            return Err(Error::ShapeMismatch("masses and approximation live on different windows".into()));
        }
        Ok(())
    }

    fn in_disk(&self, j: Site) -> bool {
        let r = self.r_eps.floor() as u64;
        self.corrector.is_some() && j[0].unsigned_abs() <= r && j[1].unsigned_abs() <= r
    }
}

/// `Res ũ = m ü - Δũ`, straight from the definition.
pub fn residual_field(approx: &ApproximateSolution, slice: &TimeSlice, masses: &ScalarField) -> Result<ScalarField> {
    approx.check_masses(masses)?;
    let eps = approx.eps;
    let w = approx.window;
    let lap = approx.displacement_halo(slice)?.laplacian().resample(w);
    let mut accel = slice.deriv(2)?.resample(w).scaled(eps);
    if approx.corrector.is_some() {
        let chi = approx.chi_halo().resample(w);
        accel = accel.add(&chi.mul(&slice.deriv(4)?.resample(w)).scaled(eps.powi(3)));
    }
    Ok(masses.mul(&accel).sub(&lap))
}

/// The five fields whose signed sum `t₁ + t₂ - t₃ - t₄ + t₅` is the residual:
/// `t₁ = ε⁻¹(ε² Δ_X U - ΔU)`, `t₂ = ε z 1_{D^c} U_ττ`,
/// `t₃ = ε Σ δ_i χ · δ_i⁻ U_ττ`, `t₄ = ε Σ S_i⁺χ · Δ_i U_ττ`, `t₅ = ε³ m χ U_ττττ`.
/// For the leading variant `χ = 0` and `D` is empty.
pub fn residual_terms(
    approx: &ApproximateSolution,
    slice: &TimeSlice,
    masses: &ScalarField,
) -> Result<[ScalarField; 5]> {
    approx.check_masses(masses)?;
    let eps = approx.eps;
    let w = approx.window;
    let u = slice.deriv(0)?;
    let utt = slice.deriv(2)?;
    let lap_x = slice
        .lap_x
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("time slice lacks Δ_X U".into()))?;
    let lattice = u.laplacian();
    let t1 = ScalarField::from_fn(w, |j| (eps * eps * lap_x.get(j) - lattice.get(j)) / eps);
    let mean = approx.mean_mass;
    let t2 = ScalarField::from_fn(w, |j| {
        if approx.in_disk(j) {
            0.0
        } else {
            eps * (masses.get(j) - mean) * utt.get(j)
        }
    });
    let chi = approx.chi_halo();
    let axes = Axis::all(w.dim());
    let t3 = ScalarField::from_fn(w, |j| {
        axes.iter()
            .map(|&a| {
                let e = a.unit();
                let up = [j[0] + e[0], j[1] + e[1]];
                let dn = [j[0] - e[0], j[1] - e[1]];
                (chi.get(up) - chi.get(dn)) * (utt.get(j) - utt.get(dn))
            })
            .sum::<f64>()
            * eps
    });
    let t4 = ScalarField::from_fn(w, |j| {
        axes.iter()
            .map(|&a| {
                let e = a.unit();
                let up = [j[0] + e[0], j[1] + e[1]];
                let dn = [j[0] - e[0], j[1] - e[1]];
                chi.get(up) * (utt.get(up) - 2.0 * utt.get(j) + utt.get(dn))
            })
            .sum::<f64>()
            * eps
    });
    let t5 = if approx.corrector.is_some() {
        let u4 = slice.deriv(4)?;
        ScalarField::from_fn(w, |j| eps.powi(3) * masses.get(j) * chi.get(j) * u4.get(j))
    } else {
        ScalarField::zeros(w)
    };
    Ok([t1, t2, t3, t4, t5])
}

/// `t₁ + t₂ - t₃ - t₄ + t₅`
pub fn assemble_residual(terms: &[ScalarField; 5]) -> ScalarField {
    terms[0].add(&terms[1]).sub(&terms[2]).sub(&terms[3]).add(&terms[4])
}

/// `ℓ²` norms of the five residual terms.
pub fn residual_term_norms(approx: &ApproximateSolution, slice: &TimeSlice, masses: &ScalarField) -> Result<[f64; 5]> {
    let terms = residual_terms(approx, slice, masses)?;
    Ok([terms[0].norm_l2(), terms[1].norm_l2(), terms[2].norm_l2(), terms[3].norm_l2(), terms[4].norm_l2()])
}

/// Errors of one lattice state against the leading approximation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    /// `‖u - ε⁻¹U‖_{ℓ²}`
    pub disp: f64,
    /// `‖u̇ - U_τ‖_{ℓ²}`
    pub vel: f64,
    pub u_norm: f64,
    pub ut_norm: f64,
}

pub fn error_sample(approx: &ApproximateSolution, slice: &TimeSlice, state: &LatticeState) -> Result<ErrorSample> {
    let w = approx.window;
    if *state.u.window() != w {
        return Err(Error::ShapeMismatch("state and approximation live on different windows".into()));
    }
    let uhat = slice.deriv(0)?.resample(w).scaled(1.0 / approx.eps);
    let vhat = slice.deriv(1)?.resample(w);
    Ok(ErrorSample {
        disp: state.u.sub(&uhat).norm_l2(),
        vel: state.p.sub(&vhat).norm_l2(),
        u_norm: state.u.norm_l2(),
        ut_norm: state.p.norm_l2(),
    })
}

/// `(a.e.d., a.e.v.)`: the largest displacement and velocity errors over the
/// stored sample times.
pub fn absolute_errors(approx: &ApproximateSolution, traj: &Trajectory) -> Result<(f64, f64)> {
    let mut aed: f64 = 0.0;
    let mut aev: f64 = 0.0;
    for s in &traj.snapshots {
        let e = error_sample(approx, &approx.slice(s.t, SliceSpec::ERRORS)?, s)?;
        aed = aed.max(e.disp);
        aev = aev.max(e.vel);
    }
    Ok((aed, aev))
}

/// `‖p - ũ̇, r₁ - r̃₁, r₂ - r̃₂‖_{ℓ²}` with `r_i = δ_i⁺ u` against the corrected
/// approximation.
pub fn microstate_error(approx: &ApproximateSolution, slice: &TimeSlice, state: &LatticeState) -> Result<f64> {
    let w = approx.window;
    let ut = approx.displacement_halo(slice)?;
    let dp = state.p.sub(&approx.velocity(slice)?);
    let mut fields = vec![dp];
    for &a in Axis::all(w.dim()) {
        let e = a.unit();
        fields.push(ScalarField::from_fn(w, |j| {
            let up = [j[0] + e[0], j[1] + e[1]];
            (state.u.get(up) - state.u.get(j)) - (ut.get(up) - ut.get(j))
        }));
    }
    let refs: Vec<&ScalarField> = fields.iter().collect();
    Ok(weighted_l2(&refs))
}

/// Normalized sinc, `sin(πx) / (πx)`.
pub fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// `L[f](y) = Σ_j f(j) sinc(y₁ - j₁) sinc(y₂ - j₂)` on the points
/// `y = p / oversample` covering the window.
#[derive(Clone, Debug, PartialEq)]
pub struct Interpolant {
    pub window: LatticeWindow,
    pub oversample: usize,
    pub shape: [usize; 2],
    pub values: Vec<f64>,
}

impl Interpolant {
    /// `y` for a flat index.
    pub fn point(&self, index: usize) -> [f64; 2] {
        let o = self.oversample as f64;
        let h1 = (self.window.half_extent(Axis::X1) * self.oversample) as f64;
        let y1 = ((index / self.shape[1]) as f64 - h1) / o;
        let y2 = if self.window.dim() == 1 {
            0.0
        } else {
            let h2 = (self.window.half_extent(Axis::X2) * self.oversample) as f64;
            ((index % self.shape[1]) as f64 - h2) / o
        };
        [y1, y2]
    }

    /// `L[f](p / oversample)`
    pub fn at(&self, p: [i64; 2]) -> f64 {
        let h1 = (self.window.half_extent(Axis::X1) * self.oversample) as i64;
        let h2 = if self.window.dim() == 1 { 0 } else { (self.window.half_extent(Axis::X2) * self.oversample) as i64 };
        let (i1, i2) = (p[0] + h1, p[1] + h2);
        if i1 < 0 || i2 < 0 || i1 as usize >= self.shape[0] || i2 as usize >= self.shape[1] {
            return 0.0;
        }
        self.values[i1 as usize * self.shape[1] + i2 as usize]
    }
}

/// Sinc interpolation along one array axis onto `oversample` points per spacing.
/// Exact for the finite sum: each fractional phase is a full linear convolution.
fn interpolate_axis(values: &[f64], shape: [usize; 2], axis: usize, o: usize) -> (Vec<f64>, [usize; 2]) {
    let n = shape[axis];
    let mut out_shape = shape;
    out_shape[axis] = o * (n - 1) + 1;
    let mut out = vec![0.0; out_shape[0] * out_shape[1]];
    let put = |out: &mut Vec<f64>, i: usize, k: usize, s: usize, v: f64| {
        let (a, b) = if axis == 0 { (o * i + s, k) } else { (k, o * i + s) };
        out[a * out_shape[1] + b] = v;
    };
    let other = shape[1 - axis];
    for i in 0..n {
        for k in 0..other {
            let v = if axis == 0 { values[i * shape[1] + k] } else { values[k * shape[1] + i] };
            put(&mut out, i, k, 0, v);
        }
    }
    for s in 1..o {
        let frac = s as f64 / o as f64;
        let kernel: Vec<f64> = (0..2 * n - 1).map(|t| sinc(t as f64 - (n - 1) as f64 + frac)).collect();
        let ks = if axis == 0 { [2 * n - 1, 1] } else { [1, 2 * n - 1] };
        let (full, fs) = convolve_full(values, shape, &kernel, ks);
        for i in 0..n - 1 {
            for k in 0..other {
                let v = if axis == 0 { full[(i + n - 1) * fs[1] + k] } else { full[k * fs[1] + i + n - 1] };
                put(&mut out, i, k, s, v);
            }
        }
    }
    (out, out_shape)
}

/// Band-limited interpolation of a lattice field, evaluated on a grid with
/// `oversample` points per lattice spacing.
pub fn lowpass_interpolate(f: &ScalarField, oversample: usize) -> Result<Interpolant> {
    if oversample == 0 {
        return Err(Error::InvalidConfig("oversample must be positive".into()));
    }
    let w = *f.window();
    let shape = w.shape();
    let (mut vals, mut sh) = interpolate_axis(f.values(), shape, 0, oversample);
    if w.dim() == 2 {
        let (v2, s2) = interpolate_axis(&vals, sh, 1, oversample);
        vals = v2;
        sh = s2;
    }
    Ok(Interpolant { window: w, oversample, shape: sh, values: vals })
}

/// Direct evaluation of `L[f](y)`; the test oracle for [`lowpass_interpolate`].
pub fn lowpass_direct(f: &ScalarField, y: [f64; 2]) -> f64 {
    let w = f.window();
    let terms: Vec<f64> = w
        .sites()
        .zip(f.values())
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, v)| {
            let s2 = if w.dim() == 1 { 1.0 } else { sinc(y[1] - j[1] as f64) };
            v * sinc(y[0] - j[0] as f64) * s2
        })
        .collect();
    ordered_sum(&terms)
}

/// `‖U_ε - U‖_{L²}` and `‖∂_τ U_ε - ∂_τ U‖_{L²}` at one time, with
/// `U_ε(X) = ε L[u](X/ε)`, by Riemann sum on the oversampled points.
pub fn coarse_grain_sample(approx: &ApproximateSolution, slice: &TimeSlice, state: &LatticeState) -> Result<(f64, f64)> {
    let o = COARSE_OVERSAMPLE;
    if approx.stride % o != 0 {
        return Err(Error::SpectralGrid(format!("stride {} is not a multiple of {o}", approx.stride)));
    }
    let fine = slice
        .fine
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("time slice lacks the fine wave fields".into()))?;
    let eps = approx.eps;
    let lu = lowpass_interpolate(&state.u, o)?;
    let lp = lowpass_interpolate(&state.p, o)?;
    let grid = fine[0].grid;
    let c = (grid.n / 2) as i64;
    let step = (approx.stride / o) as i64;
    let dim = grid.dim;
    let node = |y: [f64; 2]| -> (usize, usize) {
        let p1 = (y[0] * o as f64).round() as i64;
        let p2 = (y[1] * o as f64).round() as i64;
        let i1 = (c + step * p1) as usize;
        let i2 = if dim == 1 { 0 } else { (c + step * p2) as usize };
        (i1, i2)
    };
    let (du, dv): (Vec<f64>, Vec<f64>) = (0..lu.values.len())
        .into_par_iter()
        .map(|idx| {
            let (i1, i2) = node(lu.point(idx));
            let a = eps * lu.values[idx] - fine[0].at_index(i1, i2);
            let b = lp.values[idx] - fine[1].at_index(i1, i2);
            (a * a, b * b)
        })
        .unzip();
    let cell = (eps / o as f64).powi(dim as i32);
    Ok(((ordered_sum(&du) * cell).sqrt(), (ordered_sum(&dv) * cell).sqrt()))
}

/// Largest coarse-graining errors over the stored sample times.
pub fn coarse_grain_error(approx: &ApproximateSolution, traj: &Trajectory) -> Result<(f64, f64)> {
    let spec = SliceSpec { max_order: 1, laplacian: false, fine: true };
    let mut worst = (0.0f64, 0.0f64);
    for s in &traj.snapshots {
        let (a, b) = coarse_grain_sample(approx, &approx.slice(s.t, spec)?, s)?;
        worst = (worst.0.max(a), worst.1.max(b));
    }
    Ok(worst)
}

/// `F(y) = (2π)^{-d} Σ_j e^{-i j·y} f(j)` at `y = 2πk/N` (FFT order, `k < N`).
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub dim: usize,
    pub shape: [usize; 2],
    pub values: Vec<Complex64>,
}

impl SpectralField {
    pub fn frequency(&self, index: usize) -> [f64; 2] {
        let [n1, n2] = self.shape;
        let y1 = 2.0 * PI * (index / n2) as f64 / n1 as f64;
        let y2 = 2.0 * PI * (index % n2) as f64 / n2 as f64;
        [y1, if self.dim == 1 { 0.0 } else { y2 }]
    }

    /// `((2π)^d (2π/N)^d Σ |F|²)^{1/2}`, which equals `‖f‖_{ℓ²}`.
    pub fn norm_l2(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|z| z.norm_sqr()).collect();
        let mut factor = 1.0;
        for d in 0..self.dim {
            factor *= 2.0 * PI * (2.0 * PI / self.shape[d] as f64);
        }
        (factor * ordered_sum(&sq)).sqrt()
    }
}

/// The unnormalized FFT sums over window indices `i = j + half`; the factor
/// `e^{i half·y} / (2π)^d` converts it to the lattice convention.
pub fn dft(f: &ScalarField) -> SpectralField {
    let w = f.window();
    let dim = w.dim();
    let [n1, n2] = w.shape();
    let mut data = to_complex(f.values());
    fft2(&mut data, n1, n2, false);
    let h1 = w.half_extent(Axis::X1) as f64;
    let h2 = if dim == 1 { 0.0 } else { w.half_extent(Axis::X2) as f64 };
    let norm = (2.0 * PI).powi(dim as i32).recip();
    let mut out = SpectralField { dim, shape: [n1, n2], values: data };
    let freqs: Vec<[f64; 2]> = (0..out.values.len()).map(|i| out.frequency(i)).collect();
    out.values.par_iter_mut().zip(freqs).for_each(|(z, y)| {
        *z *= Complex64::from_polar(norm, h1 * y[0] + h2 * y[1]);
    });
    out
}

/// One value of one metric for one `(ε, realization)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub epsilon: f64,
    pub realization: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Error measurements across an ε sweep plus the metadata needed to rerun it.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorSeries {
    pub metadata: BTreeMap<String, String>,
    pub records: Vec<ErrorRecord>,
}

impl ErrorSeries {
    pub fn push(&mut self, epsilon: f64, realization: usize, seed: u64, metric: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidConfig(format!("metric {metric} = {value} must be finite and nonnegative")));
        }
        self.records.push(ErrorRecord { epsilon, realization, seed, metric: metric.to_string(), value });
        Ok(())
    }

    pub fn metrics(&self) -> Vec<String> {
        let mut m: Vec<String> = self.records.iter().map(|r| r.metric.clone()).collect();
        m.sort();
        m.dedup();
        m
    }

    /// Distinct ε values, largest first.
    pub fn epsilons(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.records.iter().map(|r| r.epsilon).collect();
        e.sort_by(|a, b| b.total_cmp(a));
        e.dedup();
        e
    }

    /// `(ε, value)` pairs of one metric.
    pub fn values(&self, metric: &str) -> Vec<(f64, f64)> {
        self.records.iter().filter(|r| r.metric == metric).map(|r| (r.epsilon, r.value)).collect()
    }

    /// Median over realizations per ε, largest ε first.
    pub fn medians(&self, metric: &str) -> Vec<(f64, f64)> {
        group_by_eps(&self.values(metric)).into_iter().map(|(e, v)| (e, median(&v))).collect()
    }
}

fn group_by_eps(points: &[(f64, f64)]) -> Vec<(f64, Vec<f64>)> {
    let mut groups: Vec<(f64, Vec<f64>)> = Vec::new();
    for &(e, v) in points {
        match groups.iter_mut().find(|(g, _)| *g == e) {
            Some((_, vs)) => vs.push(v),
            None => groups.push((e, vec![v])),
        }
    }
    groups.sort_by(|a, b| b.0.total_cmp(&a.0));
    groups
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Every realization is a point of the fit.
    PerRealization,
    /// One point per ε: the median over realizations.
    Median,
}

/// Distribution of one metric at one ε.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsSpread {
    pub epsilon: f64,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub slope_stderr: f64,
    /// Residual standard error of the fit in log space.
    pub residual_se: f64,
    pub aggregation: Aggregation,
    pub points: usize,
    pub spread: Vec<EpsSpread>,
}

pub const MIN_FIT_EPSILONS: usize = 4;

/// OLS of `log value` against `log ε`.
pub fn fit_slope_points(points: &[(f64, f64)], aggregation: Aggregation) -> Result<SlopeFit> {
    let groups = group_by_eps(points);
    if groups.len() < MIN_FIT_EPSILONS {
        return Err(Error::Insufficient(format!(
            "slope fit needs at least {MIN_FIT_EPSILONS} distinct ε values, got {}",
            groups.len()
        )));
    }
    if let Some(&(e, v)) = points.iter().find(|(e, v)| !(*e > 0.0 && *v > 0.0 && v.is_finite())) {
        return Err(Error::Insufficient(format!("cannot take logs of (ε = {e}, value = {v})")));
    }
    let spread: Vec<EpsSpread> = groups
        .iter()
        .map(|(e, vs)| {
            let mut s = vs.clone();
            s.sort_by(f64::total_cmp);
            EpsSpread {
                epsilon: *e,
                count: s.len(),
                min: s[0],
                q1: quantile(&s, 0.25),
                median: quantile(&s, 0.5),
                q3: quantile(&s, 0.75),
                max: s[s.len() - 1],
            }
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = match aggregation {
        Aggregation::Median => spread.iter().map(|s| (s.epsilon.ln(), s.median.ln())).unzip(),
        Aggregation::PerRealization => points.iter().map(|(e, v)| (e.ln(), v.ln())).unzip(),
    };
    let (slope, intercept) = ols(&xs, &ys);
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let residual_se = (sse / (n - 2.0)).sqrt();
    Ok(SlopeFit {
        slope,
        intercept,
        slope_stderr: residual_se / sxx.sqrt(),
        residual_se,
        aggregation,
        points: xs.len(),
        spread,
    })
}

pub fn fit_slope(series: &ErrorSeries, metric: &str, aggregation: Aggregation) -> Result<SlopeFit> {
    let pts = series.values(metric);
    if pts.is_empty() {
        return Err(Error::Insufficient(format!("no values of metric {metric}")));
    }
    fit_slope_points(&pts, aggregation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::{FnData, SechPair};

    #[test]
    fn cutoff_radius_matches_definition() {
        let r = cutoff_radius(1.0, 1.0, 0.25, 0.5);
        assert!((r - ((1.0 + 2.0) / 0.25 + 1.0)).abs() < 1e-12);
        assert_eq!(lattice_stride(0.5), 4);
        assert_eq!(lattice_stride(0.25), 2);
        assert_eq!(lattice_stride(1.0 / 32.0), 2);
    }

    #[test]
    fn sinc_values() {
        assert_eq!(sinc(0.0), 1.0);
        assert!(sinc(3.0).abs() < 1e-15);
        assert!((sinc(0.5) - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn delta_interpolates_to_sinc_product() {
        let w = LatticeWindow::square(6).unwrap();
        let f = ScalarField::delta(w, [0, 0]);
        let li = lowpass_interpolate(&f, 2).unwrap();
        for idx in 0..li.values.len() {
            let y = li.point(idx);
            assert!((li.values[idx] - sinc(y[0]) * sinc(y[1])).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolant_reproduces_lattice_values() {
        let w = LatticeWindow::square(5).unwrap();
        let f = ScalarField::from_fn(w, |j| (j[0] * 3 - j[1]) as f64);
        let li = lowpass_interpolate(&f, 3).unwrap();
        for j in w.sites() {
            assert!((li.at([3 * j[0], 3 * j[1]]) - f.get(j)).abs() < 1e-12);
        }
    }

    #[test]
    fn leading_approximation_of_zero_data_has_zero_residual() {
        let w = LatticeWindow::square(8).unwrap();
        let data = FnData::zero(2);
        let approx = ApproximateSolution::leading(&data, 1.0, 0.5, DEFAULT_SIGMA, 1.0, w).unwrap();
        let slice = approx.slice(1.0, SliceSpec::RESIDUAL).unwrap();
        let m = ScalarField::constant(w, 1.0);
        assert_eq!(residual_field(&approx, &slice, &m).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn self_comparison_has_zero_error() {
        let w = LatticeWindow::square(40).unwrap();
        let approx = ApproximateSolution::leading(&SechPair, 1.0, 0.5, DEFAULT_SIGMA, 1.0, w).unwrap();
        let slice = approx.slice(0.7, SliceSpec::ERRORS).unwrap();
        let state = LatticeState {
            u: slice.derivs[0].resample(w).scaled(2.0),
            p: slice.derivs[1].resample(w),
            t: 0.7,
        };
        let e = error_sample(&approx, &slice, &state).unwrap();
        assert_eq!(e.disp, 0.0);
        assert_eq!(e.vel, 0.0);
    }

    #[test]
    fn slope_of_power_law_and_constant() {
        let eps = [0.5, 0.25, 0.125, 0.0625, 0.03125];
        let pts: Vec<(f64, f64)> = eps.iter().map(|&e| (e, e * e)).collect();
        let fit = fit_slope_points(&pts, Aggregation::Median).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        let pts: Vec<(f64, f64)> = eps.iter().map(|&e| (e, 3.0)).collect();
        assert!(fit_slope_points(&pts, Aggregation::PerRealization).unwrap().slope.abs() < 1e-12);
        assert!(fit_slope_points(&pts[..3], Aggregation::Median).is_err());
    }

    #[test]
    fn dft_of_delta_is_flat() {
        let w = LatticeWindow::square(3).unwrap();
        let f = ScalarField::delta(w, [0, 0]);
        let s = dft(&f);
        for z in &s.values {
            assert!((z - Complex64::new(1.0 / (4.0 * PI * PI), 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn median_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
