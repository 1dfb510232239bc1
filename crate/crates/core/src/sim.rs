//! Velocity-Verlet integration of `m(j) ü = Δu` on a finite window with
//! Dirichlet-zero boundary, snapshots at prescribed times, and energy audits.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{apply_laplacian, ordered_sum, Axis, LatticeWindow, ScalarField};
use crate::mass::MassField;
use crate::wave::InitialData;

/// Largest time step accepted for mass lower bound `a`.
pub fn max_stable_dt(a: f64) -> f64 {
    0.5 * (a / 2.0).sqrt()
}

/// Default time step for mass lower bound `a`.
pub fn default_dt(a: f64) -> f64 {
    0.25 * (a / 2.0).sqrt()
}

/// Half extent of a window that contains the wave up to `t = T/ε` plus `safety`
/// boundary shells, for data supported in `B(support)` and lattice speeds up to
/// `c_max`.
pub fn window_half_extent(eps: f64, horizon: f64, support: f64, c_max: f64, safety: usize) -> usize {
    ((support + c_max * horizon) / eps).ceil() as usize + safety
}

/// `count` evenly spaced times on `[0, T/ε]`.
pub fn sample_times(eps: f64, horizon: f64, count: usize) -> Vec<f64> {
    let end = horizon / eps;
    if count <= 1 {
        return vec![end];
    }
    (0..count).map(|k| end * k as f64 / (count - 1) as f64).collect()
}

pub const BOUNDARY_ENERGY_LIMIT: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub eps: f64,
    pub horizon: f64,
    pub dt: f64,
    pub window: LatticeWindow,
    pub sample_times: Vec<f64>,
    pub safety: usize,
    /// Abort when the boundary shells hold more than this fraction of the energy.
    pub boundary_limit: f64,
}

impl SimConfig {
    /// The experiment defaults: window sized from the data support and the
    /// fastest lattice speed `1/√a`, `dt = factor · √(a/2)`.
    pub fn for_data(
        eps: f64,
        horizon: f64,
        data: &dyn InitialData,
        mass_bounds: (f64, f64),
        sample_count: usize,
        safety: usize,
        dt_factor: f64,
    ) -> Result<Self> {
        let (a, _) = mass_bounds;
        let c_max = 1.0 / a.sqrt();
        let half = window_half_extent(eps, horizon, data.support_radius(), c_max, safety);
        let window = LatticeWindow::cube(data.dim(), half)?;
        let cfg = Self {
            eps,
            horizon,
            dt: dt_factor * (a / 2.0).sqrt(),
            window,
            sample_times: sample_times(eps, horizon, sample_count),
            safety,
            boundary_limit: BOUNDARY_ENERGY_LIMIT,
        };
        cfg.validate(a, Some((data.support_radius(), c_max)))?;
        Ok(cfg)
    }

    /// Checks stability and, when `containment = (support, c_max)` is given, the
    /// window-sizing rule.
    pub fn validate(&self, a: f64, containment: Option<(f64, f64)>) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.eps > 0.0 && self.eps <= 0.5) {
            return bad(format!("eps = {} must lie in (0, 1/2]", self.eps));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon T = {} must be positive", self.horizon));
        }
        let limit = max_stable_dt(a);
        if !(self.dt > 0.0) || self.dt > limit {
            return bad(format!("dt = {} violates the stability bound {limit}", self.dt));
        }
        if self.sample_times.is_empty() {
            return bad("no sample times".into());
        }
        let end = self.horizon / self.eps;
        let mut prev = 0.0;
        for &t in &self.sample_times {
            if !(t >= prev && t <= end * (1.0 + 1e-12)) {
                return bad(format!("sample times must be sorted inside [0, {end}]"));
            }
            prev = t;
        }
        if let Some((support, c_max)) = containment {
            let need = (support + c_max * self.horizon) / self.eps + self.safety as f64;
            for &ax in Axis::all(self.window.dim()) {
                if (self.window.half_extent(ax) as f64) < need {
                    return bad(format!(
                        "window half extent {} below the containment requirement {need:.1}",
                        self.window.half_extent(ax)
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeState {
    pub u: ScalarField,
    pub p: ScalarField,
    pub t: f64,
}

impl LatticeState {
    pub fn zeros(window: LatticeWindow) -> Self {
        Self { u: ScalarField::zeros(window), p: ScalarField::zeros(window), t: 0.0 }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { u: self.u.scaled(s), p: self.p.scaled(s), t: self.t }
    }
}

/// `u(j, 0) = ε⁻¹ φ(εj)`, `p(j, 0) = ψ(εj)`
pub fn initialize(data: &dyn InitialData, eps: f64, window: LatticeWindow) -> Result<LatticeState> {
    if data.dim() != window.dim() {
        return Err(Error::InvalidConfig("data and window dimensions differ".into()));
    }
    let x = |j: [i64; 2]| [eps * j[0] as f64, eps * j[1] as f64];
    let u: Vec<f64> = (0..window.len()).into_par_iter().map(|i| data.phi(x(window.site(i))) / eps).collect();
    let p: Vec<f64> = (0..window.len()).into_par_iter().map(|i| data.psi(x(window.site(i)))).collect();
    Ok(LatticeState { u: ScalarField::from_values(window, u)?, p: ScalarField::from_values(window, p)?, t: 0.0 })
}

/// `H = ½ Σ m p² - ½ Σ u Δu`, which counts every bond including those to the
/// zero halo.
pub fn hamiltonian(state: &LatticeState, masses: &ScalarField) -> f64 {
    let lap = state.u.laplacian();
    let terms: Vec<f64> = state
        .p
        .values()
        .par_iter()
        .zip(masses.values())
        .zip(state.u.values().par_iter().zip(lap.values()))
        .map(|((p, m), (u, l))| 0.5 * m * p * p - 0.5 * u * l)
        .collect();
    ordered_sum(&terms)
}

/// Energy held by the outermost `shells` layers of the window, each bond split
/// evenly between its two end sites.
pub fn boundary_energy(state: &LatticeState, masses: &ScalarField, shells: usize) -> f64 {
    let w = *state.u.window();
    let axes = Axis::all(w.dim());
    let terms: Vec<f64> = (0..w.len())
        .into_par_iter()
        .map(|i| {
            let j = w.site(i);
            if w.depth(j) >= shells {
                return 0.0;
            }
            let mut e = 0.5 * masses.values()[i] * state.p.values()[i].powi(2);
            let here = state.u.values()[i];
            for &a in axes {
                let d = a.unit();
                let fwd = state.u.get([j[0] + d[0], j[1] + d[1]]) - here;
                let bwd = here - state.u.get([j[0] - d[0], j[1] - d[1]]);
                e += 0.25 * (fwd * fwd + bwd * bwd);
            }
            e
        })
        .collect();
    ordered_sum(&terms)
}

/// One velocity-Verlet step, as a pure function.
pub fn step(state: &LatticeState, masses: &ScalarField, dt: f64) -> Result<LatticeState> {
    let mut it = Integrator::new(state.clone(), masses)?;
    it.step(dt)?;
    Ok(it.into_state())
}

/// Stateful integrator that keeps the force of the current position.
pub struct Integrator {
    window: LatticeWindow,
    u: Vec<f64>,
    p: Vec<f64>,
    acc: Vec<f64>,
    inv_m: Vec<f64>,
    masses: ScalarField,
    t: f64,
}

impl Integrator {
    pub fn new(state: LatticeState, masses: &ScalarField) -> Result<Self> {
        let window = *state.u.window();
        if masses.window() != &window || state.p.window() != &window {
            return Err(Error::ShapeMismatch("state and masses live on different windows".into()));
        }
        if masses.values().iter().any(|&m| !(m > 0.0)) {
            return Err(Error::InvalidModel("masses must be positive".into()));
        }
        let inv_m: Vec<f64> = masses.values().iter().map(|m| 1.0 / m).collect();
        let u = state.u.into_values();
        let p = state.p.into_values();
        let mut acc = vec![0.0; u.len()];
        apply_laplacian(&window, &u, &mut acc);
        acc.par_iter_mut().zip(&inv_m).for_each(|(a, im)| *a *= im);
        Ok(Self { window, u, p, acc, inv_m, masses: masses.clone(), t: state.t })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn step(&mut self, dt: f64) -> Result<()> {
        let half = 0.5 * dt;
        self.p.par_iter_mut().zip(&self.acc).for_each(|(p, a)| *p += half * a);
        self.u.par_iter_mut().zip(&self.p).for_each(|(u, p)| *u += dt * p);
        apply_laplacian(&self.window, &self.u, &mut self.acc);
        self.acc.par_iter_mut().zip(&self.inv_m).for_each(|(a, im)| *a *= im);
        self.p.par_iter_mut().zip(&self.acc).for_each(|(p, a)| *p += half * a);
        self.t += dt;
        if let Some(i) = self.u.par_iter().chain(self.p.par_iter()).position_first(|v| !v.is_finite()) {
            let site = self.window.site(i % self.u.len());
            return Err(Error::Diverged { site, t: self.t });
        }
        Ok(())
    }

    /// Advances to exactly `target` with equal steps no larger than `dt`.
    pub fn advance_to(&mut self, target: f64, dt: f64) -> Result<usize> {
        let span = target - self.t;
        if span <= 0.0 {
            self.t = self.t.max(target);
            return Ok(0);
        }
        let n = (span / dt).ceil().max(1.0) as usize;
        let h = span / n as f64;
        for _ in 0..n {
            self.step(h)?;
        }
        self.t = target;
        Ok(n)
    }

    pub fn state(&self) -> LatticeState {
        LatticeState {
            u: ScalarField::from_values(self.window, self.u.clone()).expect("finite state"),
            p: ScalarField::from_values(self.window, self.p.clone()).expect("finite state"),
            t: self.t,
        }
    }

    pub fn into_state(self) -> LatticeState {
        LatticeState {
            u: ScalarField::from_values(self.window, self.u).expect("finite state"),
            p: ScalarField::from_values(self.window, self.p).expect("finite state"),
            t: self.t,
        }
    }

    pub fn masses(&self) -> &ScalarField {
        &self.masses
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLog {
    pub times: Vec<f64>,
    pub hamiltonian: Vec<f64>,
    pub boundary_energy: Vec<f64>,
    pub steps: usize,
}

impl EnergyLog {
    /// `max |H(t) - H(0)| / |H(0)|`
    pub fn relative_drift(&self) -> f64 {
        let h0 = self.hamiltonian.first().copied().unwrap_or(0.0);
        if h0 == 0.0 {
            return 0.0;
        }
        self.hamiltonian.iter().map(|h| (h - h0).abs()).fold(0.0, f64::max) / h0.abs()
    }

    /// OLS slope of `H(t)/H(0)` against `t`.
    pub fn drift_rate(&self) -> f64 {
        let h0 = self.hamiltonian.first().copied().unwrap_or(0.0);
        if h0 == 0.0 || self.times.len() < 2 {
            return 0.0;
        }
        let ys: Vec<f64> = self.hamiltonian.iter().map(|h| h / h0).collect();
        crate::green::ols(&self.times, &ys).0
    }

    pub fn max_boundary_ratio(&self) -> f64 {
        self.hamiltonian
            .iter()
            .zip(&self.boundary_energy)
            .map(|(h, b)| if *h == 0.0 { 0.0 } else { b / h })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<LatticeState>,
    pub energy: EnergyLog,
}

/// Integrates from `state` and hands every sample-time state to `observer`.
pub fn run_streaming(
    config: &SimConfig,
    masses: &MassField,
    state: LatticeState,
    mut observer: impl FnMut(usize, &LatticeState) -> Result<()>,
) -> Result<EnergyLog> {
    config.validate(masses.bounds().0, None)?;
    let mut it = Integrator::new(state, &masses.masses)?;
    let mut log = EnergyLog::default();
    for (k, &t) in config.sample_times.iter().enumerate() {
        log.steps += it.advance_to(t, config.dt)?;
        let s = it.state();
        let h = hamiltonian(&s, &masses.masses);
        let b = boundary_energy(&s, &masses.masses, config.safety);
        log.times.push(t);
        log.hamiltonian.push(h);
        log.boundary_energy.push(b);
        if h > 0.0 && b / h > config.boundary_limit {
            return Err(Error::BoundaryBreach { t, ratio: b / h, limit: config.boundary_limit });
        }
        observer(k, &s)?;
    }
    Ok(log)
}

/// Full trajectory with a stored snapshot at every sample time.
pub fn run(config: &SimConfig, masses: &MassField, data: &dyn InitialData) -> Result<Trajectory> {
    let state = initialize(data, config.eps, config.window)?;
    run_from(config, masses, state)
}

pub fn run_from(config: &SimConfig, masses: &MassField, state: LatticeState) -> Result<Trajectory> {
    let mut snapshots = Vec::with_capacity(config.sample_times.len());
    let energy = run_streaming(config, masses, state, |_, s| {
        snapshots.push(s.clone());
        Ok(())
    })?;
    Ok(Trajectory { snapshots, energy })
}
