//! The constant-coefficient effective wave `U_ττ = c² Δ_X U` solved exactly in
//! Fourier space on a large periodic box, with the energy functionals and
//! weighted norms used to bound the residual.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fft::{angular_frequencies, fft2, next_smooth, to_complex};
use crate::lattice::{ordered_sum, LatticeWindow, ScalarField};

pub type Point = [f64; 2];

/// Macroscopic initial data `U(X, 0) = φ(X)`, `U_τ(X, 0) = ψ(X)`.
pub trait InitialData: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn phi(&self, x: Point) -> f64;
    fn psi(&self, x: Point) -> f64;
    /// Radius outside of which both functions are below `1e-10` of their peak.
    fn support_radius(&self) -> f64;
}

impl fmt::Debug for dyn InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InitialData({})", self.name())
    }
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

/// `φ = sech(½(X₁-1)² + (X₂-1)²)`, `ψ = sech((X₁+1)² + ½(X₂+1)²)`
#[derive(Clone, Copy, Debug, Default)]
pub struct SechPair;

impl InitialData for SechPair {
    fn name(&self) -> &str {
        "paper-sech-pair"
    }
    fn dim(&self) -> usize {
        2
    }
    fn phi(&self, x: Point) -> f64 {
        sech(0.5 * (x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2))
    }
    fn psi(&self, x: Point) -> f64 {
        sech((x[0] + 1.0).powi(2) + 0.5 * (x[1] + 1.0).powi(2))
    }
    fn support_radius(&self) -> f64 {
        // sech(s) < 1e-10 once s > 24; ½(X-1)² > 24 for |X - 1| > 6.93
        8.0
    }
}

/// `φ = sech(½(X-1)²)`, `ψ = sech((X+1)²)`
#[derive(Clone, Copy, Debug, Default)]
pub struct SechPair1d;

impl InitialData for SechPair1d {
    fn name(&self) -> &str {
        "paper-sech-1d"
    }
    fn dim(&self) -> usize {
        1
    }
    fn phi(&self, x: Point) -> f64 {
        sech(0.5 * (x[0] - 1.0).powi(2))
    }
    fn psi(&self, x: Point) -> f64 {
        sech((x[0] + 1.0).powi(2))
    }
    fn support_radius(&self) -> f64 {
        8.0
    }
}

type ScalarFn = Arc<dyn Fn(Point) -> f64 + Send + Sync>;

/// Initial data from closures.
#[derive(Clone)]
pub struct FnData {
    pub name: String,
    pub dim: usize,
    pub phi: ScalarFn,
    pub psi: ScalarFn,
    pub support_radius: f64,
}

impl FnData {
    pub fn new(
        name: &str,
        dim: usize,
        support_radius: f64,
        phi: impl Fn(Point) -> f64 + Send + Sync + 'static,
        psi: impl Fn(Point) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.to_string(), dim, phi: Arc::new(phi), psi: Arc::new(psi), support_radius }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new("zero", dim, 1.0, |_| 0.0, |_| 0.0)
    }
}

impl InitialData for FnData {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn phi(&self, x: Point) -> f64 {
        (self.phi)(x)
    }
    fn psi(&self, x: Point) -> f64 {
        (self.psi)(x)
    }
    fn support_radius(&self) -> f64 {
        self.support_radius
    }
}

pub const INITIAL_DATA_NAMES: [&str; 2] = ["paper-sech-pair", "paper-sech-1d"];

pub fn initial_data(name: &str) -> Result<Arc<dyn InitialData>> {
    match name {
        "paper-sech-pair" => Ok(Arc::new(SechPair)),
        "paper-sech-1d" => Ok(Arc::new(SechPair1d)),
        other => Err(Error::InvalidConfig(format!(
            "unknown initial data {other:?}; known: {}",
            INITIAL_DATA_NAMES.join(", ")
        ))),
    }
}

/// Uniform periodic grid with `n` points per axis, spacing `h`, and the origin
/// at index `n / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub n: usize,
    pub h: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, h: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) || n < 4 || n % 2 != 0 || !(h > 0.0) {
            return Err(Error::SpectralGrid(format!("bad grid dim={dim} n={n} h={h}")));
        }
        Ok(Self { dim, n, h })
    }

    /// Grid of spacing `h` whose half width is at least `half_width`, with an
    /// FFT-friendly even point count.
    pub fn covering(dim: usize, half_width: f64, h: f64) -> Result<Self> {
        let mut n = 2 * (half_width / h).ceil() as usize + 2;
        n = next_smooth_even(n);
        Self::new(dim, n, h)
    }

    pub fn shape(&self) -> [usize; 2] {
        if self.dim == 1 {
            [self.n, 1]
        } else {
            [self.n, self.n]
        }
    }

    pub fn len(&self) -> usize {
        let [a, b] = self.shape();
        a * b
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn extent(&self) -> f64 {
        self.n as f64 * self.h
    }

    pub fn coord(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.h
    }

    pub fn point(&self, index: usize) -> Point {
        let [_, n2] = self.shape();
        let x1 = self.coord(index / n2);
        let x2 = if self.dim == 1 { 0.0 } else { self.coord(index % n2) };
        [x1, x2]
    }

    /// Volume element `h^d`.
    pub fn cell(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn sample(&self, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        (0..self.len()).into_par_iter().map(|i| f(self.point(i))).collect()
    }
}

fn next_smooth_even(n: usize) -> usize {
    let mut m = next_smooth(n);
    while m % 2 != 0 {
        m = next_smooth(m + 1);
    }
    m
}

/// Real values on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn at_index(&self, i1: usize, i2: usize) -> f64 {
        let [_, n2] = self.grid.shape();
        self.values[i1 * n2 + i2]
    }

    /// Values at lattice sites, where site `j` sits on grid node `n/2 + stride·j`.
    pub fn sample_lattice(&self, window: LatticeWindow, stride: usize) -> Result<ScalarField> {
        let c = (self.grid.n / 2) as i64;
        let s = stride as i64;
        let n = self.grid.n as i64;
        let [_, n2] = self.grid.shape();
        let mut out = Vec::with_capacity(window.len());
        for j in window.sites() {
            let i1 = c + s * j[0];
            let i2 = if self.grid.dim == 1 { 0 } else { c + s * j[1] };
            if !(0..n).contains(&i1) || !(0..n.max(1)).contains(&i2) {
                return Err(Error::SpectralGrid(format!("lattice site {j:?} falls outside the wave grid")));
            }
            out.push(self.values[i1 as usize * n2 + i2 as usize]);
        }
        ScalarField::from_values(window, out)
    }

    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        (ordered_sum(&sq) * self.grid.cell()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Fraction of spectral energy with any `|k_i|` above two thirds of Nyquist.
pub const ALIASING_LIMIT: f64 = 1e-8;
/// Fraction of data mass allowed in the outer eighth of the box on each side.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct WaveSolution {
    name: String,
    grid: Grid,
    c: f64,
    k1: Vec<f64>,
    k2: Vec<f64>,
    phi_hat: Vec<Complex64>,
    psi_hat: Vec<Complex64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Moves an `n1 x n2` spectrum (FFT order) into an `m1 x m2` one, splitting
/// Nyquist coefficients evenly between the two signed frequencies.
fn pad_spectrum(spec: &[Complex64], [n1, n2]: [usize; 2], [m1, m2]: [usize; 2]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m1 * m2];
    let targets = |a: usize, n: usize, m: usize| -> Vec<(usize, f64)> {
        if n == 1 {
            vec![(0, 1.0)]
        } else if 2 * a == n {
            vec![(a, 0.5), (m - a, 0.5)]
        } else if a < n / 2 {
            vec![(a, 1.0)]
        } else {
            vec![(m - (n - a), 1.0)]
        }
    };
    for a in 0..n1 {
        for b in 0..n2 {
            let v = spec[a * n2 + b];
            for &(p, wa) in &targets(a, n1, m1) {
                for &(q, wb) in &targets(b, n2, m2) {
                    out[p * m2 + q] += v * (wa * wb);
                }
            }
        }
    }
    out
}

/// Bessel `J₁(x)` by the trapezoid rule on `(1/2π) ∫₀^{2π} cos(t - x sin t) dt`.
/// The integrand is periodic and entire, so the rule is exact to rounding
/// once the node count passes `|x|` by a margin.
pub fn bessel_j1(x: f64) -> f64 {
    let m = (1.2 * x.abs()) as usize + 64;
    let terms: Vec<f64> = (0..m)
        .map(|i| {
            let t = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            (t - x * t.sin()).cos()
        })
        .collect();
    ordered_sum(&terms) / m as f64
}

impl WaveSolution {
    /// Builds the solution for data supported well inside the box and resolved
    /// by the grid.
    pub fn new(data: &dyn InitialData, c: f64, grid: Grid) -> Result<Self> {
        let ws = Self::build(data, c, grid)?;
        let phi = grid.sample(|x| data.phi(x));
        let psi = grid.sample(|x| data.psi(x));
        let frac = boundary_fraction(&grid, &phi, &psi);
        if frac > BOUNDARY_MASS_LIMIT {
            return Err(Error::SpectralGrid(format!(
                "data mass fraction {frac:e} near the box boundary exceeds {BOUNDARY_MASS_LIMIT:e}; enlarge the box"
            )));
        }
        Ok(ws)
    }

    /// Builds the solution for periodic data on the box (no containment check).
    pub fn periodic(data: &dyn InitialData, c: f64, grid: Grid) -> Result<Self> {
        Self::build(data, c, grid)
    }

    fn build(data: &dyn InitialData, c: f64, grid: Grid) -> Result<Self> {
        if data.dim() != grid.dim {
            return Err(Error::SpectralGrid("data and grid dimensions differ".into()));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::SpectralGrid(format!("wave speed {c} must be positive")));
        }
        let [n1, n2] = grid.shape();
        let mut phi_hat = to_complex(&grid.sample(|x| data.phi(x)));
        let mut psi_hat = to_complex(&grid.sample(|x| data.psi(x)));
        fft2(&mut phi_hat, n1, n2, false);
        fft2(&mut psi_hat, n1, n2, false);
        let k1 = angular_frequencies(n1, grid.h);
        let k2 = if grid.dim == 1 { vec![0.0] } else { angular_frequencies(n2, grid.h) };
        let ws = Self { name: data.name().to_string(), grid, c, k1, k2, phi_hat, psi_hat };
        let alias = ws.aliasing_fraction();
        if alias > ALIASING_LIMIT {
            return Err(Error::SpectralGrid(format!(
                "spectral energy fraction {alias:e} above 2/3 Nyquist exceeds {ALIASING_LIMIT:e}; refine the grid"
            )));
        }
        Ok(ws)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn speed(&self) -> f64 {
        self.c
    }

    fn wavenumber(&self, index: usize) -> (f64, f64) {
        let n2 = self.k2.len();
        (self.k1[index / n2], self.k2[index % n2])
    }

    pub fn aliasing_fraction(&self) -> f64 {
        let cut1 = (2.0 / 3.0) * std::f64::consts::PI / self.grid.h;
        let mut hi = 0.0;
        let mut total = 0.0;
        for (i, (a, b)) in self.phi_hat.iter().zip(&self.psi_hat).enumerate() {
            let (k1, k2) = self.wavenumber(i);
            let e = a.norm_sqr() + b.norm_sqr();
            total += e;
            if k1.abs() > cut1 || k2.abs() > cut1 {
                hi += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            hi / total
        }
    }

    /// `∂_τ^order Û(k, τ)` in FFT order.
    pub fn spectrum(&self, tau: f64, order: usize) -> Vec<Complex64> {
        let c = self.c;
        (0..self.phi_hat.len())
            .into_par_iter()
            .map(|i| {
                let (k1, k2) = self.wavenumber(i);
                let omega = c * (k1 * k1 + k2 * k2).sqrt();
                let (s, co) = (omega * tau).sin_cos();
                let sinc_t = if omega == 0.0 { tau } else { s / omega };
                let base = if order % 2 == 0 {
                    self.phi_hat[i] * co + self.psi_hat[i] * sinc_t
                } else {
                    -self.phi_hat[i] * (omega * s) + self.psi_hat[i] * co
                };
                base * (-omega * omega).powi((order / 2) as i32)
            })
            .collect()
    }

    /// Real-space `∂₁^a ∂₂^b ∂_τ^order U(·, τ)`.
    pub fn field(&self, tau: f64, order: usize, deriv: [usize; 2]) -> GridField {
        let spec = self.spectrum(tau, order);
        self.to_real(spec, deriv)
    }

    /// Real-space `Δ_X ∂_τ^order U(·, τ)`.
    pub fn laplacian_field(&self, tau: f64, order: usize) -> GridField {
        let mut spec = self.spectrum(tau, order);
        spec.par_iter_mut().enumerate().for_each(|(i, v)| {
            let (k1, k2) = self.wavenumber(i);
            *v *= -(k1 * k1 + k2 * k2);
        });
        self.to_real(spec, [0, 0])
    }

    /// Spectrum of `∂₁^a ∂₂^b` applied to the field with spectrum `spec`.
    fn differentiated(&self, mut spec: Vec<Complex64>, deriv: [usize; 2]) -> Vec<Complex64> {
        let [n1, n2] = self.grid.shape();
        if deriv != [0, 0] {
            let nyq1 = n1 / 2;
            let nyq2 = n2 / 2;
            spec.par_iter_mut().enumerate().for_each(|(i, v)| {
                let (a, b) = (i / n2, i % n2);
                let (k1, k2) = self.wavenumber(i);
                let mut m = Complex64::new(1.0, 0.0);
                for _ in 0..deriv[0] {
                    m *= Complex64::new(0.0, k1);
                }
                for _ in 0..deriv[1] {
                    m *= Complex64::new(0.0, k2);
                }
                if (deriv[0] % 2 == 1 && a == nyq1) || (deriv[1] % 2 == 1 && n2 > 1 && b == nyq2) {
                    m = Complex64::new(0.0, 0.0);
                }
                *v *= m;
            });
        }
        spec
    }

    fn to_real(&self, spec: Vec<Complex64>, deriv: [usize; 2]) -> GridField {
        let [n1, n2] = self.grid.shape();
        let mut spec = self.differentiated(spec, deriv);
        fft2(&mut spec, n1, n2, true);
        let scale = 1.0 / (n1 * n2) as f64;
        GridField { grid: self.grid, values: spec.iter().map(|z| z.re * scale).collect() }
    }

    /// `E(D^k ∂_τ^i U)(τ) = ½ ∫ |D^k ∂_τ^{i+1} U|² + c² |D^{k+1} ∂_τ^i U|² dX`
    pub fn energy(&self, tau: f64, i: usize, k: usize) -> f64 {
        let v = self.spectrum(tau, i);
        let vt = self.spectrum(tau, i + 1);
        let c2 = self.c * self.c;
        let terms: Vec<f64> = (0..v.len())
            .map(|idx| {
                let (k1, k2) = self.wavenumber(idx);
                let q = k1 * k1 + k2 * k2;
                q.powi(k as i32) * (vt[idx].norm_sqr() + c2 * q * v[idx].norm_sqr())
            })
            .collect();
        let n = v.len() as f64;
        0.5 * ordered_sum(&terms) * self.grid.cell() / n
    }

    /// `(time order, spatial derivative, weight)` of every square in the
    /// energy density of `D^k ∂_τ^i U`.
    fn density_terms(&self, i: usize, k: usize) -> Vec<(usize, [usize; 2], f64)> {
        let two_d = self.grid.dim == 2;
        let mut out = Vec::new();
        for (order, total, weight) in [(i + 1, k, 1.0), (i, k + 1, self.c * self.c)] {
            for a in 0..=total {
                if !two_d && a != total {
                    continue;
                }
                let coef = if two_d { binomial(total, a) } else { 1.0 };
                out.push((order, [a, total - a], weight * coef));
            }
        }
        out
    }

    /// Energy density `|D^k ∂_τ^{i+1} U|² + c² |D^{k+1} ∂_τ^i U|²` on the grid.
    pub fn energy_density(&self, tau: f64, i: usize, k: usize) -> GridField {
        let mut dens = vec![0.0; self.grid.len()];
        for (order, deriv, weight) in self.density_terms(i, k) {
            let f = self.field(tau, order, deriv);
            dens.par_iter_mut().zip(&f.values).for_each(|(d, v)| *d += weight * v * v);
        }
        GridField { grid: self.grid, values: dens }
    }

    /// Energy of `D^k ∂_τ^i U` outside the ball `B(c|τ| + ε^{-σ})`, no ½ factor.
    ///
    /// The density is a trigonometric polynomial of twice the grid bandwidth,
    /// so it is sampled exactly on a grid refined by 2 and integrated over the
    /// ball mode by mode in closed form. Balls reaching past the box fall back
    /// to a sharp mask on the grid.
    pub fn tail_energy(&self, tau: f64, sigma: f64, eps: f64, i: usize, k: usize) -> f64 {
        let radius = self.c * tau.abs() + eps.powf(-sigma);
        let half_width = 0.5 * self.grid.extent();
        let dim = self.grid.dim as f64;
        if radius >= half_width * dim.sqrt() {
            return 0.0;
        }
        if radius > half_width {
            return self.tail_energy_masked(tau, radius, i, k);
        }
        let [n1, n2] = self.grid.shape();
        let (m1, m2) = (2 * n1, if self.grid.dim == 1 { 1 } else { 2 * n2 });
        let scale = 1.0 / (n1 * n2) as f64;
        let mut dens = vec![0.0; m1 * m2];
        for (order, deriv, weight) in self.density_terms(i, k) {
            let spec = self.differentiated(self.spectrum(tau, order), deriv);
            let mut fine = pad_spectrum(&spec, [n1, n2], [m1, m2]);
            fft2(&mut fine, m1, m2, true);
            dens.par_iter_mut().zip(&fine).for_each(|(d, z)| {
                let v = z.re * scale;
                *d += weight * v * v;
            });
        }
        let mut d_hat = to_complex(&dens);
        fft2(&mut d_hat, m1, m2, false);

        // ∫_{|x|<R} e^{ik·x} dx as a function of the integer |p|² with k = 2πp/L
        let dk = 2.0 * std::f64::consts::PI / self.grid.extent();
        let signed = |a: usize, m: usize| if a <= m / 2 { a as i64 } else { a as i64 - m as i64 };
        let mut keys: Vec<u64> = (0..m1 * m2)
            .map(|idx| {
                let (p1, p2) = (signed(idx / m2, m1), signed(idx % m2, m2.max(1)));
                (p1 * p1 + p2 * p2) as u64
            })
            .collect();
        keys.sort_unstable();
        keys.dedup();
        let two_d = self.grid.dim == 2;
        let ball: Vec<f64> = keys
            .par_iter()
            .map(|&q| {
                let kr = dk * (q as f64).sqrt() * radius;
                if q == 0 {
                    if two_d {
                        std::f64::consts::PI * radius * radius
                    } else {
                        2.0 * radius
                    }
                } else if two_d {
                    2.0 * std::f64::consts::PI * radius * radius * bessel_j1(kr) / kr
                } else {
                    2.0 * radius * kr.sin() / kr
                }
            })
            .collect();
        let terms: Vec<f64> = (0..m1 * m2)
            .map(|idx| {
                let (p1, p2) = (signed(idx / m2, m1), signed(idx % m2, m2.max(1)));
                let q = (p1 * p1 + p2 * p2) as u64;
                let w = ball[keys.binary_search(&q).unwrap()];
                // the grid origin sits at index n/2, a shift by half the box
                let sign = if (p1 + p2).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
                sign * d_hat[idx].re * w
            })
            .collect();
        let inside = ordered_sum(&terms) / (m1 * m2) as f64;
        let total = d_hat[0].re * self.grid.cell() / (if two_d { 4.0 } else { 2.0 });
        (total - inside).max(0.0)
    }

    fn tail_energy_masked(&self, tau: f64, radius: f64, i: usize, k: usize) -> f64 {
        let dens = self.energy_density(tau, i, k);
        let terms: Vec<f64> = (0..self.grid.len())
            .map(|idx| {
                let x = self.grid.point(idx);
                if (x[0] * x[0] + x[1] * x[1]).sqrt() >= radius {
                    dens.values[idx]
                } else {
                    0.0
                }
            })
            .collect();
        ordered_sum(&terms) * self.grid.cell()
    }
}

fn boundary_fraction(grid: &Grid, phi: &[f64], psi: &[f64]) -> f64 {
    let band = grid.n / 8;
    let outer = |i: usize| i < band || i >= grid.n - band;
    let [_, n2] = grid.shape();
    let mut inside = 0.0;
    let mut total = 0.0;
    for idx in 0..phi.len() {
        let e = phi[idx] * phi[idx] + psi[idx] * psi[idx];
        total += e;
        let (a, b) = (idx / n2, idx % n2);
        if outer(a) || (grid.dim == 2 && outer(b)) {
            inside += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        inside / total
    }
}

/// `w(r) = log(r+1)^{3/2} + 1` for `r ≥ 1`, and the even quartic matching its
/// value and first two derivatives at `r = 1` inside.
pub fn weight_w(r: f64) -> f64 {
    if r >= 1.0 {
        return (r + 1.0).ln().powf(1.5) + 1.0;
    }
    let (c0, c2, c4) = weight_blend();
    let r2 = r * r;
    c0 + c2 * r2 + c4 * r2 * r2
}

fn weight_blend() -> (f64, f64, f64) {
    let l = 2f64.ln();
    let g = l.powf(1.5) + 1.0;
    let g1 = 1.5 * l.sqrt() / 2.0;
    let g2 = 1.5 / 4.0 * (0.5 / l.sqrt() - l.sqrt());
    let c4 = (g2 - g1) / 8.0;
    let c2 = (g1 - 4.0 * c4) / 2.0;
    (g - c2 - c4, c2, c4)
}

/// Pointwise `|D^j f|` for `j = 0..=k` on the grid, by spectral differentiation.
fn derivative_magnitudes(grid: &Grid, f: &[f64], k: usize) -> Vec<Vec<f64>> {
    let [n1, n2] = grid.shape();
    let mut fhat = to_complex(f);
    fft2(&mut fhat, n1, n2, false);
    let k1 = angular_frequencies(n1, grid.h);
    let k2 = if grid.dim == 1 { vec![0.0] } else { angular_frequencies(n2, grid.h) };
    let partial = |a: usize, b: usize| -> Vec<f64> {
        let mut s: Vec<Complex64> = fhat
            .par_iter()
            .enumerate()
            .map(|(i, v)| {
                let (p, q) = (i / n2, i % n2);
                if (a % 2 == 1 && p == n1 / 2) || (b % 2 == 1 && n2 > 1 && q == n2 / 2) {
                    return Complex64::new(0.0, 0.0);
                }
                let m = Complex64::new(0.0, k1[p]).powu(a as u32) * Complex64::new(0.0, k2[q]).powu(b as u32);
                v * m
            })
            .collect();
        fft2(&mut s, n1, n2, true);
        let scale = 1.0 / (n1 * n2) as f64;
        s.iter().map(|z| z.re * scale).collect()
    };
    (0..=k)
        .map(|j| {
            let mut acc = vec![0.0; f.len()];
            for a in 0..=j {
                if grid.dim == 1 && a != j {
                    continue;
                }
                let coef = if grid.dim == 2 { binomial(j, a) } else { 1.0 };
                let p = partial(a, j - a);
                for (s, v) in acc.iter_mut().zip(&p) {
                    *s += coef * v * v;
                }
            }
            acc.into_iter().map(f64::sqrt).collect()
        })
        .collect()
}

fn weighted_sobolev(grid: &Grid, f: impl Fn(Point) -> f64 + Sync, k: usize, weight: impl Fn(f64) -> f64) -> f64 {
    let vals = grid.sample(&f);
    let mags = derivative_magnitudes(grid, &vals, k);
    let radii: Vec<f64> = (0..grid.len())
        .map(|i| {
            let x = grid.point(i);
            (x[0] * x[0] + x[1] * x[1]).sqrt()
        })
        .collect();
    mags.iter()
        .map(|m| {
            let sq: Vec<f64> = m.iter().zip(&radii).map(|(v, &r)| (weight(r) * v).powi(2)).collect();
            (ordered_sum(&sq) * grid.cell()).sqrt()
        })
        .sum()
}

/// `‖f‖_{H^k_w} = Σ_{j ≤ k} ‖w D^j f‖_{L²}`
pub fn weighted_norm_w(grid: &Grid, f: impl Fn(Point) -> f64 + Sync, k: usize) -> f64 {
    weighted_sobolev(grid, f, k, weight_w)
}

/// `‖f‖_{H^k_σ} = Σ_{j ≤ k} ‖(1 + |·|)^{1/σ} D^j f‖_{L²}`
pub fn weighted_norm_sigma(grid: &Grid, f: impl Fn(Point) -> f64 + Sync, k: usize, sigma: f64) -> f64 {
    weighted_sobolev(grid, f, k, |r| (1.0 + r).powf(1.0 / sigma))
}

/// Unweighted `Σ_{j ≤ k} ‖D^j f‖_{L²}`.
pub fn sobolev_norm(grid: &Grid, f: impl Fn(Point) -> f64 + Sync, k: usize) -> f64 {
    weighted_sobolev(grid, f, k, |_| 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sech_solution() -> WaveSolution {
        let grid = Grid::covering(2, 12.0, 1.0 / 8.0).unwrap();
        WaveSolution::new(&SechPair, 1.0, grid).unwrap()
    }

    #[test]
    fn initial_condition_is_reproduced() {
        let data = FnData::new("bump", 2, 6.0, |x| (-(x[0] * x[0] + x[1] * x[1])).exp(), |_| 0.0);
        let grid = Grid::covering(2, 8.0, 0.125).unwrap();
        let ws = WaveSolution::new(&data, 1.0, grid).unwrap();
        let u = ws.field(0.0, 0, [0, 0]);
        for (i, v) in u.values.iter().enumerate() {
            assert!((v - data.phi(grid.point(i))).abs() < 1e-13);
        }
    }

    #[test]
    fn constant_velocity_integrates() {
        let data = FnData::new("one", 2, 1.0, |_| 0.0, |_| 1.0);
        let grid = Grid::new(2, 16, 0.5).unwrap();
        let ws = WaveSolution::periodic(&data, 1.0, grid).unwrap();
        let u = ws.field(2.5, 0, [0, 0]);
        assert!(u.values.iter().all(|v| (v - 2.5).abs() < 1e-13));
    }

    #[test]
    fn plane_wave_oscillates() {
        let n = 32;
        let h = 2.0 * PI / n as f64 * 2.0;
        let grid = Grid::new(2, n, h).unwrap();
        let (a, b) = (1.0, 2.0);
        let data = FnData::new("plane", 2, 1.0, move |x| (a * x[0] + b * x[1]).cos(), |_| 0.0);
        let c = 0.8;
        let ws = WaveSolution::periodic(&data, c, grid).unwrap();
        let kk = (a * a + b * b).sqrt();
        for tau in [0.3, 1.7, 9.0] {
            let u = ws.field(tau, 0, [0, 0]);
            for (i, v) in u.values.iter().enumerate() {
                let x = grid.point(i);
                let exact = (c * kk * tau).cos() * (a * x[0] + b * x[1]).cos();
                assert!((v - exact).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn energy_is_conserved() {
        let ws = sech_solution();
        for (i, k) in [(0, 0), (1, 0), (0, 2), (2, 2)] {
            let e0 = ws.energy(0.0, i, k);
            assert!(e0 > 0.0);
            for tau in [1.0, 5.0, 10.0] {
                let drift = (ws.energy(tau, i, k) - e0).abs() / e0;
                assert!(drift < 1e-10, "({i},{k}) at {tau}: {drift}");
            }
        }
    }

    #[test]
    fn spectral_energy_matches_density_integral() {
        let ws = sech_solution();
        let spec = ws.energy(0.7, 1, 1);
        let dens = ws.energy_density(0.7, 1, 1);
        let direct = 0.5 * dens.values.iter().sum::<f64>() * ws.grid().cell();
        assert!((spec - direct).abs() < 1e-10 * spec);
    }

    #[test]
    fn time_reversal() {
        let grid = Grid::covering(2, 12.0, 0.125).unwrap();
        let fwd = WaveSolution::new(&SechPair, 1.0, grid).unwrap();
        let flipped = FnData::new("flip", 2, 8.0, |x| SechPair.phi(x), |x| -SechPair.psi(x));
        let bwd = WaveSolution::new(&flipped, 1.0, grid).unwrap();
        let a = fwd.field(1.3, 0, [0, 0]);
        let b = bwd.field(-1.3, 0, [0, 0]);
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn aliasing_is_detected() {
        let grid = Grid::covering(2, 12.0, 1.0).unwrap();
        assert!(matches!(WaveSolution::new(&SechPair, 1.0, grid), Err(Error::SpectralGrid(_))));
    }

    #[test]
    fn containment_is_detected() {
        let grid = Grid::covering(2, 3.0, 0.125).unwrap();
        assert!(matches!(WaveSolution::new(&SechPair, 1.0, grid), Err(Error::SpectralGrid(_))));
    }

    #[test]
    fn weight_properties() {
        assert!((weight_w(0.0) - 1.1759).abs() < 1e-3);
        for i in 0..=100 {
            let r = i as f64 * 0.01;
            let w = weight_w(r);
            assert!((1.0..=2.0).contains(&w), "w({r}) = {w}");
        }
        // C² at r = 1
        let h = 1e-4;
        let d1 = |r: f64| (weight_w(r + h) - weight_w(r - h)) / (2.0 * h);
        assert!((weight_w(1.0 - 1e-12) - weight_w(1.0)).abs() < 1e-10);
        assert!((d1(1.0 - 2.0 * h) - d1(1.0 + 2.0 * h)).abs() < 1e-3);
    }

    #[test]
    fn zero_norms() {
        let grid = Grid::covering(2, 4.0, 0.25).unwrap();
        assert_eq!(weighted_norm_w(&grid, |_| 0.0, 3), 0.0);
        assert_eq!(weighted_norm_sigma(&grid, |_| 0.0, 3, 0.5), 0.0);
    }

    #[test]
    fn sigma_norm_monotone() {
        let grid = Grid::covering(2, 10.0, 0.125).unwrap();
        let f = |x: Point| (-(x[0] * x[0] + x[1] * x[1])).exp();
        let a = weighted_norm_sigma(&grid, f, 2, 1.0);
        let b = weighted_norm_sigma(&grid, f, 2, 0.5);
        assert!(b >= a);
    }

    #[test]
    fn bump_norm_is_within_weight_range() {
        let grid = Grid::covering(2, 8.0, 0.0625).unwrap();
        let f = |x: Point| (-8.0 * (x[0] * x[0] + x[1] * x[1])).exp();
        for k in 0..3 {
            let plain = sobolev_norm(&grid, f, k);
            let w = weighted_norm_w(&grid, f, k);
            assert!(w >= plain && w <= 2.0 * plain, "k={k}: {w} vs {plain}");
        }
    }

    #[test]
    fn registry() {
        assert_eq!(initial_data("paper-sech-pair").unwrap().dim(), 2);
        assert_eq!(initial_data("paper-sech-1d").unwrap().dim(), 1);
        assert!(initial_data("nope").is_err());
    }

    #[test]
    fn bessel_values() {
        for (x, j1) in [
            (0.0, 0.0),
            (1.0, 0.440_050_585_744_933_5),
            (10.0, 0.043_472_746_168_861_44),
            (100.0, -0.077_145_352_014_112_16),
        ] {
            assert!((bessel_j1(x) - j1).abs() < 1e-14, "J1({x})");
        }
    }

    #[test]
    fn tail_does_not_depend_on_the_grid() {
        let tail = |h: f64| {
            let ws = WaveSolution::new(&SechPair, 1.0, Grid::covering(2, 12.0, h).unwrap()).unwrap();
            ws.tail_energy(1.0, 0.5, 0.25, 0, 0)
        };
        let (coarse, fine) = (tail(0.125), tail(0.0625));
        assert!((coarse - fine).abs() < 1e-9 * fine, "{coarse} vs {fine}");
        // a sharp mask on a much finer grid lands close by
        let grid = Grid::covering(2, 12.0, 1.0 / 64.0).unwrap();
        let ws = WaveSolution::new(&SechPair, 1.0, grid).unwrap();
        let masked = ws.tail_energy_masked(1.0, 1.0 + 0.25f64.powf(-0.5), 0, 0);
        assert!((masked - fine).abs() < 5e-3 * fine, "{masked} vs {fine}");
    }
}
