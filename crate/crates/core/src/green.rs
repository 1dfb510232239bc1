//! The lattice Green's function `φ` with `Δφ = δ₀`, `φ(0) = 0`.
//!
//! Two independent 2D backends:
//!
//! * quadrature of the one-dimensional integral left after integrating the
//!   Fourier representation over one frequency in closed form,
//!   `φ(m, n) = (1/π) ∫₀^π (1 - cos(mk) e^{-nβ(k)}) / (2 sinh β(k)) dk`
//!   with `cosh β = 2 - cos k`;
//! * the five-point stencil propagated outward from the diagonal in exact
//!   arithmetic over `Q + Q/π`, evaluated with a high-precision `π` at the end.
//!
//! The 1D function is the closed form `|j| / 2`.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Axis, LatticeWindow, ScalarField, Sign, Site};
use crate::quad::GaussRule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GreenMethod {
    Quadrature,
    Recurrence,
    ClosedForm1d,
}

impl GreenMethod {
    pub fn name(self) -> &'static str {
        match self {
            GreenMethod::Quadrature => "quadrature",
            GreenMethod::Recurrence => "recurrence",
            GreenMethod::ClosedForm1d => "closed_form_1d",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "quadrature" => Some(GreenMethod::Quadrature),
            "recurrence" => Some(GreenMethod::Recurrence),
            "closed_form_1d" => Some(GreenMethod::ClosedForm1d),
            _ => None,
        }
    }
}

/// Linear operators applied to `φ` and `χ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Operator {
    Identity,
    Shift(Axis, Sign),
    Centered(Axis),
}

impl Operator {
    /// The operators needed by the residual in dimension `dim`.
    pub fn all(dim: usize) -> Vec<Operator> {
        let mut ops = vec![Operator::Identity];
        for &a in Axis::all(dim) {
            ops.push(Operator::Shift(a, Sign::Plus));
            ops.push(Operator::Shift(a, Sign::Minus));
            ops.push(Operator::Centered(a));
        }
        ops
    }

    pub fn name(self) -> String {
        match self {
            Operator::Identity => "identity".into(),
            Operator::Shift(a, s) => {
                format!("shift{}{}", a.index() + 1, if s == Sign::Plus { "+" } else { "-" })
            }
            Operator::Centered(a) => format!("centered{}", a.index() + 1),
        }
    }

    /// `L f (j)` given point access to `f`.
    pub fn eval(self, j: Site, f: impl Fn(Site) -> f64) -> f64 {
        match self {
            Operator::Identity => f(j),
            Operator::Shift(a, s) => {
                let e = a.unit();
                let k = s.value();
                f([j[0] + k * e[0], j[1] + k * e[1]])
            }
            Operator::Centered(a) => {
                let e = a.unit();
                f([j[0] + e[0], j[1] + e[1]]) - f([j[0] - e[0], j[1] - e[1]])
            }
        }
    }

    /// How far the operator reaches from the evaluation site.
    pub fn reach(self) -> usize {
        match self {
            Operator::Identity => 0,
            _ => 1,
        }
    }

    pub fn apply(self, f: &ScalarField) -> ScalarField {
        match self {
            Operator::Identity => f.clone(),
            Operator::Shift(a, s) => f.shift(a, s),
            Operator::Centered(a) => f.diff_centered(a),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreenTable {
    radius: usize,
    method: GreenMethod,
    tolerance: f64,
    values: ScalarField,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreenResidual {
    /// `|Δφ(0) - 1|`
    pub origin: f64,
    /// `max |Δφ(j)|` over `0 < |j|_∞ < radius`
    pub interior: f64,
}

impl GreenResidual {
    pub fn max(&self) -> f64 {
        self.origin.max(self.interior)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsymptoteFit {
    /// Fitted additive constant of `(1/2π) log|j| + C₀`.
    pub c0: f64,
    /// Fitted coefficient of `cos(4θ) / |j|²`.
    pub k4: f64,
    /// `max |φ(j) - (1/2π) log|j| - C₀| · |j|²` over the fit range.
    pub k_bound: f64,
    /// OLS slope of the log of the per-shell maximum deviation against log radius.
    pub residual_slope: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl GreenTable {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn method(&self) -> GreenMethod {
        self.method
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn dim(&self) -> usize {
        self.values.window().dim()
    }

    pub fn values(&self) -> &ScalarField {
        &self.values
    }

    /// Rebuilds a table from stored values (used by the on-disk cache).
    pub fn from_parts(method: GreenMethod, tolerance: f64, values: ScalarField) -> Result<Self> {
        let w = *values.window();
        let radius = w.half_extent(Axis::X1);
        if w.dim() == 2 && w.half_extent(Axis::X2) != radius {
            return Err(Error::ShapeMismatch("green table window must be square".into()));
        }
        Ok(Self { radius, method, tolerance, values })
    }

    pub fn covers(&self, j: Site) -> bool {
        self.values.window().contains(j)
    }

    pub fn get(&self, j: Site) -> Option<f64> {
        self.values.window().index(j).map(|i| self.values.values()[i])
    }

    /// `φ(j)`; panics outside the table.
    pub fn value(&self, j: Site) -> f64 {
        self.get(j).unwrap_or_else(|| panic!("green table of radius {} queried at {j:?}", self.radius))
    }

    pub fn residual(&self) -> GreenResidual {
        let w = *self.values.window();
        let lap = self.values.laplacian();
        let r = self.radius;
        let interior: Vec<f64> = w
            .sites()
            .filter(|&j| j != [0, 0] && j[0].unsigned_abs() < r as u64 && j[1].unsigned_abs() < r.max(1) as u64)
            .map(|j| lap.get(j).abs())
            .collect();
        GreenResidual {
            origin: (lap.get([0, 0]) - 1.0).abs(),
            interior: interior.into_iter().fold(0.0, f64::max),
        }
    }

    /// `‖Lφ‖²_{D(center, r)} = Σ_{k ∈ D(center, r)} (Lφ)(k)²`
    pub fn restricted_norm_sq(&self, op: Operator, center: Site, r: usize) -> Result<f64> {
        let needed = center[0].unsigned_abs().max(center[1].unsigned_abs()) as usize + r + op.reach();
        if needed > self.radius {
            return Err(Error::GreenCoverage { radius: self.radius, needed });
        }
        let r = r as i64;
        let r2 = if self.dim() == 1 { 0 } else { r };
        let mut terms = Vec::new();
        for k1 in center[0] - r..=center[0] + r {
            for k2 in center[1] - r2..=center[1] + r2 {
                let v = op.eval([k1, k2], |s| self.value(s));
                terms.push(v * v);
            }
        }
        Ok(crate::lattice::ordered_sum(&terms))
    }

    /// Least-squares fit of `φ(j) - (1/2π) log|j| ≈ C₀ + K₄ cos 4θ / |j|²`
    /// over `r_min ≤ |j| ≤ r_max` (Euclidean).
    pub fn fit_asymptote(&self, r_min: f64, r_max: f64) -> Result<AsymptoteFit> {
        if self.dim() != 2 {
            return Err(Error::Insufficient("asymptotic fit needs a 2D table".into()));
        }
        if r_max > self.radius as f64 {
            return Err(Error::GreenCoverage { radius: self.radius, needed: r_max.ceil() as usize });
        }
        let pts: Vec<(f64, f64, f64)> = self
            .values
            .window()
            .sites()
            .filter_map(|j| {
                let rho = ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt();
                if rho < r_min || rho > r_max {
                    return None;
                }
                let theta = (j[1] as f64).atan2(j[0] as f64);
                let y = self.value(j) - rho.ln() / (2.0 * PI);
                Some((rho, (4.0 * theta).cos() / (rho * rho), y))
            })
            .collect();
        if pts.len() < 3 {
            return Err(Error::Insufficient("too few lattice points in the fit annulus".into()));
        }
        // normal equations for y = c0 + k4 x
        let n = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), p| (a + p.1, b + p.2));
        let (mx, my) = (sx / n, sy / n);
        let (sxx, sxy) = pts
            .iter()
            .fold((0.0, 0.0), |(a, b), p| (a + (p.1 - mx) * (p.1 - mx), b + (p.1 - mx) * (p.2 - my)));
        let k4 = sxy / sxx;
        let c0 = my - k4 * mx;

        let mut k_bound: f64 = 0.0;
        let shells = (r_max.floor() - r_min.floor()) as usize + 1;
        let mut shell_max = vec![0.0f64; shells];
        for &(rho, _, y) in &pts {
            let dev = (y - c0).abs();
            k_bound = k_bound.max(dev * rho * rho);
            let s = (rho.floor() - r_min.floor()) as usize;
            shell_max[s.min(shells - 1)] = shell_max[s.min(shells - 1)].max(dev);
        }
        let (xs, ys): (Vec<f64>, Vec<f64>) = shell_max
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(|(s, &m)| ((r_min.floor() + s as f64 + 0.5).ln(), m.ln()))
            .unzip();
        let residual_slope = ols(&xs, &ys).0;
        Ok(AsymptoteFit { c0, k4, k_bound, residual_slope, r_min, r_max })
    }
}

/// `(slope, intercept)` of an ordinary least-squares line.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

const GAUSS_NODES: usize = 20;
const EXP_CUTOFF: f64 = 40.0;

/// `β(k) = 2 asinh(sin(k/2))` and `1 / (2 sinh β)`.
fn beta_and_kernel(k: f64) -> (f64, f64) {
    let s = (0.5 * k).sin();
    let beta = 2.0 * s.asinh();
    let sinh_beta = 2.0 * s * (1.0 + s * s).sqrt();
    (beta, 0.5 / sinh_beta)
}

/// `φ(m, n)` for `0 ≤ m ≤ n` and all `m`, computed for one `n` at a time.
fn quadrature_row(n: usize, panels: usize, rule: &GaussRule) -> Vec<f64> {
    if n == 0 {
        return vec![0.0];
    }
    let nf = n as f64;
    let s = (0.5 * EXP_CUTOFF / nf).sinh();
    let cut = if s < 1.0 { 2.0 * s.asin() } else { PI };

    struct Node {
        k: f64,
        weight: f64,
        decay: f64,
        one_minus_decay: f64,
    }
    let nodes: Vec<Node> = rule
        .composite_points(0.0, cut, panels)
        .into_iter()
        .map(|(k, w)| {
            let (beta, kern) = beta_and_kernel(k);
            Node { k, weight: w * kern, decay: (-nf * beta).exp(), one_minus_decay: -(-nf * beta).exp_m1() }
        })
        .collect();

    // m-independent part beyond the cut, where e^{-nβ} < e^{-40}
    let tail = if cut < PI {
        let ratio = PI / cut;
        let q = 2 * (ratio.log2().ceil() as usize) + 4;
        let mut t = 0.0;
        for p in 0..q {
            let a = cut * ratio.powf(p as f64 / q as f64);
            let b = cut * ratio.powf((p + 1) as f64 / q as f64);
            t += rule.integrate(a, b, |k| beta_and_kernel(k).1);
        }
        t
    } else {
        0.0
    };

    (0..=n)
        .map(|m| {
            let mf = m as f64;
            let mut acc = 0.0;
            for nd in &nodes {
                let h = (0.5 * mf * nd.k).sin();
                acc += nd.weight * (nd.one_minus_decay + nd.decay * 2.0 * h * h);
            }
            (acc + tail) / PI
        })
        .collect()
}

fn fill_from_sector(radius: usize, sector: &[Vec<f64>]) -> ScalarField {
    let w = LatticeWindow::square(radius).expect("radius >= 1");
    ScalarField::from_fn(w, |j| {
        let a = j[0].unsigned_abs() as usize;
        let b = j[1].unsigned_abs() as usize;
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        sector[hi][lo]
    })
}

/// 2D Green's function by quadrature, refined until the stencil residual meets
/// `tolerance`.
pub fn green_function(radius: usize, tolerance: f64) -> Result<GreenTable> {
    if radius < 1 {
        return Err(Error::InvalidWindow("green table radius must be >= 1".into()));
    }
    let rule = GaussRule::new(GAUSS_NODES);
    let mut panels = 12;
    let mut achieved = f64::INFINITY;
    while panels <= 96 {
        let sector: Vec<Vec<f64>> = (0..=radius).into_par_iter().map(|n| quadrature_row(n, panels, &rule)).collect();
        let table = GreenTable {
            radius,
            method: GreenMethod::Quadrature,
            tolerance,
            values: fill_from_sector(radius, &sector),
        };
        achieved = table.residual().max();
        if achieved <= tolerance {
            return Ok(table);
        }
        panels *= 2;
    }
    Err(Error::GreenTolerance { tolerance, achieved })
}

/// Element of `Q + Q/π`, stored as `(rational part, coefficient of 1/π)`.
#[derive(Clone, Debug)]
struct QPi(BigRational, BigRational);

impl QPi {
    fn rational(r: BigRational) -> Self {
        QPi(r, BigRational::zero())
    }

    fn lin(&self, c: i64, other: &QPi) -> QPi {
        let c = BigRational::from_integer(BigInt::from(c));
        QPi(&self.0 + &c * &other.0, &self.1 + &c * &other.1)
    }

    fn scale(&self, c: i64) -> QPi {
        let c = BigRational::from_integer(BigInt::from(c));
        QPi(&self.0 * &c, &self.1 * &c)
    }
}

/// `π · 2^bits`, truncated, via Machin's formula.
fn pi_fixed(bits: u64) -> BigInt {
    let guard = 32;
    let one = BigInt::one() << (bits + guard);
    let atan_inv = |x: i64| -> BigInt {
        let x2 = BigInt::from(x * x);
        let mut power = &one / BigInt::from(x);
        let mut sum = power.clone();
        let mut k: i64 = 1;
        while !power.is_zero() {
            power = &power / &x2;
            let term = &power / BigInt::from(2 * k + 1);
            if k % 2 == 1 {
                sum -= term;
            } else {
                sum += term;
            }
            k += 1;
        }
        sum
    };
    let pi = atan_inv(5) * 16 - atan_inv(239) * 4;
    pi >> guard
}

fn bits_of(r: &BigRational) -> u64 {
    r.numer().bits().max(r.denom().bits())
}

/// `a + b/π` rounded to f64.
fn evaluate(x: &QPi, pi: &BigInt, bits: u64) -> f64 {
    let scale = BigInt::one() << bits;
    let a = (x.0.numer() * &scale) / x.0.denom();
    let b = (x.1.numer() * &scale * &scale) / (x.1.denom() * pi);
    let total = a + b;
    let shift = bits.saturating_sub(64);
    let top = &total >> shift;
    top.to_f64().unwrap_or(f64::NAN) / 2f64.powi((bits - shift) as i32)
}

/// 2D Green's function from the stencil recurrence in exact arithmetic.
pub fn green_function_recurrence(radius: usize) -> Result<GreenTable> {
    if radius < 1 {
        return Err(Error::InvalidWindow("green table radius must be >= 1".into()));
    }
    let r = radius;
    // sector[m][n] for 0 <= n <= m <= r
    let mut sector: Vec<Vec<Option<QPi>>> = (0..=r).map(|m| vec![None; m + 1]).collect();
    let zero = QPi::rational(BigRational::zero());

    // diagonal: φ(n, n) = (1/π) Σ_{k=1}^{n} 1/(2k-1)
    let mut harmonic = BigRational::zero();
    sector[0][0] = Some(zero.clone());
    for n in 1..=r {
        harmonic += BigRational::new(BigInt::one(), BigInt::from(2 * n as i64 - 1));
        sector[n][n] = Some(QPi(BigRational::zero(), harmonic.clone()));
    }
    // first subdiagonal: φ(1,0) = 1/4, φ(n+1, n) = 2φ(n, n) - φ(n, n-1)
    if r >= 1 {
        sector[1][0] = Some(QPi::rational(BigRational::new(BigInt::one(), BigInt::from(4))));
    }
    for n in 1..r {
        let next = sector[n][n].as_ref().unwrap().scale(2).lin(-1, sector[n][n - 1].as_ref().unwrap());
        sector[n + 1][n] = Some(next);
    }

    let get = |s: &Vec<Vec<Option<QPi>>>, m: i64, n: i64| -> QPi {
        let (a, b) = (m.unsigned_abs() as usize, n.unsigned_abs() as usize);
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        s[hi][lo].clone().expect("recurrence order")
    };
    // φ(m+1, n) = 4φ(m, n) - φ(m-1, n) - φ(m, n+1) - φ(m, n-1), diagonal by diagonal
    for d in 2..=r {
        for n in 0..=(r - d) {
            let m = (n + d - 1) as i64;
            let n = n as i64;
            let v = get(&sector, m, n)
                .scale(4)
                .lin(-1, &get(&sector, m - 1, n))
                .lin(-1, &get(&sector, m, n + 1))
                .lin(-1, &get(&sector, m, n - 1));
            sector[(m + 1) as usize][n as usize] = Some(v);
        }
    }

    let max_bits = sector
        .iter()
        .flatten()
        .flatten()
        .map(|q| bits_of(&q.0).max(bits_of(&q.1)))
        .max()
        .unwrap_or(0);
    let bits = 2 * max_bits + 128;
    let pi = pi_fixed(bits);
    let exact: Vec<Vec<QPi>> = sector.into_iter().map(|row| row.into_iter().map(Option::unwrap).collect()).collect();
    let numeric: Vec<Vec<f64>> = exact
        .par_iter()
        .map(|row| row.iter().map(|q| evaluate(q, &pi, bits)).collect())
        .collect();
    if numeric.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::GreenTolerance { tolerance: 0.0, achieved: f64::NAN });
    }
    let mut table = GreenTable {
        radius,
        method: GreenMethod::Recurrence,
        tolerance: 0.0,
        values: fill_from_sector(radius, &numeric),
    };
    table.tolerance = table.residual().max().max(f64::EPSILON);
    Ok(table)
}

/// The 1D Green's function `φ(j) = |j| / 2`.
pub fn green_function_1d(radius: usize) -> Result<GreenTable> {
    let w = LatticeWindow::line(radius)?;
    let values = ScalarField::from_fn(w, |j| 0.5 * j[0].abs() as f64);
    Ok(GreenTable { radius, method: GreenMethod::ClosedForm1d, tolerance: 0.0, values })
}

/// Green table of either dimension; 2D uses quadrature.
pub fn green_for_dim(dim: usize, radius: usize, tolerance: f64) -> Result<GreenTable> {
    match dim {
        1 => green_function_1d(radius),
        2 => green_function(radius, tolerance),
        _ => Err(Error::InvalidWindow(format!("dimension {dim} not supported"))),
    }
}
