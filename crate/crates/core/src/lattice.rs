//! Finite lattice windows, scalar fields on them, and the discrete difference
//! operators of the harmonic lattice.
//!
//! A window is the full box `|j_i| <= half_extent_i` in one or two dimensions.
//! Fields are stored densely in row-major order (axis `X2` fastest). Every read
//! outside the window returns zero, so all operators are total and linear.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice site. One-dimensional windows use `[j, 0]`.
pub type Site = [i64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X1, Axis::X2];

    pub fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }

    pub fn unit(self) -> Site {
        match self {
            Axis::X1 => [1, 0],
            Axis::X2 => [0, 1],
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::X1 => Axis::X2,
            Axis::X2 => Axis::X1,
        }
    }

    /// The axes that exist in a lattice of dimension `dim`.
    pub fn all(dim: usize) -> &'static [Axis] {
        if dim == 1 {
            &Self::BOTH[..1]
        } else {
            &Self::BOTH[..]
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> i64 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Boundary {
    #[default]
    DirichletZero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct LatticeWindow {
    dim: usize,
    half: [usize; 2],
    boundary: Boundary,
}

impl LatticeWindow {
    pub fn new(dim: usize, half: [usize; 2]) -> Result<Self> {
        match dim {
            1 => {
                if half[0] < 1 {
                    return Err(Error::InvalidWindow("half extent must be >= 1".into()));
                }
                Ok(Self { dim, half: [half[0], 0], boundary: Boundary::DirichletZero })
            }
            2 => {
                if half[0] < 1 || half[1] < 1 {
                    return Err(Error::InvalidWindow("half extent must be >= 1 on every axis".into()));
                }
                Ok(Self { dim, half, boundary: Boundary::DirichletZero })
            }
            _ => Err(Error::InvalidWindow(format!("dimension {dim} not supported"))),
        }
    }

    pub fn line(half: usize) -> Result<Self> {
        Self::new(1, [half, 0])
    }

    pub fn square(half: usize) -> Result<Self> {
        Self::new(2, [half, half])
    }

    /// Square (or line) window of the given dimension.
    pub fn cube(dim: usize, half: usize) -> Result<Self> {
        Self::new(dim, [half, half])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn half_extent(&self, axis: Axis) -> usize {
        self.half[axis.index()]
    }

    /// Number of sites along each axis (`1` along the missing axis in 1D).
    pub fn shape(&self) -> [usize; 2] {
        [2 * self.half[0] + 1, 2 * self.half[1] + 1]
    }

    pub fn len(&self) -> usize {
        let [n1, n2] = self.shape();
        n1 * n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Storage stride of an axis.
    pub fn stride(&self, axis: Axis) -> usize {
        match axis {
            Axis::X1 => self.shape()[1],
            Axis::X2 => 1,
        }
    }

    pub fn contains(&self, j: Site) -> bool {
        j[0].unsigned_abs() as usize <= self.half[0] && j[1].unsigned_abs() as usize <= self.half[1]
    }

    pub fn index(&self, j: Site) -> Option<usize> {
        if !self.contains(j) {
            return None;
        }
        let i1 = (j[0] + self.half[0] as i64) as usize;
        let i2 = (j[1] + self.half[1] as i64) as usize;
        Some(i1 * self.shape()[1] + i2)
    }

    pub fn site(&self, index: usize) -> Site {
        let n2 = self.shape()[1];
        [
            (index / n2) as i64 - self.half[0] as i64,
            (index % n2) as i64 - self.half[1] as i64,
        ]
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.len()).map(move |i| self.site(i))
    }

    /// Distance (in lattice steps) from `j` to the nearest face of the window,
    /// counting only the axes that exist. `0` on the outermost shell.
    pub fn depth(&self, j: Site) -> usize {
        Axis::all(self.dim)
            .iter()
            .map(|a| self.half[a.index()] - j[a.index()].unsigned_abs() as usize)
            .min()
            .unwrap_or(0)
    }

    /// True when every site within `reach` steps of `j` along each axis is
    /// inside the window.
    pub fn is_interior(&self, j: Site, reach: usize) -> bool {
        self.contains(j) && self.depth(j) >= reach
    }

    /// The window grown (or shrunk) by `delta` sites on every existing axis.
    pub fn grown(&self, delta: isize) -> Result<Self> {
        let grow = |h: usize| (h as isize + delta).max(0) as usize;
        match self.dim {
            1 => Self::line(grow(self.half[0])),
            _ => Self::new(2, [grow(self.half[0]), grow(self.half[1])]),
        }
    }
}

/// Real values on every site of a window. Reads outside the window are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    window: LatticeWindow,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(window: LatticeWindow) -> Self {
        Self { window, values: vec![0.0; window.len()] }
    }

    pub fn constant(window: LatticeWindow, c: f64) -> Self {
        Self { window, values: vec![c; window.len()] }
    }

    pub fn from_fn(window: LatticeWindow, mut f: impl FnMut(Site) -> f64) -> Self {
        let values = (0..window.len()).map(|i| f(window.site(i))).collect();
        Self { window, values }
    }

    pub fn from_values(window: LatticeWindow, values: Vec<f64>) -> Result<Self> {
        if values.len() != window.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a window of {} sites",
                values.len(),
                window.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { window, values })
    }

    /// Builds a field without the finiteness scan. Callers guarantee the length.
    pub(crate) fn from_raw(window: LatticeWindow, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), window.len());
        Self { window, values }
    }

    /// Indicator of a single site.
    pub fn delta(window: LatticeWindow, at: Site) -> Self {
        let mut f = Self::zeros(window);
        if let Some(i) = window.index(at) {
            f.values[i] = 1.0;
        }
        f
    }

    pub fn window(&self) -> &LatticeWindow {
        &self.window
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, j: Site) -> f64 {
        self.window.index(j).map_or(0.0, |i| self.values[i])
    }

    pub fn set(&mut self, j: Site, v: f64) {
        let i = self.window.index(j).expect("site outside window");
        self.values[i] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.window, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.window, other.window, "fields live on different windows");
        Self::from_raw(
            self.window,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        )
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_with(other, |a, b| a * b)
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        self.zip_with(other, |a, b| a + s * b)
    }

    pub fn sum(&self) -> f64 {
        ordered_sum(&self.values)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.window, other.window, "fields live on different windows");
        let prods: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect();
        ordered_sum(&prods)
    }

    pub fn norm_l2(&self) -> f64 {
        weighted_l2(&[self])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Restriction to (or zero extension onto) another window.
    pub fn resample(&self, window: LatticeWindow) -> Self {
        Self::from_fn(window, |j| self.get(j))
    }

    /// Reads `f(j + offset * e_axis)` for every site, zero outside.
    fn offset_read(&self, axis: Axis, offset: i64) -> Self {
        let w = self.window;
        if w.dim == 1 && axis == Axis::X2 {
            return if offset == 0 { self.clone() } else { Self::zeros(w) };
        }
        let n = w.shape()[axis.index()] as i64;
        let stride = w.stride(axis) as i64;
        let values = (0..w.len())
            .map(|i| {
                let coord = (i as i64 / stride) % n;
                let c = coord + offset;
                if (0..n).contains(&c) {
                    self.values[(i as i64 + offset * stride) as usize]
                } else {
                    0.0
                }
            })
            .collect();
        Self::from_raw(w, values)
    }

    /// `S_i^± f (j) = f(j ± e_i)`
    pub fn shift(&self, axis: Axis, sign: Sign) -> Self {
        self.offset_read(axis, sign.value())
    }

    /// `δ_i^+ f (j) = f(j + e_i) - f(j)`
    pub fn diff_forward(&self, axis: Axis) -> Self {
        self.offset_read(axis, 1).sub(self)
    }

    /// `δ_i^- f (j) = f(j) - f(j - e_i)`
    pub fn diff_backward(&self, axis: Axis) -> Self {
        self.sub(&self.offset_read(axis, -1))
    }

    /// `δ_i f (j) = f(j + e_i) - f(j - e_i)`
    pub fn diff_centered(&self, axis: Axis) -> Self {
        self.offset_read(axis, 1).sub(&self.offset_read(axis, -1))
    }

    /// `Δ_i f = S_i^+ f - 2 f + S_i^- f`
    pub fn axis_laplacian(&self, axis: Axis) -> Self {
        let plus = self.offset_read(axis, 1);
        let minus = self.offset_read(axis, -1);
        Self::from_raw(
            self.window,
            self.values
                .iter()
                .zip(plus.values.iter().zip(&minus.values))
                .map(|(&c, (&p, &m))| p - 2.0 * c + m)
                .collect(),
        )
    }

    /// `Δf(j) = -2d f(j) + Σ_i f(j + e_i) + f(j - e_i)`
    pub fn laplacian(&self) -> Self {
        let mut out = vec![0.0; self.values.len()];
        apply_laplacian(&self.window, &self.values, &mut out);
        Self::from_raw(self.window, out)
    }
}

/// Euclidean norm of the concatenation of all values of the given fields.
pub fn weighted_l2(fields: &[&ScalarField]) -> f64 {
    let squares: Vec<f64> = fields
        .iter()
        .flat_map(|f| f.values.iter().map(|v| v * v))
        .collect();
    ordered_sum(&squares).sqrt()
}

/// Sum with a fixed association order, independent of the thread count.
pub fn ordered_sum(values: &[f64]) -> f64 {
    const CHUNK: usize = 4096;
    if values.len() <= CHUNK {
        return values.iter().sum();
    }
    let partial: Vec<f64> = values.par_chunks(CHUNK).map(|c| c.iter().sum::<f64>()).collect();
    partial.iter().sum()
}

/// Writes the discrete Laplacian of `src` (zero outside the window) into `dst`.
pub fn apply_laplacian(window: &LatticeWindow, src: &[f64], dst: &mut [f64]) {
    let [n1, n2] = window.shape();
    assert_eq!(src.len(), n1 * n2);
    assert_eq!(dst.len(), n1 * n2);
    if window.dim() == 1 {
        for i in 0..n1 {
            let left = if i > 0 { src[i - 1] } else { 0.0 };
            let right = if i + 1 < n1 { src[i + 1] } else { 0.0 };
            dst[i] = left + right - 2.0 * src[i];
        }
        return;
    }
    dst.par_chunks_mut(n2).enumerate().for_each(|(i, row)| {
        let here = &src[i * n2..(i + 1) * n2];
        let up = (i > 0).then(|| &src[(i - 1) * n2..i * n2]);
        let down = (i + 1 < n1).then(|| &src[(i + 1) * n2..(i + 2) * n2]);
        for k in 0..n2 {
            let mut acc = -4.0 * here[k];
            if k > 0 {
                acc += here[k - 1];
            }
            if k + 1 < n2 {
                acc += here[k + 1];
            }
            if let Some(u) = up {
                acc += u[k];
            }
            if let Some(d) = down {
                acc += d[k];
            }
            row[k] = acc;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn win(h: usize) -> LatticeWindow {
        LatticeWindow::square(h).unwrap()
    }

    #[test]
    fn window_rejects_degenerate_extent() {
        assert!(LatticeWindow::square(0).is_err());
        assert!(LatticeWindow::new(2, [3, 0]).is_err());
        assert!(LatticeWindow::new(3, [1, 1]).is_err());
        assert!(LatticeWindow::line(1).is_ok());
    }

    #[test]
    fn index_round_trips() {
        let w = LatticeWindow::new(2, [3, 5]).unwrap();
        for i in 0..w.len() {
            assert_eq!(w.index(w.site(i)), Some(i));
        }
        assert_eq!(w.index([4, 0]), None);
        let l = LatticeWindow::line(4).unwrap();
        assert_eq!(l.len(), 9);
        assert_eq!(l.site(0), [-4, 0]);
    }

    #[test]
    fn out_of_window_reads_are_zero() {
        let f = ScalarField::constant(win(2), 7.0);
        assert_eq!(f.get([3, 0]), 0.0);
        assert_eq!(f.get([0, -3]), 0.0);
        assert_eq!(f.get([2, 2]), 7.0);
    }

    #[test]
    fn from_values_rejects_nan() {
        let w = win(1);
        let mut v = vec![0.0; w.len()];
        v[4] = f64::NAN;
        assert_eq!(ScalarField::from_values(w, v), Err(Error::NonFinite { index: 4 }));
    }

    #[test]
    fn laplacian_of_delta_is_the_stencil() {
        let w = win(3);
        let lap = ScalarField::delta(w, [0, 0]).laplacian();
        for j in w.sites() {
            let expected = match j {
                [0, 0] => -4.0,
                [1, 0] | [-1, 0] | [0, 1] | [0, -1] => 1.0,
                _ => 0.0,
            };
            assert_eq!(lap.get(j), expected, "at {j:?}");
        }
    }

    #[test]
    fn laplacian_kills_constants_in_the_interior() {
        let w = win(4);
        let lap = ScalarField::constant(w, 2.5).laplacian();
        for j in w.sites().filter(|&j| w.is_interior(j, 1)) {
            assert_eq!(lap.get(j), 0.0);
        }
    }

    #[test]
    fn laplacian_of_quadratic_matches_direct_summation() {
        let w = win(5);
        let f = ScalarField::from_fn(w, |j| (j[0] * j[0]) as f64);
        let lap = f.laplacian();
        for j in w.sites().filter(|&j| w.is_interior(j, 1)) {
            // direct summation of the five-point stencil
            let direct: f64 = [[1, 0], [-1, 0], [0, 1], [0, -1]]
                .iter()
                .map(|e| f.get([j[0] + e[0], j[1] + e[1]]))
                .sum::<f64>()
                - 4.0 * f.get(j);
            assert_eq!(lap.get(j), direct);
            assert_eq!(lap.get(j), 2.0);
        }
    }

    #[test]
    fn one_dimensional_laplacian() {
        let w = LatticeWindow::line(4).unwrap();
        let lap = ScalarField::delta(w, [0, 0]).laplacian();
        assert_eq!(lap.get([0, 0]), -2.0);
        assert_eq!(lap.get([1, 0]), 1.0);
        assert_eq!(lap.get([-1, 0]), 1.0);
        assert_eq!(lap.get([2, 0]), 0.0);
    }

    #[test]
    fn shifts() {
        let w = win(3);
        assert_eq!(ScalarField::zeros(w).shift(Axis::X1, Sign::Plus), ScalarField::zeros(w));
        let s = ScalarField::delta(w, [0, 0]).shift(Axis::X1, Sign::Plus);
        assert_eq!(s, ScalarField::delta(w, [-1, 0]));
        let s = ScalarField::delta(w, [0, 0]).shift(Axis::X2, Sign::Minus);
        assert_eq!(s, ScalarField::delta(w, [0, 1]));

        let f = ScalarField::from_fn(w, |j| (3 * j[0] + j[1]) as f64 + 0.5);
        let back = f.shift(Axis::X1, Sign::Plus).shift(Axis::X1, Sign::Minus);
        for j in w.sites().filter(|&j| w.is_interior(j, 1)) {
            assert_eq!(back.get(j), f.get(j));
        }
    }

    #[test]
    fn differences_of_linear_fields() {
        let w = win(4);
        let f = ScalarField::from_fn(w, |j| j[0] as f64);
        let g = ScalarField::from_fn(w, |j| j[1] as f64);
        for j in w.sites().filter(|&j| w.is_interior(j, 1)) {
            assert_eq!(f.diff_forward(Axis::X1).get(j), 1.0);
            assert_eq!(f.diff_backward(Axis::X1).get(j), 1.0);
            assert_eq!(g.diff_centered(Axis::X2).get(j), 2.0);
            assert_eq!(f.diff_centered(Axis::X2).get(j), 0.0);
        }
        let c = ScalarField::constant(w, 3.0);
        for j in w.sites().filter(|&j| w.is_interior(j, 1)) {
            assert_eq!(c.diff_forward(Axis::X2).get(j), 0.0);
            assert_eq!(c.diff_centered(Axis::X1).get(j), 0.0);
        }
    }

    #[test]
    fn axis_laplacians_of_quadratic() {
        let w = win(4);
        let f = ScalarField::from_fn(w, |j| (j[1] * j[1]) as f64);
        for j in w.sites().filter(|&j| w.is_interior(j, 1)) {
            assert_eq!(f.axis_laplacian(Axis::X1).get(j), 0.0);
            assert_eq!(f.axis_laplacian(Axis::X2).get(j), 2.0);
        }
    }

    #[test]
    fn l2_norm_basics() {
        let w = win(2);
        assert_eq!(ScalarField::zeros(w).norm_l2(), 0.0);
        assert_eq!(ScalarField::delta(w, [1, -1]).norm_l2(), 1.0);
        let a = ScalarField::constant(w, 1.0);
        let b = ScalarField::constant(w, 2.0);
        let expected = (25.0f64 * 1.0 + 25.0 * 4.0).sqrt();
        assert!((weighted_l2(&[&a, &b]) - expected).abs() < 1e-14);
    }
}
