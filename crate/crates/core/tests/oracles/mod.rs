//! Independent reference solutions shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

use homlat_core::lattice::ScalarField;

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Far-field expansion `(1/2π)(log|j| + γ + (3/2) log 2) - cos 4θ / (24π |j|²)`.
pub fn asymptote(j: [i64; 2]) -> f64 {
    let (x, y) = (j[0] as f64, j[1] as f64);
    let r2 = x * x + y * y;
    let cos4 = (x.powi(4) - 6.0 * x * x * y * y + y.powi(4)) / (r2 * r2);
    (0.5 * r2.ln() + EULER_GAMMA + 1.5 * 2f64.ln()) / (2.0 * PI) - cos4 / (24.0 * PI * r2)
}

/// Solves `Δφ = δ₀` on `|j|_∞ < n` with the far-field expansion as Dirichlet
/// data on `|j|_∞ = n`, by banded Cholesky of `-Δ`.
pub fn dense_oracle(n: i64) -> impl Fn([i64; 2]) -> f64 {
    let side = (2 * n - 1) as usize;
    let len = side * side;
    let bw = side;
    let idx = move |x: i64, y: i64| ((x + n - 1) as usize) * side + (y + n - 1) as usize;
    // lower band storage: a[i][k] = A[i][i - k]
    let mut a = vec![vec![0.0f64; bw + 1]; len];
    let mut b = vec![0.0f64; len];
    for x in -(n - 1)..n {
        for y in -(n - 1)..n {
            let i = idx(x, y);
            a[i][0] = 4.0;
            b[i] = if x == 0 && y == 0 { -1.0 } else { 0.0 };
            for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
                let (u, v) = (x + dx, y + dy);
                if u.abs() == n || v.abs() == n {
                    b[i] += asymptote([u, v]);
                } else {
                    let k = idx(u, v);
                    if k < i {
                        a[i][i - k] = -1.0;
                    }
                }
            }
        }
    }
    for i in 0..len {
        for k in (1..=bw.min(i)).rev() {
            let j = i - k;
            let mut s = a[i][k];
            for m in 1..=(bw - k).min(j) {
                s -= a[i][k + m] * a[j][m];
            }
            a[i][k] = s / a[j][0];
        }
        let mut d = a[i][0];
        for k in 1..=bw.min(i) {
            d -= a[i][k] * a[i][k];
        }
        a[i][0] = d.sqrt();
    }
    let mut z = b;
    for i in 0..len {
        let mut s = z[i];
        for k in 1..=bw.min(i) {
            s -= a[i][k] * z[i - k];
        }
        z[i] = s / a[i][0];
    }
    for i in (0..len).rev() {
        let mut s = z[i];
        for k in 1..=bw.min(len - 1 - i) {
            s -= a[i + k][k] * z[i + k];
        }
        z[i] = s / a[i][0];
    }
    let pin = z[idx(0, 0)];
    move |j: [i64; 2]| z[idx(j[0], j[1])] - pin
}

/// Symmetric Jacobi eigen solver, returns eigenvalues and column eigenvectors.
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}


/// Exact `u(t)` of `m ü = Δu` on a Dirichlet chain from its normal modes;
/// `v = √m u` turns the system into `v̈ = -A v` with `A` symmetric.
pub fn chain_normal_modes(masses: &ScalarField, u0: &ScalarField, p0: &ScalarField, t: f64) -> ScalarField {
    let m = masses.values();
    let n = m.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 2.0 / m[i];
        if i + 1 < n {
            let off = -1.0 / (m[i] * m[i + 1]).sqrt();
            a[i][i + 1] = off;
            a[i + 1][i] = off;
        }
    }
    let (lambda, q) = jacobi_eigen(a);
    let v0: Vec<f64> = (0..n).map(|i| m[i].sqrt() * u0.values()[i]).collect();
    let w0: Vec<f64> = (0..n).map(|i| m[i].sqrt() * p0.values()[i]).collect();
    let mut out = vec![0.0; n];
    for k in 0..n {
        let om = lambda[k].sqrt();
        let c0: f64 = (0..n).map(|i| q[i][k] * v0[i]).sum();
        let s0: f64 = (0..n).map(|i| q[i][k] * w0[i]).sum();
        let amp = c0 * (om * t).cos() + s0 * (om * t).sin() / om;
        for i in 0..n {
            out[i] += q[i][k] * amp;
        }
    }
    ScalarField::from_values(*masses.window(), (0..n).map(|i| out[i] / m[i].sqrt()).collect()).unwrap()
}
