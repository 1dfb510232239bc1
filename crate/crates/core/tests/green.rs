use std::f64::consts::PI;

use homlat_core::green::{green_function, green_function_recurrence, GreenTable};
use homlat_core::lattice::ScalarField;

mod oracles;

use oracles::{dense_oracle, EULER_GAMMA};

fn table64() -> GreenTable {
    green_function(64, 1e-10).unwrap()
}

#[test]
fn pinned_values_and_stencil() {
    let g = table64();
    assert_eq!(g.value([0, 0]), 0.0);
    assert!((g.value([1, 0]) - 0.25).abs() < 1e-12);
    assert!((g.value([1, 1]) - 1.0 / PI).abs() < 1e-12);
    assert!(g.residual().max() <= 1e-8, "max |Δφ - δ| = {:e}", g.residual().max());
    // independent check of the stencil over the whole table
    let lap: ScalarField = g.values().laplacian();
    let w = *g.values().window();
    let worst = w
        .sites()
        .filter(|&j| w.is_interior(j, 1))
        .map(|j| (lap.get(j) - if j == [0, 0] { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 1e-8, "{worst:e}");
}

#[test]
fn quadrature_agrees_with_dense_solve() {
    let g = table64();
    let oracle = dense_oracle(60);
    let mut worst: f64 = 0.0;
    for x in -30..=30 {
        for y in -30..=30 {
            worst = worst.max((g.value([x, y]) - oracle([x, y])).abs());
        }
    }
    assert!(worst <= 1e-6, "quadrature vs dense solve: {worst:e}");
}

#[test]
fn two_backends_agree() {
    let q = green_function(40, 1e-10).unwrap();
    let r = green_function_recurrence(40).unwrap();
    let worst = q.values().sub(r.values()).max_abs();
    assert!(worst <= 1e-9, "{worst:e}");
}

#[test]
fn far_field_fit() {
    let fit = table64().fit_asymptote(8.0, 64.0).unwrap();
    let c0 = (EULER_GAMMA + 1.5 * 2f64.ln()) / (2.0 * PI);
    assert!((fit.c0 - c0).abs() < 1e-6, "C0 = {}", fit.c0);
    assert!(fit.residual_slope <= -1.8, "residual slope {}", fit.residual_slope);
    assert!(fit.k_bound.is_finite());
}

#[test]
fn gradient_decays_like_inverse_distance() {
    let g = table64();
    // |δ_1 φ| at distance r is about 1/(π r)
    let d = |r: i64| (g.value([r + 1, 0]) - g.value([r - 1, 0])).abs();
    for r in [8, 16, 30] {
        let ratio = d(r) / d(2 * r);
        assert!((ratio - 2.0).abs() < 0.05, "r = {r}: {ratio}");
        assert!((d(r) * PI * r as f64 - 1.0).abs() < 0.05);
    }
}
