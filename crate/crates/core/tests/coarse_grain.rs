use homlat_core::analysis::{
    dft, fit_slope, fit_slope_points, lowpass_direct, lowpass_interpolate, sinc, Aggregation, ErrorSeries,
};
use homlat_core::lattice::{LatticeWindow, ScalarField};
use proptest::prelude::*;

fn rough(window: LatticeWindow, seed: u64) -> ScalarField {
    // deterministic pseudo-random values
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    ScalarField::from_fn(window, |_| {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    })
}

#[test]
fn fast_interpolation_matches_direct_sums() {
    for (window, o) in [(LatticeWindow::square(6).unwrap(), 3), (LatticeWindow::line(20).unwrap(), 4)] {
        let f = rough(window, 3);
        let li = lowpass_interpolate(&f, o).unwrap();
        let worst = (0..li.values.len())
            .map(|i| (li.values[i] - lowpass_direct(&f, li.point(i))).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1e-6, "{worst:e}");
    }
}

#[test]
fn shifted_delta_gives_shifted_sinc() {
    let w = LatticeWindow::line(10).unwrap();
    let f = ScalarField::delta(w, [3, 0]);
    let li = lowpass_interpolate(&f, 4).unwrap();
    for i in 0..li.values.len() {
        let y = li.point(i);
        assert!((li.values[i] - sinc(y[0] - 3.0)).abs() < 1e-12);
    }
}

#[test]
fn riemann_sum_agrees_with_parseval() {
    // a smooth field: its interpolant is a Gaussian that has died out by the edge
    let w = LatticeWindow::square(30).unwrap();
    let f = ScalarField::from_fn(w, |j| (-((j[0] * j[0] + j[1] * j[1]) as f64) / 18.0).exp());
    let o = 2;
    let li = lowpass_interpolate(&f, o).unwrap();
    let riemann = li.values.iter().map(|v| v * v).sum::<f64>() / (o * o) as f64;
    let parseval = dft(&f).norm_l2().powi(2);
    assert!((riemann - parseval).abs() <= 1e-6 * parseval, "{riemann} vs {parseval}");
    assert!((parseval - f.norm_l2().powi(2)).abs() <= 1e-10 * parseval);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn dft_preserves_the_norm(seed in any::<u64>(), h1 in 1usize..9, h2 in 1usize..9) {
        let w = LatticeWindow::new(2, [h1, h2]).unwrap();
        let f = rough(w, seed);
        let a = dft(&f).norm_l2();
        let b = f.norm_l2();
        prop_assert!((a - b).abs() <= 1e-10 * b.max(1e-300));
    }
}

#[test]
fn slope_of_a_power_law() {
    let pts: Vec<(f64, f64)> = [0.5, 0.25, 0.125, 0.0625].iter().map(|&e: &f64| (e, 3.0 * e.powf(1.5))).collect();
    let fit = fit_slope_points(&pts, Aggregation::Median).unwrap();
    assert!((fit.slope - 1.5).abs() < 1e-12);
    assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(fit.slope_stderr < 1e-10);
}

#[test]
fn median_aggregation_ignores_an_outlier() {
    let mut series = ErrorSeries::default();
    for (k, &e) in [0.5f64, 0.25, 0.125, 0.0625, 0.03125].iter().enumerate() {
        for r in 0..5 {
            let noise = if r == 4 && k == 0 { 50.0 } else { 1.0 + 0.01 * r as f64 };
            series.push(e, r, r as u64, "aev", e.powf(0.5) * noise).unwrap();
        }
    }
    let med = fit_slope(&series, "aev", Aggregation::Median).unwrap();
    assert!((med.slope - 0.5).abs() < 1e-9, "{}", med.slope);
    assert_eq!(med.points, 5);
    let all = fit_slope(&series, "aev", Aggregation::PerRealization).unwrap();
    assert_eq!(all.points, 25);
    assert!((all.slope - 0.5).abs() > 1e-3);
    assert_eq!(med.spread[0].max, 50.0 * 0.5f64.powf(0.5));
}

#[test]
fn too_few_epsilons_are_refused() {
    let pts = [(0.5, 1.0), (0.25, 0.5), (0.125, 0.25)];
    assert!(fit_slope_points(&pts, Aggregation::Median).is_err());
    assert!(fit_slope_points(&[(0.5, 1.0), (0.25, 0.0), (0.125, 1.0), (0.1, 1.0)], Aggregation::Median).is_err());
}

#[test]
fn log_factor_depresses_the_apparent_slope() {
    // ε log(1/ε)^{3/2} over ε = 1/2 .. 1/32; OLS slope from the closed form
    let eps = [0.5f64, 0.25, 0.125, 0.0625, 0.03125];
    let pts: Vec<(f64, f64)> = eps.iter().map(|&e| (e, e * (1.0 / e).ln().powf(1.5))).collect();
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / 5.0;
    let my = ys.iter().sum::<f64>() / 5.0;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let fit = fit_slope_points(&pts, Aggregation::Median).unwrap();
    assert!((fit.slope - sxy / sxx).abs() < 1e-12);
    assert!((fit.slope - 0.1534).abs() < 1e-3, "{}", fit.slope);
    assert!(fit.slope < 1.0);
}
