use homlat_core::corrector::{
    corrector, corrector_naive, layered_corrector, tail_bound_audit, verify_corrector_pde, TailAuditConfig,
};
use homlat_core::green::{green_function, Operator};
use homlat_core::lattice::{Axis, LatticeWindow, ScalarField};
use homlat_core::mass::{fluctuation_field, sample_masses, MassModel};

fn models() -> [MassModel; 2] {
    [MassModel::iid_two_point(0.5, 1.5), MassModel::layered_two_point(0.5, 1.5, Axis::X1)]
}

/// `max |Δχ - z 1_D|` computed from the raw halo values.
fn pde_gap(chi: &homlat_core::corrector::CorrectorField, z: &ScalarField, radius: i64) -> f64 {
    let w = *chi.window();
    w.sites()
        .map(|j| {
            let lap = chi.value([j[0] + 1, j[1]])
                + chi.value([j[0] - 1, j[1]])
                + chi.value([j[0], j[1] + 1])
                + chi.value([j[0], j[1] - 1])
                - 4.0 * chi.value(j);
            let target = if j[0].abs() <= radius && j[1].abs() <= radius { z.get(j) } else { 0.0 };
            (lap - target).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn corrector_solves_its_poisson_problem() {
    let g = green_function(80, 1e-10).unwrap();
    for model in models() {
        for (seed, r) in [(1u64, 8.0), (2, 16.0), (3, 32.0)] {
            let rr = r as usize;
            let mf = sample_masses(&model, LatticeWindow::square(rr + 8).unwrap(), seed).unwrap();
            let z = fluctuation_field(&mf);
            let eval = LatticeWindow::square(rr + 8).unwrap();
            let cf = corrector(&g, &z, r, eval).unwrap();
            let report = verify_corrector_pde(&cf, &z);
            assert!(report.pass, "{} r = {r}: {:e}", model.label(), report.max_residual);
            let gap = pde_gap(&cf, &z, rr as i64);
            assert!(gap <= 1e-8, "{} r = {r}: {gap:e}", model.label());
        }
    }
}

#[test]
fn fft_convolution_matches_direct_sum() {
    let g = green_function(40, 1e-10).unwrap();
    for model in models() {
        let z = fluctuation_field(&sample_masses(&model, LatticeWindow::square(8).unwrap(), 9).unwrap());
        let eval = LatticeWindow::square(20).unwrap();
        let fast = corrector(&g, &z, 8.0, eval).unwrap();
        let slow = corrector_naive(&g, &z, 8.0, eval).unwrap();
        for op in Operator::all(2) {
            let d = fast.applied(op).sub(&slow.applied(op)).max_abs();
            assert!(d <= 1e-10, "{} {op:?}: {d:e}", model.label());
        }
    }
}

#[test]
fn layered_factorization() {
    let g = green_function(48, 1e-10).unwrap();
    let model = MassModel::layered_two_point(0.5, 1.5, Axis::X1);
    let mf = sample_masses(&model, LatticeWindow::square(12).unwrap(), 5).unwrap();
    let z = fluctuation_field(&mf);
    let eval = LatticeWindow::square(16).unwrap();
    let full = corrector(&g, &z, 12.0, eval).unwrap();
    let fact = layered_corrector(&g, |k| z.get([k, 0]), Axis::X1, 12.0, eval).unwrap();
    let d = full.chi().sub(&fact).max_abs();
    assert!(d <= 1e-10, "{d:e}");
}

#[test]
fn convolution_is_linear() {
    let g = green_function(40, 1e-10).unwrap();
    let w = LatticeWindow::square(10).unwrap();
    let a = fluctuation_field(&sample_masses(&MassModel::iid_two_point(0.5, 1.5), w, 1).unwrap());
    let b = fluctuation_field(&sample_masses(&MassModel::iid_two_point(0.5, 1.5), w, 2).unwrap());
    let eval = LatticeWindow::square(12).unwrap();
    let lhs = corrector(&g, &a.axpy(-2.5, &b), 10.0, eval).unwrap().chi();
    let rhs = corrector(&g, &a, 10.0, eval)
        .unwrap()
        .chi()
        .axpy(-2.5, &corrector(&g, &b, 10.0, eval).unwrap().chi());
    assert!(lhs.sub(&rhs).max_abs() <= 1e-10);
}

#[test]
fn sub_gaussian_tails_and_growth() {
    let started = std::time::Instant::now();
    let cfg = TailAuditConfig { realizations: 500, ..TailAuditConfig::default() };
    assert_eq!(cfg.tail_radius, 16.0);
    assert!(cfg.multipliers.contains(&1.5));
    assert_eq!(cfg.radii, vec![8.0, 16.0, 32.0, 64.0]);
    let g = green_function(129, 1e-10).unwrap();
    let audit = tail_bound_audit(&MassModel::iid_two_point(0.5, 1.5), &g, &cfg).unwrap();
    let at_15: Vec<_> = audit.tails.iter().filter(|t| t.multiplier == 1.5).collect();
    assert!(!at_15.is_empty());
    for t in &at_15 {
        assert!((t.bound - 2.0 * (-4.5f64).exp()).abs() < 1e-15);
        assert!(
            t.exceed_fraction <= t.bound + 3.0 * t.mc_stderr,
            "{:?}: {} > {}",
            t.operator,
            t.exceed_fraction,
            t.bound
        );
    }
    for row in &audit.growth {
        assert!(row.ratio <= 4.0, "{:?}: growth ratio {}", row.operator, row.ratio);
    }
    assert!(audit.pass);
    assert!(started.elapsed().as_secs() < 600);
}
