use std::f64::consts::PI;

use kinetic_core::coefficients::{make_field, CoefficientField, FieldKind};
use kinetic_core::geometry::PhasePoint;
use kinetic_core::solver::{estimate_kernel, evolve, init_delta, Grid, SolverConfig};

fn checkerboard() -> CoefficientField {
    make_field(FieldKind::Checkerboard { low: 0.5, high: 2.0, cell: [0.25, 0.5, 0.5] }, 0).unwrap()
}

#[test]
fn peak_on_the_tight_box() {
    let grid = Grid::square(3.0, 4.5, 192).unwrap();
    let cfg = SolverConfig::for_grid(&grid, 1.0);
    let a = CoefficientField::constant(1.0).unwrap();
    let k = estimate_kernel(&PhasePoint::d1(0.0, 0.0, 0.0), 1.0, &a, &grid, &cfg).unwrap();
    let exact = 3f64.sqrt() / (2.0 * PI);
    assert!((k.field.max() - exact).abs() <= 0.05 * exact, "peak {}", k.field.max());
}

#[test]
fn mass_and_positivity_over_many_steps() {
    let grid = Grid::square(4.0, 6.0, 64).unwrap();
    let cfg = SolverConfig::for_grid(&grid, 1.0);
    let f0 = init_delta((0.0, 0.0), cfg.mollifier_widths(&grid), &grid, 0.0).unwrap();
    let t_end = 400.0 * cfg.dt;
    let (f, run) = evolve(&f0, t_end, &grid, &checkerboard(), &cfg, |_| {}).unwrap();
    assert_eq!(run.steps, 400);
    assert!(run.mass_drift <= 1e-10, "drift {}", run.mass_drift);
    assert!(run.min_value >= 0.0);
    assert!((f.mass(&grid) - 1.0).abs() <= 1e-10);
}

#[test]
fn runs_are_bitwise_reproducible_across_thread_counts() {
    let grid = Grid::square(4.0, 6.0, 48).unwrap();
    let cfg = SolverConfig::for_grid(&grid, 1.0);
    let field = checkerboard();
    let src = PhasePoint::d1(0.0, 0.3, -0.2);
    let a = estimate_kernel(&src, 0.5, &field, &grid, &cfg).unwrap();
    let b = estimate_kernel(&src, 0.5, &field, &grid, &cfg).unwrap();
    assert_eq!(a.field.values, b.field.values);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let c = pool.install(|| estimate_kernel(&src, 0.5, &field, &grid, &cfg).unwrap());
    assert_eq!(a.field.values, c.field.values);
}

#[test]
fn error_decreases_under_refinement_with_fixed_mollifier() {
    let a = CoefficientField::constant(1.0).unwrap();
    let src = PhasePoint::d1(0.0, 0.0, 0.0);
    let coarse = Grid::square(4.5, 6.0, 64).unwrap();
    let fine = Grid::square(4.5, 6.0, 128).unwrap();
    let widths = (3.0 * coarse.dx(), 3.0 * coarse.dv());
    let err = |g: &Grid| {
        let cfg = SolverConfig::for_grid(g, 1.0);
        kinetic_core::solver::estimate_kernel_with_widths(&src, 1.0, &a, g, &cfg, widths)
            .unwrap()
            .oracle_l1_error(1.0)
            .unwrap()
    };
    let (e1, e2) = (err(&coarse), err(&fine));
    assert!(e2 < e1 / 1.5, "errors {e1:.3e} -> {e2:.3e}");
}

#[test]
fn invalid_time_step_is_a_config_error() {
    let grid = Grid::square(4.0, 6.0, 32).unwrap();
    let mut cfg = SolverConfig::for_grid(&grid, 1.0);
    cfg.dt *= 1.5;
    let a = CoefficientField::constant(1.0).unwrap();
    let err = estimate_kernel(&PhasePoint::d1(0.0, 0.0, 0.0), 1.0, &a, &grid, &cfg).unwrap_err();
    assert!(matches!(err, kinetic_core::Error::Config(_)), "{err}");
}
