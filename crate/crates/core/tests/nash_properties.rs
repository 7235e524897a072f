use std::f64::consts::PI;

use kinetic_core::coefficients::CoefficientField;
use kinetic_core::geometry::PhasePoint;
use kinetic_core::nash_g::{g_functional, GWeight, LOG_FLOOR};
use kinetic_core::profiles::explicit_kernel;
use kinetic_core::solver::{estimate_kernel, Field, Grid, SolverConfig};
use proptest::prelude::*;

/// `∫ e^{-π|z|²} log Γ(1, z; 0, y0, w0)` in closed form for `a = 1`: the
/// log-peak minus half the weight's second moment of the quadratic form
/// with precision matrix `[[6, -3], [-3, 2]]`.
fn exact_g(y0: f64, w0: f64) -> f64 {
    let (mx, mv) = (-y0 - w0, -w0);
    let mean_part = 6.0 * mx * mx - 6.0 * mx * mv + 2.0 * mv * mv;
    let spread_part = (6.0 + 2.0) / (2.0 * PI);
    (3f64.sqrt() / (2.0 * PI)).ln() - 0.5 * (mean_part + spread_part)
}

#[test]
fn reference_values() {
    assert!((exact_g(0.0, 0.0) + 1.925).abs() < 5e-4);
    assert!((exact_g(0.7, 0.7) + 5.355).abs() < 5e-4);
}

#[test]
fn functional_of_the_explicit_kernel() {
    let grid = Grid::square(6.0, 10.0, 256).unwrap();
    for &(y, w) in &[(0.0, 0.0), (0.7, 0.7), (-0.5, 0.3)] {
        let src = PhasePoint::d1(0.0, y, w);
        let f = Field::from_fn(&grid, 1.0, |x, v| explicit_kernel(1.0, &PhasePoint::d1(1.0, x, v), &src, 1).unwrap());
        let g = g_functional(&f, &grid, &GWeight::default(), LOG_FLOOR).unwrap();
        assert!((g.value - exact_g(y, w)).abs() < 2e-3, "({y}, {w}): {} vs {}", g.value, exact_g(y, w));
        assert_eq!(g.floor_sensitivity, 0.0);
    }
}

#[test]
fn solver_reproduces_the_reference_value() {
    let grid = Grid::square(4.5, 6.0, 128).unwrap();
    let cfg = SolverConfig::for_grid(&grid, 1.0);
    let a = CoefficientField::constant(1.0).unwrap();
    let k = estimate_kernel(&PhasePoint::d1(0.0, 0.0, 0.0), 1.0, &a, &grid, &cfg).unwrap();
    let g = g_functional(&k.field, &grid, &GWeight::default(), LOG_FLOOR).unwrap();
    assert!((g.value + 1.925).abs() < 0.05, "{}", g.value);
}

#[test]
fn weight_must_fit_the_grid() {
    let grid = Grid::square(3.0, 6.0, 32).unwrap();
    let f = Field::from_fn(&grid, 1.0, |_, _| 1.0);
    assert!(g_functional(&f, &grid, &GWeight::default(), LOG_FLOOR).is_err());
    assert!(g_functional(&f, &grid, &GWeight::new(2.0).unwrap(), 0.0).is_err());
}

fn small_field() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6..10.0f64, 32 * 32)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn functional_is_monotone_and_log_linear(a in small_field(), b in small_field(), kappa in 0.01..100.0f64) {
        let grid = Grid::square(5.0, 9.0, 32).unwrap();
        let weight = GWeight::new(4.0).unwrap();
        let mk = |vals: Vec<f64>| Field { t: 1.0, values: ndarray::Array2::from_shape_vec((32, 32), vals).unwrap() };
        let f = mk(a.clone());
        let g = mk(a.iter().zip(&b).map(|(x, y)| x + y).collect());
        let scaled = mk(a.iter().map(|x| kappa * x).collect());
        let gf = g_functional(&f, &grid, &weight, LOG_FLOOR).unwrap();
        let gg = g_functional(&g, &grid, &weight, LOG_FLOOR).unwrap();
        let gs = g_functional(&scaled, &grid, &weight, LOG_FLOOR).unwrap();
        prop_assert!(gf.value <= gg.value);
        prop_assert!((gs.value - gf.value - kappa.ln() * gf.weight_mass).abs() <= 1e-9 * (1.0 + gf.value.abs()));
    }
}
