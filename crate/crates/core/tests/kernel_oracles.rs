use std::f64::consts::PI;

use approx::assert_relative_eq;
use kinetic_core::geometry::PhasePoint;
use kinetic_core::profiles::{explicit_kernel, KineticGaussian};
use proptest::prelude::*;

/// Independent evaluation of the constant-coefficient kernel for `a = σ²`:
/// a centred Gaussian in `(X, V)` with covariance `2σ² [[τ³/3, τ²/2], [τ²/2, τ]]`.
fn reference(sigma2: f64, tau: f64, big_x: f64, big_v: f64) -> f64 {
    let (cxx, cxv, cvv) = (2.0 * sigma2 * tau.powi(3) / 3.0, sigma2 * tau * tau, 2.0 * sigma2 * tau);
    let det = cxx * cvv - cxv * cxv;
    let q = (cvv * big_x * big_x - 2.0 * cxv * big_x * big_v + cxx * big_v * big_v) / det;
    (-0.5 * q).exp() / (2.0 * PI * det.sqrt())
}

fn kernel(sigma2: f64, tau: f64, x: f64, v: f64) -> f64 {
    explicit_kernel(sigma2, &PhasePoint::d1(tau, x, v), &PhasePoint::d1(0.0, 0.0, 0.0), 1).unwrap()
}

#[test]
fn matches_reference_formula() {
    for &(s, tau, x, v) in &[(1.0, 1.0, 0.0, 0.0), (0.5, 2.0, 1.3, -0.4), (2.0, 0.3, -0.2, 0.9), (1.0, 4.0, 7.0, 1.0)] {
        assert_relative_eq!(kernel(s, tau, x, v), reference(s, tau, x, v), max_relative = 1e-12);
    }
}

#[test]
fn peak_value_at_unit_gap() {
    assert_relative_eq!(kernel(1.0, 1.0, 0.0, 0.0), 3f64.sqrt() / (2.0 * PI), max_relative = 1e-14);
}

#[test]
fn unit_mass_by_quadrature() {
    // midpoint rule on a box far beyond the covariance
    let (lx, lv, n) = (10.0, 15.0, 1500);
    let (hx, hv) = (2.0 * lx / n as f64, 2.0 * lv / n as f64);
    let mut mass = 0.0;
    for i in 0..n {
        let x = -lx + (i as f64 + 0.5) * hx;
        for j in 0..n {
            let v = -lv + (j as f64 + 0.5) * hv;
            mass += kernel(1.0, 1.0, x, v);
        }
    }
    assert!((mass * hx * hv - 1.0).abs() <= 1e-6, "mass {}", mass * hx * hv);
}

#[test]
fn solves_the_kolmogorov_equation() {
    let a = 1.3;
    let h = 1e-3;
    let g = |t: f64, x: f64, v: f64| kernel(a, t, x, v);
    let mut worst: f64 = 0.0;
    for &(t, x, v) in &[(1.0, 0.2, -0.3), (0.7, -0.4, 0.5), (2.0, 1.0, 1.0), (1.5, 0.0, 0.0)] {
        let dt = (g(t + h, x, v) - g(t - h, x, v)) / (2.0 * h);
        let dx = (g(t, x + h, v) - g(t, x - h, v)) / (2.0 * h);
        let dvv = (g(t, x, v + h) - 2.0 * g(t, x, v) + g(t, x, v - h)) / (h * h);
        worst = worst.max((dt + v * dx - a * dvv).abs());
    }
    assert!(worst <= 1e-4, "residual {worst}");
}

#[test]
fn mollified_law_adds_the_sheared_bump() {
    let (tau, wx, wv) = (0.8, 0.1, 0.2);
    let g = KineticGaussian::explicit(1.0, tau).unwrap().with_initial_spread(tau, wx, wv);
    // covariance of X = X0 + τ V0 + noise with independent bump (X0, V0)
    let (cxx, cxv, cvv) =
        (2.0 * tau.powi(3) / 3.0 + wx * wx + tau * tau * wv * wv, tau * tau + tau * wv * wv, 2.0 * tau + wv * wv);
    let det = cxx * cvv - cxv * cxv;
    assert_relative_eq!(g.det(), det, max_relative = 1e-12);
    let q = (cvv * 0.09 - 2.0 * cxv * 0.3 * -0.1 + cxx * 0.01) / det;
    assert_relative_eq!(g.density(&[0.3], &[-0.1]), (-0.5 * q).exp() / (2.0 * PI * det.sqrt()), max_relative = 1e-12);
}

proptest! {
    #[test]
    fn kinetic_scaling_identity(tau in 0.05..5.0f64, xb in -2.0..2.0f64, vb in -2.0..2.0f64, s in 0.3..3.0f64) {
        let unit = kernel(s, 1.0, xb, vb);
        let scaled = tau * tau * kernel(s, tau, tau.powf(1.5) * xb, tau.sqrt() * vb);
        prop_assert!((scaled - unit).abs() <= 1e-10 * unit.max(1e-300));
    }

    #[test]
    fn translation_invariance(y in -2.0..2.0f64, w in -2.0..2.0f64, x in -2.0..2.0f64, v in -2.0..2.0f64) {
        let from = PhasePoint::d1(0.5, y, w);
        let to = PhasePoint::d1(1.5, x, v);
        let direct = explicit_kernel(1.0, &to, &from, 1).unwrap();
        prop_assert!((direct - reference(1.0, 1.0, x - y - w, v - w)).abs() <= 1e-12);
    }
}
