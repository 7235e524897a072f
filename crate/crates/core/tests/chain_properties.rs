use kinetic_core::chains::{
    box_factor, build_chain, chain_lower_bound, near_diagonal_check, perturbation_check, NearDiagonalParams,
};
use kinetic_core::geometry::PhasePoint;
use proptest::prelude::*;

fn params() -> NearDiagonalParams {
    NearDiagonalParams::new(0.25, 0.1).unwrap()
}

/// `Σ_{j<k} v_j` with `v_j = (j/k) V̄ + μ j(k-j)/k²`, summed term by term.
fn brute_sum(k: usize, v_bar: f64, mu: f64) -> f64 {
    let kf = k as f64;
    (0..k).map(|j| j as f64 / kf * v_bar + mu * (j * (k - j)) as f64 / (kf * kf)).sum()
}

#[test]
fn quadratic_correction_closes_the_position_sum() {
    for &k in &[2usize, 3, 10, 64, 1021] {
        let kf = k as f64;
        let s: usize = (0..k).map(|j| j * (k - j)).sum();
        assert_eq!(s, (k * k * k - k) / 6);
        let (x_bar, v_bar) = (0.8, -1.7);
        let mu = 6.0 * kf * (x_bar * kf - v_bar * (kf - 1.0) / 2.0) / (kf * kf - 1.0);
        assert!((brute_sum(k, v_bar, mu) / kf - x_bar).abs() < 1e-12);
    }
}

#[test]
fn unit_velocity_example() {
    let chain = build_chain(&[0.0], &[1.0], &params(), 64.0).unwrap();
    assert!(chain.k >= 64);
    assert!(chain.endpoint_error() <= 1e-10);
    assert!(chain.max_increment() <= 0.5 * 0.25 * chain.dt.sqrt());
    // smallest admissible k: one fewer step violates the increment bound
    if chain.k > 64 {
        let shorter = chain.k - 1;
        let bound = 0.5 * 0.25 / (shorter as f64).sqrt();
        let kf = shorter as f64;
        let mu = 6.0 * kf * (-(kf - 1.0) / 2.0) / (kf * kf - 1.0);
        let inc = |j: f64| (1.0 / kf + mu * (kf - 2.0 * j + 1.0) / (kf * kf)).abs();
        assert!(inc(1.0).max(inc(kf)) > bound);
    }
}

#[test]
fn lower_bound_examples() {
    assert_eq!(box_factor(1), 4.0);
    let p = params();
    let one = chain_lower_bound(1, 0.0625, &p, 1).unwrap();
    assert!((one.value - p.c0).abs() < 1e-15);
    let b = chain_lower_bound(10, 0.0625, &p, 1).unwrap();
    let alpha = p.c0 * 4.0 * 0.0625f64.powi(2);
    assert!((b.alpha - alpha).abs() < 1e-15);
    let direct = (p.c0 * 100.0).powi(10) * (4.0 * 0.0625f64.powi(2)).powi(9) * 0.01f64.powi(9);
    assert!((b.value / direct - 1.0).abs() < 1e-10);
    assert!(chain_lower_bound(0, 0.1, &p, 1).is_err());
    assert!(chain_lower_bound(3, 0.0, &p, 1).is_err());
}

#[test]
fn oversized_targets_are_rejected() {
    assert!(build_chain(&[0.0], &[1e6], &params(), 1024.0).is_err());
    assert!(build_chain(&[0.0, 1.0], &[1.0], &params(), 64.0).is_err());
    assert!(build_chain(&[f64::NAN], &[1.0], &params(), 64.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn chain_invariants(d in 1usize..4, seed in prop::collection::vec(-1.0..1.0f64, 6), scale in 0.0..2.0f64) {
        let x_bar: Vec<f64> = seed[..d].iter().map(|c| c * scale).collect();
        let v_bar: Vec<f64> = seed[3..3 + d].iter().map(|c| c * scale).collect();
        let p = params();
        let chain = build_chain(&x_bar, &v_bar, &p, p.default_k0()).unwrap();
        let tol = 1e-10 * (1.0 + scale);
        prop_assert!(chain.endpoint_error() <= tol);
        prop_assert!(chain.max_transport_defect() <= tol);
        prop_assert!(chain.max_increment() <= 0.5 * p.rho0 * chain.dt.sqrt());
        prop_assert_eq!(chain.centre(0), PhasePoint::identity(d));
        for j in 1..=chain.k.min(50) {
            let ok = near_diagonal_check(&chain.centre(j - 1), &chain.centre(j), &p).unwrap();
            prop_assert!(ok);
        }
        prop_assert!(perturbation_check(&chain, p.rho0 / 4.0, 2, 7));
    }

    #[test]
    fn step_count_tracks_the_target_size(x in -5.0..5.0f64, v in -5.0..5.0f64) {
        let p = params();
        let k0 = p.default_k0();
        let chain = build_chain(&[x], &[v], &p, k0).unwrap();
        let scale = k0 * (x * x + v * v) + 1.0;
        let ratio = chain.k as f64 / scale;
        prop_assert!(ratio <= 4.0 && ratio >= 0.25, "k = {} vs {}", chain.k, scale);
    }
}
