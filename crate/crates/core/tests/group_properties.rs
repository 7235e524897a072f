use kinetic_core::geometry::{compose, inverse, normalize_gap, scale_point, NormalizedGap, PhasePoint};
use kinetic_core::profiles::kinetic_exponent;
use proptest::prelude::*;

fn point(d: usize) -> impl Strategy<Value = PhasePoint> {
    (-5.0..5.0f64, prop::collection::vec(-5.0..5.0f64, d), prop::collection::vec(-5.0..5.0f64, d))
        .prop_map(|(t, x, v)| PhasePoint { t, x, v })
}

fn triple() -> impl Strategy<Value = (PhasePoint, PhasePoint, PhasePoint)> {
    (1usize..4).prop_flat_map(|d| (point(d), point(d), point(d)))
}

proptest! {
    #[test]
    fn composition_is_associative((a, b, c) in triple()) {
        let left = compose(&compose(&a, &b), &c);
        let right = compose(&a, &compose(&b, &c));
        prop_assert!(left.max_rel_diff(&right) <= 1e-12);
    }

    #[test]
    fn inverse_cancels_on_both_sides((a, _, _) in triple()) {
        let e = PhasePoint::identity(a.dim());
        prop_assert!(compose(&a, &inverse(&a)).max_rel_diff(&e) <= 1e-12);
        prop_assert!(compose(&inverse(&a), &a).max_rel_diff(&e) <= 1e-12);
    }

    #[test]
    fn dilation_is_a_homomorphism((a, b, _) in triple(), r in 0.1..4.0f64) {
        let lhs = scale_point(r, &compose(&a, &b)).unwrap();
        let rhs = compose(&scale_point(r, &a).unwrap(), &scale_point(r, &b).unwrap());
        prop_assert!(lhs.max_rel_diff(&rhs) <= 1e-12);
    }

    #[test]
    fn dilations_compose_multiplicatively((a, _, _) in triple(), r in 0.1..4.0f64, s in 0.1..4.0f64) {
        let lhs = scale_point(r, &scale_point(s, &a).unwrap()).unwrap();
        let rhs = scale_point(r * s, &a).unwrap();
        prop_assert!(lhs.max_rel_diff(&rhs) <= 1e-12);
    }

    #[test]
    fn gap_is_left_invariant((z, y, g) in triple(), tau in 0.05..3.0f64) {
        let to = PhasePoint { t: y.t + tau, ..z };
        let before = normalize_gap(&y, &to).unwrap();
        let after = normalize_gap(&compose(&g, &y), &compose(&g, &to)).unwrap();
        for (p, q) in before.x.iter().zip(&after.x).chain(before.v.iter().zip(&after.v)) {
            prop_assert!((p - q).abs() <= 1e-10 * (1.0 + p.abs()));
        }
    }

    #[test]
    fn kinetic_exponent_is_dilation_invariant(x in -3.0..3.0f64, v in -3.0..3.0f64, tau in 0.05..3.0f64, r in 0.2..5.0f64) {
        let e = kinetic_exponent(&NormalizedGap::d1(tau, x, v).unwrap());
        let scaled = NormalizedGap::d1(r * r * tau, r.powi(3) * x, r * v).unwrap();
        prop_assert!((kinetic_exponent(&scaled) - e).abs() <= 1e-10 * (1.0 + e));
    }
}

#[test]
fn dilation_rejects_non_positive_factors() {
    let z = PhasePoint::d1(1.0, 1.0, 1.0);
    assert!(scale_point(0.0, &z).is_err());
    assert!(scale_point(-1.0, &z).is_err());
    assert!(scale_point(f64::NAN, &z).is_err());
}

#[test]
fn group_law_examples() {
    let a = PhasePoint::d1(1.0, 2.0, 3.0);
    let b = PhasePoint::d1(4.0, 5.0, 6.0);
    // x = 2 + 5 + 4·3
    assert_eq!(compose(&a, &b), PhasePoint::d1(5.0, 19.0, 9.0));
    assert_eq!(inverse(&a), PhasePoint::d1(-1.0, 1.0, -3.0));
    assert_eq!(scale_point(2.0, &a).unwrap(), PhasePoint::d1(4.0, 16.0, 6.0));
}
