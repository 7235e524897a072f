use kinetic_core::geometry::PhasePoint;
use kinetic_core::trajectories::{
    check_properties, criticality_exponents, default_r_grid, eval_trajectory, log_oscillatory_family, straight_family,
    OscillationParams, Tolerances,
};
use proptest::prelude::*;

/// The straight family's blocks written out by hand.
fn closed_form(t: f64, r: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let (r2, r3) = (r * r, r * r * r);
    let a = [[3.0 * r2 - 2.0 * r3, t * (r3 - r2)], [6.0 / t * (r - r2), 3.0 * r2 - 2.0 * r]];
    let b = [[1.0 - 3.0 * r2 + 2.0 * r3, t * (r - 2.0 * r2 + r3)], [-6.0 / t * (r - r2), 1.0 - 4.0 * r + 3.0 * r2]];
    (a, b)
}

#[test]
fn straight_family_matches_closed_form() {
    for &t in &[1.0, -0.5, 3.0] {
        let fam = straight_family(t, 1).unwrap();
        for i in 0..=20 {
            let r = i as f64 / 20.0;
            let (a, b) = closed_form(t, r);
            let bl = fam.blocks(r);
            for p in 0..2 {
                for q in 0..2 {
                    assert!((bl.a[p][q] - a[p][q]).abs() < 1e-14, "A[{p}{q}] at r = {r}");
                    assert!((bl.b[p][q] - b[p][q]).abs() < 1e-14, "B[{p}{q}] at r = {r}");
                }
            }
        }
    }
}

#[test]
fn endpoint_matrices() {
    let fam = straight_family(2.0, 2).unwrap();
    let id = nalgebra::DMatrix::<f64>::identity(4, 4);
    assert!((fam.a(1.0) - &id).amax() == 0.0);
    assert!(fam.a(0.0).amax() == 0.0);
    assert!((fam.b(0.0) - &id).amax() == 0.0);
    assert!(fam.b(1.0).amax() < 1e-15);
}

#[test]
fn determinant_of_a_is_r_to_the_4d() {
    for d in 1..=3 {
        let fam = straight_family(1.7, d).unwrap();
        for r in default_r_grid() {
            let det = fam.a(r).determinant();
            assert!((det - r.powi(4 * d as i32)).abs() <= 1e-12, "d = {d}, r = {r}: {det}");
        }
    }
}

#[test]
fn midpoint_example() {
    let fam = straight_family(1.0, 1).unwrap();
    let p = eval_trajectory(&fam, 0.5, &PhasePoint::d1(0.0, 0.0, 0.0), &PhasePoint::d1(1.0, 0.0, 1.0)).unwrap();
    assert!((p.v[0] + 0.25).abs() < 1e-15);
    assert!((p.x[0] + 0.125).abs() < 1e-15);
    assert_eq!(p.t, 0.5);
}

#[test]
fn straight_family_exponents() {
    let (det, inv) = criticality_exponents(&straight_family(1.0, 1).unwrap()).unwrap();
    assert!((det - 4.0).abs() <= 0.02, "{det}");
    assert!((inv + 2.0).abs() <= 0.02, "{inv}");
    let report =
        check_properties(&straight_family(2.5, 2).unwrap(), &Tolerances::default(), &default_r_grid()).unwrap();
    assert!((report.det_a_exponent - 8.0).abs() <= 0.02);
    assert!((report.jacobian_exponent - 9.0).abs() <= 0.02);
    for fit in &report.fits {
        assert!(fit.spread() <= 0.05, "{fit:?}");
    }
    let f = report.pass;
    assert!(f.endpoints && f.kinetic_relation && f.det_b && f.property4);
    assert!(!f.det_a && !f.inv_column && !f.jacobian && !f.critical());
}

#[test]
fn candidate_family_is_reported() {
    let fam = log_oscillatory_family(1.0, 1, OscillationParams::default()).unwrap();
    let report = check_properties(&fam, &Tolerances::default(), &default_r_grid()).unwrap();
    assert!(report.det_a_exponent.is_finite() && report.inv_column_exponent.is_finite());
    assert!(report.kinetic_residual <= 1e-8);
    assert!(report.pass.endpoints);
}

#[test]
fn curve_export() {
    let report =
        check_properties(&straight_family(1.0, 1).unwrap(), &Tolerances::default(), &default_r_grid()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    report.write_curve_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next(), Some("r,det_a,inv_column,jacobian_det"));
    assert_eq!(text.lines().count(), default_r_grid().len() + 1);
}

fn endpoints(d: usize) -> impl Strategy<Value = (f64, PhasePoint, PhasePoint)> {
    let coords = prop::collection::vec(-3.0..3.0f64, 4 * d);
    (prop_oneof![-3.0..-0.1f64, 0.1..3.0f64], -2.0..2.0f64, coords).prop_map(move |(gap, t0, c)| {
        let z0 = PhasePoint { t: t0, x: c[..d].to_vec(), v: c[d..2 * d].to_vec() };
        let z1 = PhasePoint { t: t0 + gap, x: c[2 * d..3 * d].to_vec(), v: c[3 * d..].to_vec() };
        (gap, z0, z1)
    })
}

proptest! {
    #[test]
    fn endpoints_are_reproduced((gap, z0, z1) in (1usize..4).prop_flat_map(endpoints), osc in any::<bool>()) {
        let d = z0.dim();
        let fam = if osc {
            log_oscillatory_family(gap, d, OscillationParams::default()).unwrap()
        } else {
            straight_family(gap, d).unwrap()
        };
        let g0 = eval_trajectory(&fam, 0.0, &z0, &z1).unwrap();
        let g1 = eval_trajectory(&fam, 1.0, &z0, &z1).unwrap();
        prop_assert!(g0.max_rel_diff(&z0) + g1.max_rel_diff(&z1) <= 1e-10);
    }

    #[test]
    fn pure_transport_pairs_keep_the_velocity((gap, z0, _) in endpoints(1), r in 0.0..=1.0f64) {
        let z1 = PhasePoint { t: z0.t + gap, x: vec![z0.x[0] + gap * z0.v[0]], v: z0.v.clone() };
        let fam = straight_family(gap, 1).unwrap();
        let p = eval_trajectory(&fam, r, &z0, &z1).unwrap();
        prop_assert!((p.v[0] - z0.v[0]).abs() <= 1e-12 * (1.0 + z0.v[0].abs() + z0.x[0].abs() / gap.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn exponents_do_not_depend_on_the_gap(gap in 0.1..10.0f64) {
        let (det, inv) = criticality_exponents(&straight_family(gap, 1).unwrap()).unwrap();
        prop_assert!((det - 4.0).abs() <= 0.02);
        prop_assert!((inv + 2.0).abs() <= 0.02);
    }
}
