//! Center-manifold expansions: oracle agreement, invariance order, geometry.

use blowuplab_core::manifolds::{
    cm_closed_form, cm_closed_form_k1, compare, default_direction, hausdorff_distance, invariance_residual, logspace,
    residual_ray_slope, solve_invariance_order2, ExpansionRecord, InvarianceSystem,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn oracle_matches_closed_form(k0 in 1usize..6, c in -0.9f64..-0.05, mu in -1.0f64..3.0, a in 0.3f64..2.0) {
        let closed = cm_closed_form(k0, c, mu, a).unwrap();
        let oracle = solve_invariance_order2(&InvarianceSystem::orig(k0, c, mu, a).unwrap()).unwrap();
        let cmp = compare(&oracle, &closed).unwrap();
        prop_assert!(cmp.pass(), "{cmp:?}");
    }

    #[test]
    fn k1_oracle_matches_closed_form(k0 in 1usize..6, a1 in 0.0f64..1.0, mu in -1.0f64..3.0) {
        let closed = cm_closed_form_k1(k0, a1, mu).unwrap();
        let oracle = solve_invariance_order2(&InvarianceSystem::k1(k0, a1, mu).unwrap()).unwrap();
        let cmp = compare(&oracle, &closed).unwrap();
        prop_assert!(cmp.pass(), "{cmp:?}");
    }

    #[test]
    fn residual_is_third_order(k0 in 1usize..5, c in -0.6f64..-0.1, mu in 0.0f64..2.5) {
        let e = cm_closed_form(k0, c, mu, 1.0).unwrap();
        let sys = InvarianceSystem::for_expansion(&e).unwrap();
        prop_assert!(invariance_residual(&e, &sys, &vec![0.0; e.nc()]).unwrap() < 1e-13);
        let fit = residual_ray_slope(&e, &sys, &default_direction(e.nc()), &logspace(1e-4, 1e-2, 7)).unwrap();
        prop_assert!(fit.slope >= 2.7, "{fit:?}");
    }

    #[test]
    fn hausdorff_is_a_metric_on_samples(
        pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 1..20),
        shift in -0.5f64..0.5,
    ) {
        let moved: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| x + shift).collect()).collect();
        prop_assert_eq!(hausdorff_distance(&pts, &pts).unwrap(), 0.0);
        let d = hausdorff_distance(&pts, &moved).unwrap();
        prop_assert!((d - hausdorff_distance(&moved, &pts).unwrap()).abs() < 1e-15);
        prop_assert!(d <= shift.abs() * 3f64.sqrt() + 1e-12);
    }
}

#[test]
fn record_json_round_trip() {
    let e = cm_closed_form(3, -0.2, 0.5, 1.0).unwrap();
    let rec = e.record();
    let back: ExpansionRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
    assert_eq!(back, rec);
    assert!(rec.coeffs.iter().all(|c| c.value != 0.0));
    assert_eq!(rec.base_point["u1"], -0.2);
}

#[test]
fn hausdorff_of_empty_set_is_an_error() {
    assert!(hausdorff_distance(&[], &[vec![0.0]]).is_err());
}
