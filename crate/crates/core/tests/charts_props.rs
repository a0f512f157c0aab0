//! Blow-up chart invariants on random admissible points.

use blowuplab_core::charts::{blowdown, kappa12, kappa21, kappa23, kappa32, lift, Chart, ChartPoint};
use blowuplab_core::model::GalerkinState;
use proptest::prelude::*;

fn state(u1: f64, v1: f64, modes: &[f64]) -> GalerkinState {
    let mut u = vec![u1];
    u.extend(modes);
    let mut v = vec![v1];
    v.extend(modes.iter().map(|m| -0.5 * m));
    GalerkinState { u, v }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(1.0))
}

proptest! {
    #[test]
    fn lift_then_blowdown_is_identity(
        u1 in 0.01f64..1.0,
        v1 in -1.0f64..1.0,
        modes in prop::collection::vec(-0.5f64..0.5, 0..7),
        eps in 1e-6f64..0.1,
        a in 0.1f64..5.0,
    ) {
        for (chart, sign) in [(Chart::K1, -1.0), (Chart::K2, -1.0), (Chart::K2, 1.0), (Chart::K3, 1.0)] {
            let s = state(sign * u1, v1, &modes);
            let p = lift(&s, eps, a, chart).unwrap();
            let (t, e, b) = blowdown(&p).unwrap();
            prop_assert!(close(&s.to_flat(), &t.to_flat(), 1e-12), "{chart:?}");
            prop_assert!((e - eps).abs() <= 1e-12 * eps);
            prop_assert!((b - a).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn transition_maps_agree_with_lifts(
        u1 in 0.01f64..1.0,
        v1 in -1.0f64..1.0,
        modes in prop::collection::vec(-0.5f64..0.5, 0..7),
        eps in 1e-6f64..0.1,
        a in 0.1f64..5.0,
    ) {
        let s = state(-u1, v1, &modes);
        let via = kappa12(&lift(&s, eps, a, Chart::K1).unwrap()).unwrap();
        prop_assert!(close(&via.to_vec(), &lift(&s, eps, a, Chart::K2).unwrap().to_vec(), 1e-11));
        let s = state(u1, v1, &modes);
        let via = kappa32(&lift(&s, eps, a, Chart::K3).unwrap()).unwrap();
        prop_assert!(close(&via.to_vec(), &lift(&s, eps, a, Chart::K2).unwrap().to_vec(), 1e-11));
    }

    #[test]
    fn k2_round_trips(
        r in 0.05f64..1.0,
        a2 in 0.05f64..3.0,
        u12 in 0.05f64..5.0,
        v12 in -3.0f64..3.0,
        modes in prop::collection::vec(-1.0f64..1.0, 0..7),
    ) {
        for sign in [-1.0, 1.0] {
            let p = ChartPoint::k2(r, a2, sign * u12, v12, modes.clone(), modes.clone());
            let q = if sign < 0.0 { kappa12(&kappa21(&p).unwrap()) } else { kappa32(&kappa23(&p).unwrap()) }.unwrap();
            prop_assert!(close(&p.to_vec(), &q.to_vec(), 1e-12));
        }
    }
}

#[test]
fn wrong_side_is_a_chart_domain_error() {
    let s = state(0.3, 0.1, &[]);
    assert!(lift(&s, 1e-3, 1.0, Chart::K1).is_err());
    assert!(lift(&state(-0.3, 0.1, &[]), 1e-3, 1.0, Chart::K3).is_err());
    assert!(lift(&s, 0.0, 1.0, Chart::K2).is_err());
    let p = ChartPoint::k2(0.5, 1.0, 0.4, 0.0, vec![], vec![]);
    assert!(kappa21(&p).is_err());
}
