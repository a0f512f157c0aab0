//! Basis, coupling and Galerkin-state invariants.

use blowuplab_core::model::{nesting_check, vector_field, GalerkinState, ModelParams, StateRecord};
use blowuplab_core::spectral::{
    alpha, eigenvalue, grid, inverse_b_sum, inverse_b_sum_infinite, inverse_b_tail_bound, project, scaled_eigenvalue,
    synthesize, triple_product, Basis,
};
use proptest::prelude::*;

proptest! {
    #[test]
    fn basis_is_orthonormal(a in 0.2f64..5.0, kmax in 1usize..12) {
        let g = Basis::new(a, kmax).unwrap().gram_matrix(1001);
        for (i, row) in g.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                prop_assert!((x - target).abs() < 1e-10, "G[{i}][{j}] = {x}");
            }
        }
    }

    #[test]
    fn eigenvalues_scale_with_length(k in 1usize..40, a in 0.1f64..10.0, s in 0.2f64..5.0) {
        let l = eigenvalue(k, a).unwrap();
        prop_assert!((eigenvalue(k, s * a).unwrap() - l / (s * s)).abs() <= 1e-12 * l.abs().max(1.0));
        let lh = scaled_eigenvalue(k, a).unwrap();
        prop_assert!((lh - (2.0 * a).sqrt() * l).abs() <= 1e-12 * lh.abs().max(1.0));
        prop_assert!(l <= 0.0);
    }

    #[test]
    fn coupling_is_symmetric(i in 2usize..30, j in 2usize..30, k in 2usize..30) {
        let x = alpha(i, j, k).unwrap();
        prop_assert_eq!(x, alpha(j, i, k).unwrap());
        prop_assert_eq!(x, alpha(i, k, j).unwrap());
        prop_assert!(x == 0.0 || x == 0.5 || x == 1.0);
    }

    #[test]
    fn triple_product_matches_quadrature(i in 1usize..6, j in 1usize..6, k in 1usize..6, a in 0.3f64..3.0) {
        let n = 801;
        let xs = grid(a, n);
        let f: Vec<f64> = xs
            .iter()
            .map(|&x| {
                let mut c = vec![0.0; 6];
                c[i - 1] = 1.0;
                let ei = synthesize(&c, a, x);
                let mut c = vec![0.0; 6];
                c[j - 1] = 1.0;
                ei * synthesize(&c, a, x)
            })
            .collect();
        let q = project(&f, k, a).unwrap().value;
        prop_assert!((q - triple_product(i, j, k, a).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn project_inverts_synthesize(coeffs in prop::collection::vec(-1.0f64..1.0, 1..8), a in 0.3f64..3.0) {
        let n = 1001;
        let xs = grid(a, n);
        let f: Vec<f64> = xs.iter().map(|&x| synthesize(&coeffs, a, x)).collect();
        for (idx, c) in coeffs.iter().enumerate() {
            let p = project(&f, idx + 1, a).unwrap();
            prop_assert!(!p.under_resolved);
            prop_assert!((p.value - c).abs() < 1e-8);
        }
    }

    #[test]
    fn inverse_b_partial_sums_bracket_limit(kmax in 2usize..500) {
        let s = inverse_b_sum(kmax);
        let inf = inverse_b_sum_infinite();
        prop_assert!(s < inf);
        prop_assert!(inf - s <= inverse_b_tail_bound(kmax) + 1e-15);
    }

    #[test]
    fn flat_and_csv_round_trip(u in prop::collection::vec(-10.0f64..10.0, 1..10), eps in 0.0f64..1.0) {
        let v: Vec<f64> = u.iter().map(|x| -0.5 * x).collect();
        let s = GalerkinState { u, v };
        prop_assert_eq!(&GalerkinState::from_flat(&s.to_flat()).unwrap(), &s);
        let params = ModelParams::new(0.5, 1.0, eps, s.k0()).unwrap();
        let rec = StateRecord::new(&params, &s);
        prop_assert_eq!(StateRecord::from_csv_row(&rec.csv_row()).unwrap().state(), s);
    }

    #[test]
    fn truncations_nest(k0 in 1usize..6, extra in 1usize..6, seed in 0u64..1000) {
        let mut x = (seed as f64 + 1.0) * 0.37;
        let mut next = || { x = (x * 7.13).fract(); x - 0.5 };
        let mut s = GalerkinState::zeros(k0);
        for k in 0..k0 {
            s.u[k] = 0.2 * next();
            s.v[k] = 0.2 * next();
        }
        let small = ModelParams::new(0.7, 1.3, 1e-3, k0).unwrap();
        let large = small.with_k0(k0 + extra).unwrap();
        prop_assert!(nesting_check(&small, &large, &s.resized(k0 + extra)).unwrap());
    }
}

#[test]
fn homogeneous_state_has_no_mode_forcing() {
    let params = ModelParams::new(0.5, 1.0, 1e-2, 6).unwrap();
    let mut s = GalerkinState::zeros(6);
    s.u[0] = -0.3;
    s.v[0] = -0.2;
    let f = vector_field(&params, &s).unwrap();
    assert!(f.u[1..].iter().chain(&f.v[1..]).all(|x| *x == 0.0));
}
