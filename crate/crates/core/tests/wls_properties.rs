use hdrsr_core::image::Plane;
use hdrsr_core::wls::{
    assemble_system, compute_smoothness_weights, dense_oracle_solve, solve_wls,
    solve_wls_with_stats, WlsParams,
};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (Plane, WlsParams)> {
    (2usize..10, 2usize..10, 0.1f64..4.0, 0.5f64..2.5).prop_flat_map(|(h, w, lambda, alpha)| {
        prop::collection::vec(1e-3f64..1.0, h * w).prop_map(move |d| {
            (Plane::new(h, w, d).unwrap(), WlsParams::new(lambda, alpha, 1e-4).unwrap())
        })
    })
}

fn total_variation(p: &Plane) -> f64 {
    let mut tv = 0.0;
    for y in 0..p.height() {
        for x in 0..p.width() {
            if x + 1 < p.width() {
                tv += (p.get(y, x + 1) - p.get(y, x)).abs();
            }
            if y + 1 < p.height() {
                tv += (p.get(y + 1, x) - p.get(y, x)).abs();
            }
        }
    }
    tv
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn system_is_spd((p, params) in instance()) {
        let (ax, ay) = compute_smoothness_weights(&p, &params).unwrap();
        let s = assemble_system(&ax, &ay, params.lambda).unwrap();
        s.check_spd().unwrap();
        for i in 0..s.n() {
            prop_assert!(s.diagonal()[i] > s.off_diagonal_row_sum(i));
        }
    }

    #[test]
    fn mean_and_maximum_principle((p, params) in instance()) {
        let u = solve_wls(&p, &p, &params).unwrap();
        prop_assert!((u.mean() - p.mean()).abs() <= 1e-6 * p.mean().abs() + 1e-9);
        prop_assert!(u.min() >= p.min() - 1e-6);
        prop_assert!(u.max() <= p.max() + 1e-6);
    }

    #[test]
    fn matches_dense_oracle((p, params) in instance()) {
        let a = solve_wls(&p, &p, &params).unwrap();
        let b = dense_oracle_solve(&p, &p, &params).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() <= 1e-5);
        }
    }

    #[test]
    fn energy_never_increases((p, params) in instance()) {
        let (_, stats) = solve_wls_with_stats(&p, &p, &params).unwrap();
        let e = &stats.energies;
        let scale = e.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for i in 1..e.len() {
            prop_assert!(e[i] <= e[i - 1] + 1e-12 * scale);
        }
        let h = &stats.preconditioned_residuals;
        prop_assert!(h.last().unwrap() <= h.first().unwrap());
    }

    #[test]
    fn second_pass_does_not_raise_total_variation((p, params) in instance()) {
        let u1 = solve_wls(&p, &p, &params).unwrap();
        let u2 = solve_wls(&u1, &p, &params).unwrap();
        prop_assert!(total_variation(&u2) <= total_variation(&u1) + 1e-6);
    }

    #[test]
    fn zero_lambda_is_identity(p in instance().prop_map(|(p, _)| p)) {
        let params = WlsParams::new(0.0, 2.0, 1e-4).unwrap();
        prop_assert_eq!(solve_wls(&p, &p, &params).unwrap(), p);
    }
}
