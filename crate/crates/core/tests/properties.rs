use cmc_core::iwasawa;
use cmc_core::loopalg::{self, spectral, LoopGrid, MatrixLoop};
use cmc_core::mat2::{self, Mat2, C64};
use cmc_core::potential::LaurentSpec;
use proptest::prelude::*;

fn grid() -> LoopGrid {
    LoopGrid::new(64, 16).unwrap()
}

fn small_c64() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| C64::new(re, im))
}

/// Matrix Laurent polynomial with modes in `-2..=2`.
fn laurent_loop() -> impl Strategy<Value = Vec<[C64; 4]>> {
    prop::collection::vec(prop::array::uniform4(small_c64()), 5)
}

fn build(coeffs: &[[C64; 4]], scale: f64) -> MatrixLoop {
    MatrixLoop::from_fn(grid(), |l| {
        let mut m = Mat2::zeros();
        for (i, c) in coeffs.iter().enumerate() {
            m += mat2::mat(c[0], c[1], c[2], c[3]) * (l.powi(i as i32 - 2) * scale);
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loop_product_matches_pointwise(a in laurent_loop(), b in laurent_loop()) {
        let (x, y) = (build(&a, 0.2), build(&b, 0.2));
        let p = loopalg::loop_mul(&x, &y).unwrap();
        for probe in [0.3f64, 1.7, 4.1] {
            let l = C64::from_polar(1.0, probe);
            let direct = x.eval(l) * y.eval(l);
            prop_assert!(mat2::max_abs(&(p.eval(l) - direct)) < 1e-10);
        }
    }

    #[test]
    fn star_is_an_involution(a in laurent_loop()) {
        let x = build(&a, 0.3);
        let back = loopalg::loop_star(&loopalg::loop_star(&x));
        for (u, v) in back.samples().iter().zip(x.samples()) {
            prop_assert!(mat2::max_abs(&(u - v)) < 1e-12);
        }
    }

    #[test]
    fn positive_factor_reproduces_hermitian_loop(a in laurent_loop()) {
        // h = g* g + id is positive definite on the circle.
        let g = build(&a, 0.15);
        let h = loopalg::loop_mul(&loopalg::loop_star(&g), &g).unwrap().map(|m| m + mat2::identity());
        let f = spectral::matrix_spectral_factor(&h, &spectral::FactorOptions::default()).unwrap();
        prop_assert!(f.residual < 1e-7);
        prop_assert!(f.b.negative_energy_fraction() < 1e-10);
        prop_assert!(f.b0[(1, 0)].norm() < 1e-12);
        prop_assert!(f.b0[(0, 0)].re > 0.0 && f.b0[(1, 1)].re > 0.0);
    }

    #[test]
    fn su2_round_trip(x in prop::array::uniform3(-10.0f64..10.0)) {
        let back = iwasawa::su2_to_r3(&iwasawa::r3_to_su2(&x));
        for k in 0..3 {
            prop_assert!((back[k] - x[k]).abs() < 1e-12);
        }
        let psi = iwasawa::r3_to_su2(&x);
        prop_assert!(mat2::max_abs(&(psi + mat2::dagger(&psi))) < 1e-12);
        prop_assert!(mat2::trace(&psi).norm() < 1e-12);
    }

    #[test]
    fn laurent_spec_serde_round_trip(
        tau in 0.01f64..2.0,
        coeffs in prop::collection::btree_map(-6i32..6, small_c64(), 0..6),
    ) {
        let spec = LaurentSpec::new(tau, coeffs);
        let text = serde_json::to_string(&spec).unwrap();
        let back: LaurentSpec = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, spec);
    }
}
