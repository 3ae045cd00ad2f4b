mod common;

use blipcdf::PolyKernel;
use common::{cramer3, quad};
use proptest::prelude::*;

fn k_choice() -> impl Strategy<Value = i64> {
    prop_oneof![Just(0i64), Just(2), Just(4)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mass_and_vanishing_moments_by_quadrature(k in k_choice(), r in 0.3f64..3.0) {
        let kern = PolyKernel::build(k, r).unwrap();
        let f = |x: f64| kern.eval(x);
        let mass = quad(&f, -r, r, 4);
        prop_assert!((mass - 1.0).abs() < 1e-9, "mass {mass}");
        for p in (2..=2 * k as i32).step_by(2) {
            let m = quad(&|x: f64| x.powi(p) * kern.eval(x), -r, r, 4);
            prop_assert!((m / r.powi(p)).abs() < 1e-8, "moment {p}: {m}");
        }
        let first = kern.order() as i32;
        let m = quad(&|x: f64| x.powi(first) * kern.eval(x), -r, r, 4);
        prop_assert!((m - kern.moment(first as usize)).abs() < 1e-8 * r.powi(first).max(1.0));
    }

    #[test]
    fn cdf_matches_quadrature(k in k_choice(), r in 0.3f64..3.0, u in -1.2f64..1.2) {
        let kern = PolyKernel::build(k, r).unwrap();
        let x = u * r;
        let lo = -r;
        let q = if x <= lo { 0.0 } else { quad(&|s: f64| kern.eval(s), lo, x.min(r), 2) };
        prop_assert!((kern.cdf(x) - q).abs() < 1e-9, "cdf({x}) = {} vs {q}", kern.cdf(x));
    }

    #[test]
    fn scale_equivariance(k in k_choice(), r in 0.3f64..3.0, u in -1.0f64..1.0) {
        let unit = PolyKernel::build(k, 1.0).unwrap();
        let scaled = PolyKernel::build(k, r).unwrap();
        let want = unit.eval(u) / r;
        prop_assert!((scaled.eval(u * r) - want).abs() < 1e-9 * want.abs().max(1.0));
        prop_assert!((scaled.cdf(u * r) - unit.cdf(u)).abs() < 1e-10);
        prop_assert_eq!(scaled.order(), unit.order());
    }

    #[test]
    fn second_order_cdf_is_monotone(r in 0.3f64..3.0, a in -1.5f64..1.5, b in -1.5f64..1.5) {
        let kern = PolyKernel::build(0, r).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(kern.cdf(lo * r) <= kern.cdf(hi * r) + 1e-15);
        prop_assert!(kern.eval(a * r) >= 0.0);
    }
}

/// Independent oracle: k(x) = a0 + a1 x^2 + a2 x^4 with k(R) = 0, k'(R) = 0
/// and unit mass.
#[test]
fn second_order_kernel_against_cramer() {
    for r in [0.5f64, 1.0, 2.0, 0.37] {
        let m = [
            [1.0, r * r, r.powi(4)],
            [0.0, 2.0 * r, 4.0 * r.powi(3)],
            [2.0 * r, 2.0 * r.powi(3) / 3.0, 2.0 * r.powi(5) / 5.0],
        ];
        let want = cramer3(m, [0.0, 0.0, 1.0]);
        let got = PolyKernel::build(0, r).unwrap();
        for (g, w) in got.coefficients().iter().zip(want) {
            assert!((g - w).abs() < 1e-12 * w.abs().max(1.0), "R={r}: {g} vs {w}");
        }
        assert_eq!(got.order(), 2);
    }
    let unit = PolyKernel::build(0, 1.0).unwrap();
    for (g, w) in unit.coefficients().iter().zip([15.0 / 16.0, -30.0 / 16.0, 15.0 / 16.0]) {
        assert!((g - w).abs() < 1e-12);
    }
}

#[test]
fn invalid_constructions() {
    assert!(PolyKernel::build(3, 1.0).is_err());
    assert!(PolyKernel::build(-2, 1.0).is_err());
    assert!(PolyKernel::build(2, 0.0).is_err());
    assert!(PolyKernel::build(2, f64::NAN).is_err());
}

#[test]
fn json_round_trip() {
    let k = PolyKernel::build(4, 1.5).unwrap();
    let back = PolyKernel::from_json(&k.to_json()).unwrap();
    assert_eq!(back.coefficients(), k.coefficients());
    assert_eq!(back.order(), 10);
}

#[test]
fn quadrature_rule_is_exact_for_polynomials() {
    for p in [0, 5, 20, 39] {
        let got = quad(&|x: f64| x.powi(p), 0.0, 1.0, 1);
        assert!((got - 1.0 / (p + 1) as f64).abs() < 1e-14, "degree {p}: {got}");
    }
}
