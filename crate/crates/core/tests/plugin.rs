mod common;

use blipcdf::estimator::{smoothed_cdf_plugin, SmoothingSpec};
use blipcdf::PolyKernel;
use common::quad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `(1/n) sum_i int (1/delta) k((x - t)/delta) I(b_i <= x) dx`, each
/// integral by adaptive quadrature over the kernel window.
fn quadrature_plugin(b: &[f64], kernel: &PolyKernel, delta: f64, t: f64) -> f64 {
    let r = kernel.radius() * delta;
    let dens = |x: f64| kernel.eval((x - t) / delta) / delta;
    b.iter()
        .map(|&bi| {
            let lo = bi.max(t - r);
            if lo >= t + r {
                0.0
            } else {
                quad(&dens, lo, t + r, 2)
            }
        })
        .sum::<f64>()
        / b.len() as f64
}

#[test]
fn plugin_matches_quadrature_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..50 {
        let k = [0i64, 2, 4][rng.random_range(0..3)];
        let r = [0.5, 1.0, 2.0][rng.random_range(0..3)];
        let kernel = PolyKernel::build(k, r).unwrap();
        let n = rng.random_range(5..60);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let delta = rng.random_range(0.02..0.6);
        let mut t: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        t.sort_by(|x, y| x.partial_cmp(y).unwrap());
        t.dedup();
        let spec = SmoothingSpec::new(kernel.clone(), delta, t.clone()).unwrap();
        let got = smoothed_cdf_plugin(&b, &spec);
        for (j, &tj) in t.iter().enumerate() {
            let want = quadrature_plugin(&b, &kernel, delta, tj);
            assert!((got[j] - want).abs() < 1e-8, "K={k} R={r} delta={delta} t={tj}: {} vs {want}", got[j]);
        }
    }
}

#[test]
fn plugin_limits() {
    let kernel = PolyKernel::build(2, 1.0).unwrap();
    let b = [0.1, 0.2, 0.3];
    let spec = SmoothingSpec::new(kernel, 0.05, vec![-1.0, 0.2, 1.0]).unwrap();
    let v = smoothed_cdf_plugin(&b, &spec);
    assert_eq!(v[0], 0.0);
    assert!((v[1] - 0.5).abs() < 1e-12);
    assert_eq!(v[2], 1.0);
}
