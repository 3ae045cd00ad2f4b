use blipcdf::dgp::{draw, DgpKind, DgpSpec, TruthSample, TRUTH_SEED};
use blipcdf::estimator::{plugin_estimate, tmle_update, SmoothingSpec, TmleOptions};
use blipcdf::learners::NuisanceFit;
use blipcdf::PolyKernel;

fn true_nuisance(kind: DgpKind, w: &[f64], g: &[f64]) -> NuisanceFit {
    NuisanceFit {
        q0: w.iter().map(|&x| kind.outcome(0.0, x)).collect(),
        q1: w.iter().map(|&x| kind.outcome(1.0, x)).collect(),
        g1: g.to_vec(),
        g_truncation: 0.0,
        g_known: true,
        g_truncated_count: 0,
    }
}

#[test]
fn eic_has_mean_zero_at_the_truth() {
    for kind in [DgpKind::WellSpecified, DgpKind::Misspecified] {
        let d = draw(&DgpSpec { kind, n: 100_000, seed: 8 }).unwrap();
        let w = d.data.w().column(0).to_vec();
        let nf = true_nuisance(kind, &w, &d.g_true);
        let spec = SmoothingSpec::new(PolyKernel::build(0, 1.0).unwrap(), 0.2, vec![-0.05, 0.1, 0.25]).unwrap();
        let res = plugin_estimate(d.data.a(), d.data.y(), &nf, &spec).unwrap();
        // the plug-in term has mean zero by construction; the residual term
        // is centred only at the true outcome regression
        for j in 0..3 {
            assert!(res.mean_eic[j].abs() < 4.0 * res.se[j], "{kind:?} t{j}: {} vs se {}", res.mean_eic[j], res.se[j]);
        }
        let truth = TruthSample::new(kind, 1_000_000, TRUTH_SEED);
        for (j, &t) in spec.t.iter().enumerate() {
            let target = truth.smoothed(&spec.kernel, spec.delta, t);
            assert!((res.psi[j] - target).abs() < 4.0 * res.se[j] + 1e-3);
        }
    }
}

#[test]
fn targeting_at_the_truth_moves_little() {
    let kind = DgpKind::WellSpecified;
    let d = draw(&DgpSpec { kind, n: 20_000, seed: 9 }).unwrap();
    let w = d.data.w().column(0).to_vec();
    let nf = true_nuisance(kind, &w, &d.g_true);
    let spec = SmoothingSpec::new(PolyKernel::build(0, 1.0).unwrap(), 0.25, vec![0.0, 0.2]).unwrap();
    let res = tmle_update(d.data.a(), d.data.y(), &nf, &spec, &TmleOptions::default()).unwrap();
    assert!(res.converged);
    for j in 0..2 {
        assert!(res.mean_eic[j].abs() <= res.tol[j]);
        assert!((res.psi[j] - res.initial_psi[j]).abs() < 3.0 * res.se[j]);
    }
}
