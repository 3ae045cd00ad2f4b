use blipcdf::dgp::{draw, true_blip, DgpKind, DgpSpec};
use blipcdf::estimator::blip;
use blipcdf::learners::hal::{make_hal_design, MAX_KNOTS};
use blipcdf::learners::lasso::{lambda_max, solve_at_tol, CdDesign, LassoCoefficients};
use blipcdf::learners::{fit_nuisance, LearnerKind, DEFAULT_G_TRUNCATION};
use blipcdf::util::expit;

fn blip_mse(kind: DgpKind, learner: LearnerKind, n: usize, seed: u64) -> f64 {
    let d = draw(&DgpSpec { kind, n, seed }).unwrap();
    let nf = fit_nuisance(&d.data, learner.build().as_ref(), DEFAULT_G_TRUNCATION, None, seed).unwrap();
    let w = d.data.w().column(0).to_vec();
    let truth = true_blip(kind, &w);
    blip(&nf).iter().zip(&truth).map(|(b, t)| (b - t) * (b - t)).sum::<f64>() / n as f64
}

#[test]
fn hal_beats_glm_on_the_misspecified_law() {
    for seed in [1, 2, 3] {
        let hal = blip_mse(DgpKind::Misspecified, LearnerKind::Hal, 1000, seed);
        let glm = blip_mse(DgpKind::Misspecified, LearnerKind::Glm, 1000, seed);
        assert!(hal < 0.5 * glm, "seed {seed}: hal {hal} glm {glm}");
    }
}

#[test]
fn glm_is_accurate_on_the_well_specified_law() {
    let glm = blip_mse(DgpKind::WellSpecified, LearnerKind::Glm, 5000, 4);
    assert!(glm < 1e-3, "{glm}");
}

#[test]
fn hal_lasso_solution_satisfies_kkt() {
    let d = draw(&DgpSpec { kind: DgpKind::Misspecified, n: 400, seed: 6 }).unwrap();
    let design = make_hal_design(d.data.w().view(), Some(d.data.a()), MAX_KNOTS).unwrap();
    let y = d.data.y();
    let n = y.len() as f64;
    let lmax = lambda_max(&design, y);
    for frac in [0.3, 0.05, 0.01] {
        let lambda = lmax * frac;
        let mut coef = LassoCoefficients::zeros(design.ncols());
        solve_at_tol(&design, y, lambda, &mut coef, 1e-20);
        let eta = coef.eta(&design);
        let resid: Vec<f64> = y.iter().zip(&eta).map(|(yi, e)| yi - expit(*e)).collect();
        assert!(resid.iter().sum::<f64>().abs() / n < 1e-8, "intercept score");
        let score: Vec<f64> = design.crossprod(&resid).iter().map(|s| s / n).collect();
        for (j, (s, b)) in score.iter().zip(&coef.beta).enumerate() {
            if *b == 0.0 {
                assert!(s.abs() <= lambda * (1.0 + 1e-6) + 1e-9, "frac {frac} col {j}: |{s}| > {lambda}");
            } else {
                assert!((s - lambda * b.signum()).abs() <= 1e-6 * lambda + 1e-9, "frac {frac} col {j}: {s} vs {lambda}");
            }
        }
    }
}
