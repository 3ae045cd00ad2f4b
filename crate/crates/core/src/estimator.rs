//! Blip, smoothed-CDF plug-in, efficient influence curve, and the targeted
//! (TMLE) and cross-validated (CV-TMLE) estimators.

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::kernels::PolyKernel;
use crate::learners::glm::fit_glm_logistic;
use crate::learners::{fold_assignment, FittedNuisance, Learner, NuisanceFit};
use crate::par;
use crate::util::{expit, logistic_loss, logit, logit_bound, mean, sample_sd};

/// Kernel, bandwidth and evaluation points.
#[derive(Debug, Clone, Serialize)]
pub struct SmoothingSpec {
    pub kernel: PolyKernel,
    pub delta: f64,
    pub t: Vec<f64>,
}

impl SmoothingSpec {
    pub fn new(kernel: PolyKernel, delta: f64, t: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return arg_err(format!("bandwidth must be positive and finite, got {delta}"));
        }
        if t.is_empty() {
            return arg_err("at least one t point is required");
        }
        if t.iter().any(|v| !v.is_finite()) || t.windows(2).any(|w| w[1] <= w[0]) {
            return arg_err("t points must be finite and strictly increasing");
        }
        Ok(SmoothingSpec { kernel, delta, t })
    }

    pub fn d(&self) -> usize {
        self.t.len()
    }

    /// Same kernel and points at another bandwidth.
    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        SmoothingSpec::new(self.kernel.clone(), delta, self.t.clone())
    }
}

/// `b_i = q1_i - q0_i`.
pub fn blip(nf: &NuisanceFit) -> Vec<f64> {
    nf.q1.iter().zip(&nf.q0).map(|(a, b)| a - b).collect()
}

/// `(1/n) sum_i [1 - Kcdf((b_i - t_j) / delta)]` for each `t_j`.
pub fn smoothed_cdf_plugin(b: &[f64], spec: &SmoothingSpec) -> Vec<f64> {
    let n = b.len() as f64;
    spec.t
        .iter()
        .map(|&t| b.iter().map(|&bi| 1.0 - spec.kernel.cdf((bi - t) / spec.delta)).sum::<f64>() / n)
        .collect()
}

fn g_of_a(g1: f64, a: f64) -> f64 {
    if a == 1.0 {
        g1
    } else {
        1.0 - g1
    }
}

/// `H_ij = -(1/delta) k((b_i - t_j)/delta) (2 a_i - 1) / g(a_i | W_i)`.
pub fn clever_covariate(b: &[f64], g1: &[f64], a: &[f64], spec: &SmoothingSpec) -> Array2<f64> {
    Array2::from_shape_fn((b.len(), spec.d()), |(i, j)| {
        let k = spec.kernel.eval((b[i] - spec.t[j]) / spec.delta);
        -k / spec.delta * (2.0 * a[i] - 1.0) / g_of_a(g1[i], a[i])
    })
}

/// Efficient influence curve, `n x d`.
#[allow(clippy::too_many_arguments)]
pub fn eic(
    b: &[f64],
    q0: &[f64],
    q1: &[f64],
    g1: &[f64],
    a: &[f64],
    y: &[f64],
    psi: &[f64],
    spec: &SmoothingSpec,
) -> Array2<f64> {
    let h = clever_covariate(b, g1, a, spec);
    Array2::from_shape_fn((b.len(), spec.d()), |(i, j)| {
        let qbar = if a[i] == 1.0 { q1[i] } else { q0[i] };
        let plug = 1.0 - spec.kernel.cdf((b[i] - spec.t[j]) / spec.delta);
        h[[i, j]] * (y[i] - qbar) + plug - psi[j]
    })
}

/// Stopping tolerance for the score equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Stopping {
    /// `sd_j / (sqrt(n) log n)` per column, `sd_j` the EIC standard
    /// deviation (equivalently `se_j / log n`).
    Auto,
    Fixed(f64),
}

/// Fluctuation submodel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Submodel {
    /// One-dimensional fluctuation along the normalized mean-EIC direction.
    Clfm,
    /// `d`-dimensional fluctuation with the full clever covariate.
    Lfm,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TmleOptions {
    pub stopping: Stopping,
    pub max_iter: usize,
    pub submodel: Submodel,
}

impl Default for TmleOptions {
    fn default() -> Self {
        TmleOptions {
            stopping: Stopping::Auto,
            max_iter: 100,
            submodel: Submodel::Clfm,
        }
    }
}

/// Estimates and influence-curve summaries at one bandwidth.
#[derive(Debug, Clone, Serialize)]
pub struct TmleResult {
    pub t: Vec<f64>,
    pub delta: f64,
    pub psi: Vec<f64>,
    pub initial_psi: Vec<f64>,
    #[serde(skip)]
    pub eic: Array2<f64>,
    pub se: Vec<f64>,
    pub mean_eic: Vec<f64>,
    pub tol: Vec<f64>,
    /// Fluctuation coefficients, one entry per targeting step (clfm) or
    /// `d` entries per step (lfm).
    pub epsilon: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// False for the untargeted plug-in.
    pub targeted: bool,
    /// Mean negative log-likelihood of `Y` before each targeting step and
    /// after the last one.
    pub loss_trace: Vec<f64>,
    pub g_known: bool,
    pub g_truncation: f64,
    pub g_truncated_count: usize,
    pub g_min: f64,
    pub g_max: f64,
}

impl TmleResult {
    pub fn n(&self) -> usize {
        self.eic.nrows()
    }

    pub fn d(&self) -> usize {
        self.psi.len()
    }

    /// Largest `|P_n D_j| - tol_j`; nonpositive when every equation is solved.
    pub fn max_score_excess(&self) -> f64 {
        self.mean_eic
            .iter()
            .zip(&self.tol)
            .map(|(m, t)| m.abs() - t)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Whether the mean negative log-likelihood never rose during targeting.
    pub fn loss_monotone(&self, slack: f64) -> bool {
        self.loss_trace.windows(2).all(|w| w[1] <= w[0] + slack)
    }
}

const STOP_FLOOR: f64 = 1e-12;

/// Per-iteration quantities at the current outcome regression.
struct State {
    psi: Vec<f64>,
    eic: Array2<f64>,
    /// `-(1/delta) k(.)` without the treatment factor.
    kd: Array2<f64>,
    mean: Vec<f64>,
    se: Vec<f64>,
}

fn evaluate(q0: &[f64], q1: &[f64], g1: &[f64], a: &[f64], y: &[f64], spec: &SmoothingSpec) -> State {
    let n = a.len();
    let d = spec.d();
    let b: Vec<f64> = q1.iter().zip(q0).map(|(x, z)| x - z).collect();
    let mut kd = Array2::zeros((n, d));
    let mut plug = Array2::zeros((n, d));
    for i in 0..n {
        for j in 0..d {
            let (k, c) = spec.kernel.eval_with_cdf((b[i] - spec.t[j]) / spec.delta);
            kd[[i, j]] = -k / spec.delta;
            plug[[i, j]] = 1.0 - c;
        }
    }
    let psi: Vec<f64> = plug.mean_axis(Axis(0)).expect("n > 0").to_vec();
    let mut eic = plug;
    for i in 0..n {
        let (qbar, hfac) = if a[i] == 1.0 {
            (q1[i], 1.0 / g1[i])
        } else {
            (q0[i], -1.0 / (1.0 - g1[i]))
        };
        let r = y[i] - qbar;
        for j in 0..d {
            eic[[i, j]] += kd[[i, j]] * hfac * r - psi[j];
        }
    }
    let mut mean_v = Vec::with_capacity(d);
    let mut se = Vec::with_capacity(d);
    for col in eic.columns() {
        let c = col.to_vec();
        mean_v.push(mean(&c));
        se.push(sample_sd(&c) / (n as f64).sqrt());
    }
    State {
        psi,
        eic,
        kd,
        mean: mean_v,
        se,
    }
}

fn tolerances(stopping: Stopping, se: &[f64], n: usize) -> Vec<f64> {
    let nf = n as f64;
    match stopping {
        Stopping::Auto => se.iter().map(|s| (s / nf.ln()).max(STOP_FLOOR)).collect(),
        Stopping::Fixed(v) => vec![v; se.len()],
    }
}

fn observed_loss(y: &[f64], a: &[f64], l0: &[f64], l1: &[f64]) -> f64 {
    let s: f64 = (0..y.len())
        .map(|i| logistic_loss(y[i], if a[i] == 1.0 { l1[i] } else { l0[i] }))
        .sum();
    s / y.len() as f64
}

fn check_inputs(a: &[f64], y: &[f64], nf: &NuisanceFit) -> Result<()> {
    let n = a.len();
    if y.len() != n || nf.n() != n || nf.g1.len() != n || nf.q1.len() != n {
        return arg_err("treatment, outcome and nuisance lengths differ");
    }
    if n < 2 {
        return arg_err("need at least two observations");
    }
    Ok(())
}

fn finish(
    state: State,
    initial_psi: Vec<f64>,
    tol: Vec<f64>,
    nf: &NuisanceFit,
    epsilon: Vec<f64>,
    iterations: usize,
    converged: bool,
    targeted: bool,
    loss_trace: Vec<f64>,
    spec: &SmoothingSpec,
) -> TmleResult {
    TmleResult {
        t: spec.t.clone(),
        delta: spec.delta,
        psi: state.psi,
        initial_psi,
        eic: state.eic,
        se: state.se,
        mean_eic: state.mean,
        tol,
        epsilon,
        iterations,
        converged,
        targeted,
        loss_trace,
        g_known: nf.g_known,
        g_truncation: nf.g_truncation,
        g_truncated_count: nf.g_truncated_count,
        g_min: nf.g1.iter().cloned().fold(f64::INFINITY, f64::min),
        g_max: nf.g1.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Untargeted plug-in with influence-curve standard errors.
pub fn plugin_estimate(a: &[f64], y: &[f64], nf: &NuisanceFit, spec: &SmoothingSpec) -> Result<TmleResult> {
    check_inputs(a, y, nf)?;
    let st = evaluate(&nf.q0, &nf.q1, &nf.g1, a, y, spec);
    let tol = tolerances(Stopping::Auto, &st.se, a.len());
    let psi0 = st.psi.clone();
    let l0: Vec<f64> = nf.q0.iter().map(|&q| logit(q)).collect();
    let l1: Vec<f64> = nf.q1.iter().map(|&q| logit(q)).collect();
    let loss = vec![observed_loss(y, a, &l0, &l1)];
    Ok(finish(st, psi0, tol, nf, Vec::new(), 0, false, false, loss, spec))
}

/// Iterative targeting of `Qbar` until the `d` score equations are solved.
///
/// `a`, `y` and `nf` are row-aligned; for CV-TMLE they are the pooled
/// validation rows.
pub fn tmle_update(
    a: &[f64],
    y: &[f64],
    nf: &NuisanceFit,
    spec: &SmoothingSpec,
    opts: &TmleOptions,
) -> Result<TmleResult> {
    check_inputs(a, y, nf)?;
    if opts.max_iter == 0 {
        return arg_err("max_iter must be at least 1");
    }
    let n = a.len();
    let d = spec.d();
    let bound = logit_bound();
    let g1 = &nf.g1;
    let mut l0: Vec<f64> = nf.q0.iter().map(|&q| logit(q).clamp(-bound, bound)).collect();
    let mut l1: Vec<f64> = nf.q1.iter().map(|&q| logit(q).clamp(-bound, bound)).collect();
    let to_prob = |l: &[f64]| l.iter().map(|&v| expit(v)).collect::<Vec<f64>>();

    let mut q0 = to_prob(&l0);
    let mut q1 = to_prob(&l1);
    let mut st = evaluate(&q0, &q1, g1, a, y, spec);
    let initial_psi = st.psi.clone();
    let mut loss_trace = vec![observed_loss(y, a, &l0, &l1)];
    let mut epsilon = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut tol;

    loop {
        iterations += 1;
        tol = tolerances(opts.stopping, &st.se, n);
        if st.mean.iter().zip(&tol).all(|(m, t)| m.abs() <= *t) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        // per-row fluctuation covariates with A set to 0, 1 and observed
        let (h0, h1): (Vec<f64>, Vec<f64>) = match opts.submodel {
            Submodel::Clfm => {
                let norm = st.mean.iter().map(|m| m * m).sum::<f64>().sqrt();
                let c: Vec<f64> = st.mean.iter().map(|m| m / norm).collect();
                (0..n)
                    .map(|i| {
                        let s: f64 = (0..d).map(|j| c[j] * st.kd[[i, j]]).sum();
                        (-s / (1.0 - g1[i]), s / g1[i])
                    })
                    .unzip()
            }
            Submodel::Lfm => (Vec::new(), Vec::new()),
        };

        let offset: Vec<f64> = (0..n).map(|i| if a[i] == 1.0 { l1[i] } else { l0[i] }).collect();
        let old_loss = *loss_trace.last().expect("nonempty");
        let (mut step0, mut step1): (Vec<f64>, Vec<f64>);
        match opts.submodel {
            Submodel::Clfm => {
                let x = Array2::from_shape_fn((n, 1), |(i, _)| if a[i] == 1.0 { h1[i] } else { h0[i] });
                let fit = fit_glm_logistic(x.view(), y, Some(&offset))?;
                let eps = fit.coefficients[0];
                if !eps.is_finite() {
                    return Err(Error::Numerical(format!("non-finite fluctuation at iteration {iterations}")));
                }
                epsilon.push(eps);
                step0 = h0.iter().map(|h| eps * h).collect();
                step1 = h1.iter().map(|h| eps * h).collect();
            }
            Submodel::Lfm => {
                let x = Array2::from_shape_fn((n, d), |(i, j)| {
                    let fac = if a[i] == 1.0 { 1.0 / g1[i] } else { -1.0 / (1.0 - g1[i]) };
                    st.kd[[i, j]] * fac
                });
                let fit = fit_glm_logistic(x.view(), y, Some(&offset))?;
                if fit.coefficients.iter().any(|e| !e.is_finite()) {
                    return Err(Error::Numerical(format!("non-finite fluctuation at iteration {iterations}")));
                }
                let eps = fit.coefficients;
                step0 = (0..n)
                    .map(|i| -(0..d).map(|j| eps[j] * st.kd[[i, j]]).sum::<f64>() / (1.0 - g1[i]))
                    .collect();
                step1 = (0..n)
                    .map(|i| (0..d).map(|j| eps[j] * st.kd[[i, j]]).sum::<f64>() / g1[i])
                    .collect();
                epsilon.extend(eps);
            }
        }

        // clamping the logits can in principle undo part of the gain; halve
        // the step until the loss does not rise
        let mut new0 = vec![0.0; n];
        let mut new1 = vec![0.0; n];
        let mut new_loss = f64::INFINITY;
        for _ in 0..30 {
            for i in 0..n {
                new0[i] = (l0[i] + step0[i]).clamp(-bound, bound);
                new1[i] = (l1[i] + step1[i]).clamp(-bound, bound);
            }
            new_loss = observed_loss(y, a, &new0, &new1);
            if new_loss <= old_loss {
                break;
            }
            step0.iter_mut().for_each(|s| *s *= 0.5);
            step1.iter_mut().for_each(|s| *s *= 0.5);
        }
        if new_loss > old_loss {
            // no descent available along this direction
            break;
        }
        l0 = new0;
        l1 = new1;
        loss_trace.push(new_loss);
        q0 = to_prob(&l0);
        q1 = to_prob(&l1);
        st = evaluate(&q0, &q1, g1, a, y, spec);
    }

    Ok(finish(st, initial_psi, tol, nf, epsilon, iterations, converged, true, loss_trace, spec))
}

/// TMLE with nuisances fit and evaluated on the full sample.
pub fn tmle(
    data: &Dataset,
    spec: &SmoothingSpec,
    learner: &dyn Learner,
    g_truncation: f64,
    known_g: Option<&[f64]>,
    seed: u64,
    opts: &TmleOptions,
) -> Result<TmleResult> {
    let nf = crate::learners::fit_nuisance(data, learner, g_truncation, known_g, seed)?;
    tmle_update(data.a(), data.y(), &nf, spec, opts)
}

/// Cross-fitted nuisance predictions: every row is predicted by models fit
/// on the folds that exclude it.
#[derive(Debug, Clone, Serialize)]
pub struct CrossFit {
    pub nuisance: NuisanceFit,
    pub folds: Vec<usize>,
    pub v: usize,
    /// Number of fold draws needed to give every training set both arms.
    pub fold_attempts: usize,
}

const MAX_FOLD_ATTEMPTS: usize = 10;

fn folds_with_both_arms(a: &[f64], v: usize, seed: u64) -> Result<(Vec<usize>, usize)> {
    let total_treated = a.iter().filter(|&&x| x == 1.0).count();
    let n = a.len();
    for attempt in 0..MAX_FOLD_ATTEMPTS {
        let folds = fold_assignment(n, v, par::derive_seed(seed, attempt as u64));
        let mut size = vec![0usize; v];
        let mut treated = vec![0usize; v];
        for (i, &f) in folds.iter().enumerate() {
            size[f] += 1;
            if a[i] == 1.0 {
                treated[f] += 1;
            }
        }
        let ok = (0..v).all(|f| {
            let tr_size = n - size[f];
            let tr_treated = total_treated - treated[f];
            tr_treated > 0 && tr_treated < tr_size
        });
        if ok {
            return Ok((folds, attempt + 1));
        }
    }
    Err(Error::Data(format!(
        "could not split {n} rows into {v} folds whose training sets contain both treatment arms \
         after {MAX_FOLD_ATTEMPTS} attempts"
    )))
}

/// Fits nuisances on each training split and predicts on its validation fold.
pub fn cross_fit(
    data: &Dataset,
    learner: &dyn Learner,
    v: usize,
    g_truncation: f64,
    known_g: Option<&[f64]>,
    seed: u64,
) -> Result<CrossFit> {
    let n = data.n();
    if v < 2 {
        return arg_err(format!("CV-TMLE needs at least 2 folds, got {v}"));
    }
    if v > n {
        return arg_err(format!("{v} folds requested for {n} rows"));
    }
    if known_g.is_some_and(|g| g.len() != n) {
        return arg_err("known propensity length differs from the data");
    }
    let (folds, attempts) = folds_with_both_arms(data.a(), v, seed)?;
    let per_fold: Vec<Result<(Vec<usize>, NuisanceFit)>> = par::map_indexed(v, |f| {
        let train: Vec<usize> = (0..n).filter(|&i| folds[i] != f).collect();
        let valid: Vec<usize> = (0..n).filter(|&i| folds[i] == f).collect();
        let fitted = FittedNuisance::fit(
            &data.subset(&train),
            learner,
            known_g.is_none(),
            par::derive_seed(seed, 1_000 + f as u64),
        )?;
        let vdata = data.subset(&valid);
        let vg: Option<Vec<f64>> = known_g.map(|g| valid.iter().map(|&i| g[i]).collect());
        let nf = fitted.predict(vdata.w().view(), vg.as_deref(), g_truncation)?;
        Ok((valid, nf))
    });

    let mut q0 = vec![0.0; n];
    let mut q1 = vec![0.0; n];
    let mut g1 = vec![0.0; n];
    let mut g_known = known_g.is_some();
    for res in per_fold {
        let (rows, nf) = res?;
        g_known = nf.g_known;
        for (k, &i) in rows.iter().enumerate() {
            q0[i] = nf.q0[k];
            q1[i] = nf.q1[k];
            g1[i] = nf.g1[k];
        }
    }
    let g_truncated_count = g1
        .iter()
        .filter(|&&g| g <= g_truncation || g >= 1.0 - g_truncation)
        .count();
    Ok(CrossFit {
        nuisance: NuisanceFit {
            q0,
            q1,
            g1,
            g_truncation,
            g_known,
            g_truncated_count,
        },
        folds,
        v,
        fold_attempts: attempts,
    })
}

/// Cross-validated TMLE with a single pooled fluctuation across folds.
#[allow(clippy::too_many_arguments)]
pub fn cv_tmle(
    data: &Dataset,
    spec: &SmoothingSpec,
    learner: &dyn Learner,
    v: usize,
    g_truncation: f64,
    known_g: Option<&[f64]>,
    seed: u64,
    opts: &TmleOptions,
) -> Result<TmleResult> {
    let cf = cross_fit(data, learner, v, g_truncation, known_g, seed)?;
    tmle_update(data.a(), data.y(), &cf.nuisance, spec, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::PolyKernel;
    use crate::learners::{column, GlmLearner, DEFAULT_G_TRUNCATION};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn biweight_spec(delta: f64, t: Vec<f64>) -> SmoothingSpec {
        SmoothingSpec::new(PolyKernel::build(0, 1.0).unwrap(), delta, t).unwrap()
    }

    fn nf(q0: Vec<f64>, q1: Vec<f64>, g1: Vec<f64>) -> NuisanceFit {
        NuisanceFit {
            q0,
            q1,
            g1,
            g_truncation: 0.01,
            g_known: false,
            g_truncated_count: 0,
        }
    }

    #[test]
    fn spec_validation() {
        let k = PolyKernel::build(0, 1.0).unwrap();
        assert!(SmoothingSpec::new(k.clone(), 0.0, vec![0.0]).is_err());
        assert!(SmoothingSpec::new(k.clone(), 0.1, vec![]).is_err());
        assert!(SmoothingSpec::new(k.clone(), 0.1, vec![0.2, 0.1]).is_err());
        assert!(SmoothingSpec::new(k, 0.1, vec![0.1, 0.2]).is_ok());
    }

    #[test]
    fn plugin_edge_cases() {
        let spec = biweight_spec(0.1, vec![0.0, 0.5]);
        let psi = smoothed_cdf_plugin(&[0.0, 0.0, 0.0], &spec);
        assert_eq!(psi[0], 0.5);
        assert_eq!(psi[1], 1.0);
    }

    #[test]
    fn clever_covariate_peak() {
        let spec = biweight_spec(0.25, vec![0.1]);
        let h = clever_covariate(&[0.1, 0.1, 0.9], &[0.5; 3], &[1.0, 0.0, 1.0], &spec);
        assert!((h[[0, 0]] + 7.5).abs() < 1e-12);
        assert!((h[[1, 0]] - 7.5).abs() < 1e-12);
        assert_eq!(h[[2, 0]], 0.0);
    }

    #[test]
    fn eic_mean_zero_when_y_matches() {
        let spec = biweight_spec(0.2, vec![-0.1, 0.0, 0.2]);
        let q0 = vec![0.3, 0.4, 0.5, 0.2];
        let q1 = vec![0.35, 0.3, 0.6, 0.4];
        let a = vec![1.0, 0.0, 1.0, 0.0];
        let y: Vec<f64> = (0..4).map(|i| if a[i] == 1.0 { q1[i] } else { q0[i] }).collect();
        let b: Vec<f64> = q1.iter().zip(&q0).map(|(x, z)| x - z).collect();
        let psi = smoothed_cdf_plugin(&b, &spec);
        let d = eic(&b, &q0, &q1, &[0.5; 4], &a, &y, &psi, &spec);
        for col in d.columns() {
            assert!(col.sum().abs() < 1e-14);
        }

        let f = nf(q0, q1, vec![0.5; 4]);
        let res = tmle_update(&a, &y, &f, &spec, &TmleOptions::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.converged);
        assert!(res.epsilon.is_empty());
        assert_eq!(res.psi, res.initial_psi);
    }

    fn draw(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<f64> = w
            .iter()
            .map(|&x| if rng.random::<f64>() < expit(0.2 + 0.2 * x) { 1.0 } else { 0.0 })
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let p = expit(a[i] + 2.5 * a[i] * w[i] + w[i]);
                if rng.random::<f64>() < p { 1.0 } else { 0.0 }
            })
            .collect();
        Dataset::new(column(&w), a, y).unwrap()
    }

    fn grid() -> Vec<f64> {
        (0..8).map(|j| -0.145 + 0.06 * j as f64).collect()
    }

    #[test]
    fn tmle_solves_score_equations() {
        let data = draw(1000, 21);
        let spec = biweight_spec(0.25, grid());
        for submodel in [Submodel::Clfm, Submodel::Lfm] {
            let opts = TmleOptions {
                submodel,
                ..TmleOptions::default()
            };
            let res = tmle(&data, &spec, &GlmLearner, DEFAULT_G_TRUNCATION, None, 1, &opts).unwrap();
            assert!(res.converged, "{submodel:?}: {:?} vs {:?}", res.mean_eic, res.tol);
            assert!(res.max_score_excess() <= 0.0);
            assert!(res.loss_monotone(1e-12));
            assert!(res.psi.windows(2).all(|w| w[1] >= w[0]));
            assert!(res.psi.iter().all(|p| (0.0..=1.0).contains(p)));
        }
    }

    #[test]
    fn cv_tmle_is_deterministic() {
        let data = draw(400, 22);
        let spec = biweight_spec(0.25, grid());
        let run = || {
            cv_tmle(&data, &spec, &GlmLearner, 5, DEFAULT_G_TRUNCATION, None, 9, &TmleOptions::default()).unwrap()
        };
        let (r1, r2) = (run(), run());
        assert_eq!(r1.psi, r2.psi);
        assert_eq!(r1.se, r2.se);
        assert!(r1.converged);
        assert!(cv_tmle(&data, &spec, &GlmLearner, 1, 0.01, None, 9, &TmleOptions::default()).is_err());
    }

    #[test]
    fn known_g_equal_to_fit_gives_same_result() {
        let data = draw(500, 23);
        let spec = biweight_spec(0.25, grid());
        let fitted = crate::learners::fit_nuisance(&data, &GlmLearner, 0.01, None, 0).unwrap();
        let r1 = tmle_update(data.a(), data.y(), &fitted, &spec, &TmleOptions::default()).unwrap();
        let known = crate::learners::fit_nuisance(&data, &GlmLearner, 0.01, Some(&fitted.g1), 0).unwrap();
        let r2 = tmle_update(data.a(), data.y(), &known, &spec, &TmleOptions::default()).unwrap();
        assert_eq!(r1.psi, r2.psi);
        assert_eq!(r1.se, r2.se);
    }
}
