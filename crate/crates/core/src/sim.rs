//! Monte Carlo campaigns: repeated draws from a simulation law, several
//! estimators per draw, and coverage / bias / MSE tables against the truth.
//! Also the bias- and variance-order checks across bandwidths.

use serde::{Deserialize, Serialize};

use crate::bandwidth::{bandwidth_grid, optimal_fixed_bandwidth, scan_results, BandwidthPath, SelectorConfig};
use crate::dgp::{draw, true_targets, DgpKind, DgpSpec, Targets, TruthSample, DEFAULT_TRUTH_DRAWS, TRUTH_SEED};
use crate::error::{arg_err, Error, Result};
use crate::estimator::{cross_fit, plugin_estimate, tmle_update, SmoothingSpec, TmleOptions, TmleResult};
use crate::inference::{simultaneous_ci, DEFAULT_MC_DRAWS};
use crate::kernels::PolyKernel;
use crate::learners::{fit_nuisance, LearnerKind, NuisanceFit, DEFAULT_G_TRUNCATION};
use crate::par;
use crate::util::{mean, normal_quantile, ols_slope};

/// The results-table blip grid, `-0.145 + 0.06 j`.
pub fn table_t_grid() -> Vec<f64> {
    (0..8).map(|j| -0.145 + 0.06 * j as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cvtmle,
    Tmle,
    Plugin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthMode {
    Fixed,
    Selector,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub name: String,
    pub method: Method,
    pub learner: LearnerKind,
    #[serde(default)]
    pub known_g: bool,
    #[serde(default = "default_bandwidth_mode")]
    pub bandwidth: BandwidthMode,
}

fn default_bandwidth_mode() -> BandwidthMode {
    BandwidthMode::Fixed
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KernelConfig {
    #[serde(rename = "K")]
    pub k: i64,
    #[serde(rename = "R", default = "one")]
    pub r: f64,
}

fn one() -> f64 {
    1.0
}

/// `"auto"` or a positive number.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DeltaConfig {
    Value(f64),
    Keyword(String),
}

impl DeltaConfig {
    pub fn resolve(&self, n: usize, order: usize) -> Result<f64> {
        match self {
            DeltaConfig::Value(v) if *v > 0.0 && v.is_finite() => Ok(*v),
            DeltaConfig::Value(v) => arg_err(format!("delta must be positive, got {v}")),
            DeltaConfig::Keyword(k) if k == "auto" => optimal_fixed_bandwidth(n, order),
            DeltaConfig::Keyword(k) => arg_err(format!("delta must be a number or \"auto\", got \"{k}\"")),
        }
    }
}

fn default_folds() -> usize {
    10
}
fn default_level() -> f64 {
    0.95
}
fn default_mc() -> usize {
    DEFAULT_MC_DRAWS
}
fn default_trunc() -> f64 {
    DEFAULT_G_TRUNCATION
}
fn default_truth() -> usize {
    DEFAULT_TRUTH_DRAWS
}
fn default_delta() -> DeltaConfig {
    DeltaConfig::Keyword("auto".into())
}

/// Declarative campaign description, read from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub dgp: DgpKind,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub kernel: KernelConfig,
    #[serde(default = "default_delta")]
    pub delta: DeltaConfig,
    #[serde(default = "table_t_grid")]
    pub t: Vec<f64>,
    pub estimators: Vec<EstimatorSpec>,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_mc")]
    pub mc_draws: usize,
    #[serde(default = "default_trunc")]
    pub g_truncation: f64,
    #[serde(default = "default_truth")]
    pub truth_draws: usize,
}

impl CampaignConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: CampaignConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 2 {
            return arg_err(format!("a campaign needs at least 2 replicates, got {}", self.reps));
        }
        if self.n < 10 {
            return arg_err(format!("simulated samples need n >= 10, got {}", self.n));
        }
        if self.estimators.is_empty() {
            return arg_err("no estimators configured");
        }
        let mut names: Vec<&str> = self.estimators.iter().map(|e| e.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return arg_err("estimator names must be unique");
        }
        if self
            .estimators
            .iter()
            .any(|e| e.method == Method::Plugin && e.bandwidth == BandwidthMode::Selector)
        {
            return arg_err("the bandwidth selector needs a targeted estimator (cvtmle or tmle)");
        }
        if self.truth_draws < 10_000 {
            return arg_err("truth_draws must be at least 10000");
        }
        Ok(())
    }
}

/// One estimator on one replicate.
#[derive(Debug, Clone, Serialize)]
pub struct RepOutcome {
    pub psi: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub sim_lo: Option<Vec<f64>>,
    pub sim_hi: Option<Vec<f64>>,
    /// Standard error behind the pointwise interval.
    pub se: Vec<f64>,
    /// Smoothed truth at the bandwidth actually used for each `t`.
    pub target: Vec<f64>,
    pub chosen_h: Vec<f64>,
    pub converged: bool,
    pub loss_monotone: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RowStats {
    pub estimator: String,
    pub t: f64,
    pub reps_ok: usize,
    pub truth_cdf: f64,
    pub mean_target: f64,
    pub mean_psi: f64,
    pub bias: f64,
    /// Population variance of the estimation error across replicates.
    pub variance: f64,
    pub mse: f64,
    /// Root mean squared reported standard error, comparable to
    /// `sqrt(variance)`.
    pub rms_se: f64,
    pub coverage_smoothed: f64,
    pub coverage_true: f64,
    pub coverage_sim: Option<f64>,
    pub mean_h: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorSummary {
    pub spec: EstimatorSpec,
    pub reps_ok: usize,
    pub failures: usize,
    pub failure_messages: Vec<String>,
    pub nonconverged: usize,
    pub loss_increases: usize,
    pub mean_iterations: f64,
    /// Fraction of replicates whose simultaneous band covered every smoothed
    /// target.
    pub simultaneous_coverage: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimReport {
    pub config: CampaignConfig,
    pub delta: f64,
    pub kernel_order: usize,
    pub truth: Targets,
    pub estimators: Vec<EstimatorSummary>,
    pub rows: Vec<RowStats>,
}

impl SimReport {
    pub fn row(&self, estimator: &str, j: usize) -> Option<&RowStats> {
        self.rows
            .iter()
            .filter(|r| r.estimator == estimator)
            .nth(j)
    }

    pub fn summary(&self, estimator: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.spec.name == estimator)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "estimator",
            "t",
            "reps_ok",
            "truth_cdf",
            "mean_target",
            "mean_psi",
            "bias",
            "variance",
            "mse",
            "rms_se",
            "coverage_smoothed",
            "coverage_true",
            "coverage_sim",
            "mean_h",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.estimator.clone(),
                r.t.to_string(),
                r.reps_ok.to_string(),
                r.truth_cdf.to_string(),
                r.mean_target.to_string(),
                r.mean_psi.to_string(),
                r.bias.to_string(),
                r.variance.to_string(),
                r.mse.to_string(),
                r.rms_se.to_string(),
                r.coverage_smoothed.to_string(),
                r.coverage_true.to_string(),
                r.coverage_sim.map_or(String::new(), |c| c.to_string()),
                r.mean_h.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
struct NuisanceKey {
    learner: LearnerKind,
    cross_fit: bool,
    known_g: bool,
}

struct Context<'a> {
    cfg: &'a CampaignConfig,
    kernel: &'a PolyKernel,
    delta: f64,
    truth: &'a TruthSample,
    targets: &'a Targets,
    opts: TmleOptions,
}

fn nuisance_for(
    ctx: &Context,
    key: NuisanceKey,
    data: &crate::data::Dataset,
    g_true: &[f64],
    seed: u64,
) -> Result<NuisanceFit> {
    let learner = key.learner.build();
    let known = key.known_g.then_some(g_true);
    if key.cross_fit {
        Ok(cross_fit(data, learner.as_ref(), ctx.cfg.folds, ctx.cfg.g_truncation, known, seed)?.nuisance)
    } else {
        fit_nuisance(data, learner.as_ref(), ctx.cfg.g_truncation, known, seed)
    }
}

fn fixed_outcome(ctx: &Context, res: &TmleResult, seed: u64) -> Result<RepOutcome> {
    let ci = simultaneous_ci(res, ctx.cfg.level, ctx.cfg.mc_draws, seed)?;
    Ok(RepOutcome {
        psi: res.psi.clone(),
        lo: ci.ci_lo,
        hi: ci.ci_hi,
        sim_lo: Some(ci.sim_ci_lo),
        sim_hi: Some(ci.sim_ci_hi),
        se: res.se.clone(),
        target: ctx.targets.smoothed.clone(),
        chosen_h: vec![ctx.delta; res.d()],
        converged: !res.targeted || res.converged,
        loss_monotone: res.loss_monotone(1e-12),
        iterations: res.iterations,
    })
}

fn run_replicate(ctx: &Context, rep: usize) -> Vec<Result<RepOutcome>> {
    let cfg = ctx.cfg;
    let rep_seed = par::derive_seed(cfg.seed, rep as u64);
    let drawn = match draw(&DgpSpec {
        kind: cfg.dgp,
        n: cfg.n,
        seed: rep_seed,
    }) {
        Ok(d) => d,
        Err(e) => return cfg.estimators.iter().map(|_| Err(Error::Data(e.to_string()))).collect(),
    };
    let data = &drawn.data;
    let spec = SmoothingSpec::new(ctx.kernel.clone(), ctx.delta, cfg.t.clone()).expect("validated");
    let fit_seed = par::derive_seed(rep_seed, 1);
    let mc_seed = par::derive_seed(rep_seed, 2);

    let mut cache: Vec<(NuisanceKey, std::result::Result<NuisanceFit, String>)> = Vec::new();
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for est in &cfg.estimators {
        let key = NuisanceKey {
            learner: est.learner,
            cross_fit: est.method == Method::Cvtmle,
            known_g: est.known_g,
        };
        if !cache.iter().any(|(k, _)| *k == key) {
            let fit = nuisance_for(ctx, key, data, &drawn.g_true, fit_seed).map_err(|e| e.to_string());
            cache.push((key, fit));
        }
        let nf = match &cache.iter().find(|(k, _)| *k == key).expect("cached").1 {
            Ok(nf) => nf,
            Err(msg) => {
                out.push(Err(Error::Numerical(msg.clone())));
                continue;
            }
        };
        let result = match (est.method, est.bandwidth) {
            (Method::Plugin, _) => {
                plugin_estimate(data.a(), data.y(), nf, &spec).and_then(|r| fixed_outcome(ctx, &r, mc_seed))
            }
            (_, BandwidthMode::Fixed) => {
                tmle_update(data.a(), data.y(), nf, &spec, &ctx.opts).and_then(|r| fixed_outcome(ctx, &r, mc_seed))
            }
            (_, BandwidthMode::Selector) => selector_outcome(ctx, data, nf, &spec),
        };
        out.push(result);
    }
    out
}

fn selector_outcome(
    ctx: &Context,
    data: &crate::data::Dataset,
    nf: &NuisanceFit,
    spec: &SmoothingSpec,
) -> Result<RepOutcome> {
    let sel_cfg = SelectorConfig::default();
    let grid = bandwidth_grid(ctx.delta, sel_cfg.steps);
    let results = scan_results(data.a(), data.y(), nf, spec, &grid, &ctx.opts)?;
    let path = BandwidthPath::from_results(grid, &results, &sel_cfg)?;
    let sel = path.select_ci(ctx.cfg.level)?;
    let z = normal_quantile(0.5 * (1.0 + ctx.cfg.level));
    Ok(RepOutcome {
        psi: sel.iter().map(|s| s.psi).collect(),
        lo: sel.iter().map(|s| s.lo).collect(),
        hi: sel.iter().map(|s| s.hi).collect(),
        sim_lo: None,
        sim_hi: None,
        se: sel.iter().map(|s| (s.hi - s.lo) / (2.0 * z)).collect(),
        target: sel
            .iter()
            .zip(&spec.t)
            .map(|(s, &t)| ctx.truth.smoothed(ctx.kernel, s.h, t))
            .collect(),
        chosen_h: sel.iter().map(|s| s.h).collect(),
        converged: results.iter().all(|r| r.converged),
        loss_monotone: results.iter().all(|r| r.loss_monotone(1e-12)),
        iterations: results.iter().map(|r| r.iterations).sum::<usize>() / results.len(),
    })
}

fn covered(lo: f64, hi: f64, x: f64) -> bool {
    lo <= x && x <= hi
}

/// Runs every configured estimator on `reps` seeded draws.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<SimReport> {
    cfg.validate()?;
    let kernel = PolyKernel::build(cfg.kernel.k, cfg.kernel.r)?;
    let delta = cfg.delta.resolve(cfg.n, kernel.order())?;
    SmoothingSpec::new(kernel.clone(), delta, cfg.t.clone())?;
    let truth = TruthSample::new(cfg.dgp, cfg.truth_draws, TRUTH_SEED);
    let targets = true_targets(&truth, &kernel, delta, &cfg.t);
    let ctx = Context {
        cfg,
        kernel: &kernel,
        delta,
        truth: &truth,
        targets: &targets,
        opts: TmleOptions::default(),
    };

    let per_rep: Vec<Vec<Result<RepOutcome>>> = par::map_indexed(cfg.reps, |r| run_replicate(&ctx, r));

    let d = cfg.t.len();
    let mut summaries = Vec::new();
    let mut rows = Vec::new();
    for (e, est) in cfg.estimators.iter().enumerate() {
        let mut ok: Vec<&RepOutcome> = Vec::new();
        let mut messages: Vec<String> = Vec::new();
        let mut failures = 0;
        for rep in &per_rep {
            match &rep[e] {
                Ok(o) => ok.push(o),
                Err(err) => {
                    failures += 1;
                    let m = err.to_string();
                    if messages.len() < 5 && !messages.contains(&m) {
                        messages.push(m);
                    }
                }
            }
        }
        let k = ok.len();
        let kf = k as f64;
        let has_sim = ok.first().is_some_and(|o| o.sim_lo.is_some());
        summaries.push(EstimatorSummary {
            spec: est.clone(),
            reps_ok: k,
            failures,
            failure_messages: messages,
            nonconverged: ok.iter().filter(|o| !o.converged).count(),
            loss_increases: ok.iter().filter(|o| !o.loss_monotone).count(),
            mean_iterations: if k > 0 {
                ok.iter().map(|o| o.iterations as f64).sum::<f64>() / kf
            } else {
                f64::NAN
            },
            simultaneous_coverage: (has_sim && k > 0).then(|| {
                ok.iter()
                    .filter(|o| {
                        let (lo, hi) = (o.sim_lo.as_ref().expect("sim"), o.sim_hi.as_ref().expect("sim"));
                        (0..d).all(|j| covered(lo[j], hi[j], o.target[j]))
                    })
                    .count() as f64
                    / kf
            }),
        });
        for j in 0..d {
            let err: Vec<f64> = ok.iter().map(|o| o.psi[j] - o.target[j]).collect();
            let bias = if k > 0 { mean(&err) } else { f64::NAN };
            let variance = if k > 0 {
                err.iter().map(|x| (x - bias) * (x - bias)).sum::<f64>() / kf
            } else {
                f64::NAN
            };
            let frac = |f: &dyn Fn(&RepOutcome) -> bool| ok.iter().filter(|o| f(o)).count() as f64 / kf;
            let truth_cdf = targets.cdf[j];
            rows.push(RowStats {
                estimator: est.name.clone(),
                t: cfg.t[j],
                reps_ok: k,
                truth_cdf,
                mean_target: ok.iter().map(|o| o.target[j]).sum::<f64>() / kf,
                mean_psi: ok.iter().map(|o| o.psi[j]).sum::<f64>() / kf,
                bias,
                variance,
                mse: if k > 0 { err.iter().map(|x| x * x).sum::<f64>() / kf } else { f64::NAN },
                rms_se: (ok.iter().map(|o| o.se[j] * o.se[j]).sum::<f64>() / kf).sqrt(),
                coverage_smoothed: frac(&|o| covered(o.lo[j], o.hi[j], o.target[j])),
                coverage_true: frac(&|o| covered(o.lo[j], o.hi[j], truth_cdf)),
                coverage_sim: has_sim.then(|| {
                    frac(&|o| {
                        covered(
                            o.sim_lo.as_ref().expect("sim")[j],
                            o.sim_hi.as_ref().expect("sim")[j],
                            o.target[j],
                        )
                    })
                }),
                mean_h: ok.iter().map(|o| o.chosen_h[j]).sum::<f64>() / kf,
            });
        }
    }

    Ok(SimReport {
        config: cfg.clone(),
        delta,
        kernel_order: kernel.order(),
        truth: targets,
        estimators: summaries,
        rows,
    })
}

/// Settings for the bias- and variance-order checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrderCheckConfig {
    pub dgp: DgpKind,
    pub kernel: KernelConfig,
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub t: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub learner: LearnerKind,
    pub method: Method,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_trunc")]
    pub g_truncation: f64,
    #[serde(default = "default_truth")]
    pub truth_draws: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderReport {
    pub config: OrderCheckConfig,
    pub kernel_order: usize,
    pub truth_cdf: f64,
    pub smoothed_truth: Vec<f64>,
    /// `|Psi_delta(P0) - F(t)|` per bandwidth.
    pub truth_bias: Vec<f64>,
    pub bias_slope: f64,
    /// Variance of the estimate across replicates per bandwidth.
    pub variance: Vec<f64>,
    pub variance_slope: f64,
    /// Mean over replicates of the influence-curve variance estimate `se^2`.
    pub eic_variance: Vec<f64>,
    pub eic_variance_slope: f64,
    pub reps_ok: usize,
    pub failures: usize,
    /// Targeting runs (replicate x bandwidth) that stopped at `max_iter`.
    pub nonconverged: usize,
    /// Targeting runs whose loss trace rose at some step.
    pub loss_increases: usize,
}

impl OrderCheckConfig {
    fn validate(&self) -> Result<()> {
        let mut d = self.deltas.clone();
        d.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        d.dedup();
        if d.len() < 4 || d.iter().any(|v| !(*v > 0.0)) {
            return arg_err("order checks need at least 4 distinct positive bandwidths");
        }
        if d[d.len() - 1] / d[0] < 8.0 {
            return arg_err("order-check bandwidths must span a factor of at least 8");
        }
        if self.reps < 2 {
            return arg_err("order checks need at least 2 replicates");
        }
        if self.method == Method::Plugin {
            return arg_err("order checks run a targeted estimator (cvtmle or tmle)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct OrderRun {
    psi: f64,
    se2: f64,
    converged: bool,
    loss_monotone: bool,
}

/// Log-log slopes of truth-side bias and estimator variance in `delta`.
pub fn order_checks(cfg: &OrderCheckConfig) -> Result<OrderReport> {
    cfg.validate()?;
    let kernel = PolyKernel::build(cfg.kernel.k, cfg.kernel.r)?;
    let truth = TruthSample::new(cfg.dgp, cfg.truth_draws, TRUTH_SEED);
    let truth_cdf = truth.cdf(cfg.t);
    let smoothed: Vec<f64> = cfg.deltas.iter().map(|&h| truth.smoothed(&kernel, h, cfg.t)).collect();
    let truth_bias: Vec<f64> = smoothed.iter().map(|s| (s - truth_cdf).abs()).collect();
    let log_d: Vec<f64> = cfg.deltas.iter().map(|h| h.ln()).collect();
    let bias_slope = ols_slope(&log_d, &truth_bias.iter().map(|b| b.ln()).collect::<Vec<_>>());

    let opts = TmleOptions::default();
    let per_rep: Vec<Result<Vec<OrderRun>>> = par::map_indexed(cfg.reps, |r| {
        let rep_seed = par::derive_seed(cfg.seed, r as u64);
        let drawn = draw(&DgpSpec {
            kind: cfg.dgp,
            n: cfg.n,
            seed: rep_seed,
        })?;
        let data = &drawn.data;
        let learner = cfg.learner.build();
        let fit_seed = par::derive_seed(rep_seed, 1);
        let nf = match cfg.method {
            Method::Cvtmle => cross_fit(data, learner.as_ref(), cfg.folds, cfg.g_truncation, None, fit_seed)?.nuisance,
            _ => fit_nuisance(data, learner.as_ref(), cfg.g_truncation, None, fit_seed)?,
        };
        cfg.deltas
            .iter()
            .map(|&h| {
                let spec = SmoothingSpec::new(kernel.clone(), h, vec![cfg.t])?;
                let res = tmle_update(data.a(), data.y(), &nf, &spec, &opts)?;
                Ok(OrderRun {
                    psi: res.psi[0],
                    se2: res.se[0] * res.se[0],
                    converged: res.converged,
                    loss_monotone: res.loss_monotone(1e-12),
                })
            })
            .collect()
    });
    let ok: Vec<Vec<OrderRun>> = per_rep.iter().filter_map(|r| r.as_ref().ok().cloned()).collect();
    let failures = per_rep.len() - ok.len();
    if ok.len() < 2 {
        return Err(Error::Numerical(format!("only {} of {} replicates succeeded", ok.len(), cfg.reps)));
    }
    let variance: Vec<f64> = (0..cfg.deltas.len())
        .map(|i| {
            let col: Vec<f64> = ok.iter().map(|v| v[i].psi).collect();
            let m = mean(&col);
            col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (col.len() - 1) as f64
        })
        .collect();
    let variance_slope = ols_slope(&log_d, &variance.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let eic_variance: Vec<f64> = (0..cfg.deltas.len())
        .map(|i| ok.iter().map(|v| v[i].se2).sum::<f64>() / ok.len() as f64)
        .collect();
    let eic_variance_slope = ols_slope(&log_d, &eic_variance.iter().map(|v| v.ln()).collect::<Vec<_>>());

    Ok(OrderReport {
        config: cfg.clone(),
        kernel_order: kernel.order(),
        truth_cdf,
        smoothed_truth: smoothed,
        truth_bias,
        bias_slope,
        variance,
        variance_slope,
        eic_variance,
        eic_variance_slope,
        reps_ok: ok.len(),
        failures,
        nonconverged: ok.iter().flatten().filter(|r| !r.converged).count(),
        loss_increases: ok.iter().flatten().filter(|r| !r.loss_monotone).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke_config() -> CampaignConfig {
        CampaignConfig::from_json(
            r#"{
                "dgp": "well_specified", "n": 200, "reps": 2, "seed": 3,
                "kernel": {"K": 0, "R": 1.0}, "delta": 0.25,
                "t": [-0.05, 0.1, 0.25],
                "folds": 3, "mc_draws": 10000, "truth_draws": 100000,
                "estimators": [
                    {"name": "cv_glm", "method": "cvtmle", "learner": "glm"},
                    {"name": "tmle_glm_known", "method": "tmle", "learner": "glm", "known_g": true},
                    {"name": "plugin", "method": "plugin", "learner": "glm"},
                    {"name": "cv_glm_sel", "method": "cvtmle", "learner": "glm", "bandwidth": "selector"}
                ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn smoke_campaign_identity() {
        let rep = run_campaign(&smoke_config()).unwrap();
        assert_eq!(rep.rows.len(), 12);
        for r in &rep.rows {
            assert_eq!(r.reps_ok, 2);
            assert!((r.mse - (r.bias * r.bias + r.variance)).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&r.coverage_smoothed));
        }
        assert!(rep.summary("cv_glm_sel").unwrap().simultaneous_coverage.is_none());
        assert!(rep.summary("cv_glm").unwrap().simultaneous_coverage.is_some());
        let csv = rep.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.starts_with("estimator,t,reps_ok,truth_cdf,mean_target,mean_psi,bias,variance,mse,rms_se,"));
    }

    #[test]
    fn config_validation() {
        let mut c = smoke_config();
        c.reps = 1;
        assert!(c.validate().is_err());
        let mut c = smoke_config();
        c.estimators[2].bandwidth = BandwidthMode::Selector;
        assert!(c.validate().is_err());
        assert!(DeltaConfig::Keyword("wide".into()).resolve(100, 2).is_err());
        assert!((DeltaConfig::Keyword("auto".into()).resolve(1000, 2).unwrap() - 0.251189).abs() < 1e-6);
    }
}
