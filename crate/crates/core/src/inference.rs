//! Wald intervals from the influence curve: pointwise, and simultaneous over
//! the `t` grid via the Monte Carlo quantile of `max_j |Z_j|`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{arg_err, Result};
use crate::estimator::TmleResult;
use crate::linalg::cholesky_psd;
use crate::par;
use crate::util::{normal_quantile, sorted_quantile};

pub const DEFAULT_MC_DRAWS: usize = 100_000;
const MIN_MC_DRAWS: usize = 10_000;
const CHUNK: usize = 10_000;
const PSD_TOL: f64 = 1e-10;
const JITTER: f64 = 1e-8;
/// Share of truncated propensities above which a positivity warning is raised.
pub const POSITIVITY_WARN_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Serialize)]
pub struct CiReport {
    pub level: f64,
    pub z_pointwise: f64,
    pub z_simultaneous: f64,
    /// EIC correlation matrix, row-major `d x d`.
    pub corr: Vec<Vec<f64>>,
    /// Unclipped pointwise bounds.
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
    /// Unclipped simultaneous bounds.
    pub sim_ci_lo: Vec<f64>,
    pub sim_ci_hi: Vec<f64>,
    /// Columns with zero EIC variance; their intervals collapse to a point.
    pub degenerate: Vec<bool>,
    /// The correlation factorization failed and a Bonferroni bound was used.
    pub bonferroni_fallback: bool,
    pub mc_draws: usize,
}

impl CiReport {
    /// Bounds clipped to `[0, 1]` for display.
    pub fn clipped(lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (
            lo.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
            hi.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        )
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return arg_err(format!("confidence level must lie in (0, 1), got {level}"));
    }
    Ok(())
}

/// `psi_j -/+ z se_j` with `z` the normal quantile at `(1 + level) / 2`.
pub fn pointwise_ci(psi: &[f64], se: &[f64], level: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_level(level)?;
    let z = normal_quantile(0.5 * (1.0 + level));
    let lo = psi.iter().zip(se).map(|(p, s)| p - z * s).collect();
    let hi = psi.iter().zip(se).map(|(p, s)| p + z * s).collect();
    Ok((z, lo, hi))
}

/// Correlation matrix of the EIC columns. Zero-variance columns get a unit
/// diagonal and zero off-diagonal entries.
pub fn eic_correlation(res: &TmleResult) -> Vec<Vec<f64>> {
    let n = res.n() as f64;
    let d = res.d();
    let cols: Vec<Vec<f64>> = res
        .eic
        .columns()
        .into_iter()
        .map(|c| {
            let m = c.sum() / n;
            c.iter().map(|v| v - m).collect()
        })
        .collect();
    let var: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>()).collect();
    let mut corr = vec![vec![0.0; d]; d];
    for j in 0..d {
        corr[j][j] = 1.0;
        for k in 0..j {
            let r = if var[j] > 0.0 && var[k] > 0.0 {
                let c: f64 = cols[j].iter().zip(&cols[k]).map(|(a, b)| a * b).sum();
                (c / (var[j] * var[k]).sqrt()).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            corr[j][k] = r;
            corr[k][j] = r;
        }
    }
    corr
}

/// `level` quantile of `max_j |Z_j|`, `Z ~ N(0, corr)`, from `draws` seeded
/// Monte Carlo samples. `None` when `corr` cannot be factored even after
/// diagonal jitter.
pub fn max_abs_quantile(corr: &[Vec<f64>], level: f64, draws: usize, seed: u64) -> Option<f64> {
    let d = corr.len();
    let flat: Vec<f64> = corr.iter().flatten().copied().collect();
    let chol = cholesky_psd(&flat, d, PSD_TOL).or_else(|| {
        let mut j = flat.clone();
        for i in 0..d {
            j[i * d + i] += JITTER;
        }
        cholesky_psd(&j, d, PSD_TOL)
    })?;

    let chunks = draws.div_ceil(CHUNK);
    let parts: Vec<Vec<f64>> = par::map_indexed(chunks, |c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let len = CHUNK.min(draws - c * CHUNK);
        let mut z = vec![0.0; d];
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut rng);
            }
            let mut mx = 0.0f64;
            for i in 0..d {
                let s: f64 = (0..=i).map(|k| chol[i * d + k] * z[k]).sum();
                mx = mx.max(s.abs());
            }
            out.push(mx);
        }
        out
    });
    let mut all: Vec<f64> = parts.into_iter().flatten().collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Some(sorted_quantile(&all, level))
}

/// Pointwise and simultaneous intervals for a fitted result.
pub fn simultaneous_ci(res: &TmleResult, level: f64, mc_draws: usize, seed: u64) -> Result<CiReport> {
    check_level(level)?;
    if mc_draws < MIN_MC_DRAWS {
        return arg_err(format!("at least {MIN_MC_DRAWS} Monte Carlo draws are required, got {mc_draws}"));
    }
    let d = res.d();
    let (z_pw, ci_lo, ci_hi) = pointwise_ci(&res.psi, &res.se, level)?;
    let corr = eic_correlation(res);
    let (z_mc, bonferroni_fallback) = match max_abs_quantile(&corr, level, mc_draws, seed) {
        Some(z) => (z, false),
        None => (normal_quantile(1.0 - (1.0 - level) / (2.0 * d as f64)), true),
    };
    let z_sim = z_mc.max(z_pw);
    let sim_ci_lo = res.psi.iter().zip(&res.se).map(|(p, s)| p - z_sim * s).collect();
    let sim_ci_hi = res.psi.iter().zip(&res.se).map(|(p, s)| p + z_sim * s).collect();
    Ok(CiReport {
        level,
        z_pointwise: z_pw,
        z_simultaneous: z_sim,
        corr,
        ci_lo,
        ci_hi,
        sim_ci_lo,
        sim_ci_hi,
        degenerate: res.se.iter().map(|&s| s == 0.0).collect(),
        bonferroni_fallback,
        mc_draws,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct PropensityDiagnostics {
    pub truncation: f64,
    pub truncated_fraction: f64,
    pub g_min: f64,
    pub g_max: f64,
}

/// Computable proxies for the conditions behind the Wald intervals.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub abs_mean_eic: Vec<f64>,
    pub tol: Vec<f64>,
    pub se: Vec<f64>,
    pub scores_solved: bool,
    /// Absent when the propensity was supplied rather than estimated.
    pub propensity: Option<PropensityDiagnostics>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

pub fn diagnostics(res: &TmleResult) -> Diagnostics {
    let abs_mean: Vec<f64> = res.mean_eic.iter().map(|m| m.abs()).collect();
    let scores_solved = abs_mean.iter().zip(&res.tol).all(|(m, t)| m <= t);
    let mut warnings = Vec::new();
    if res.targeted && !res.converged {
        warnings.push(format!(
            "targeting stopped after {} iterations without solving all score equations",
            res.iterations
        ));
    }
    let propensity = (!res.g_known).then(|| {
        let frac = res.g_truncated_count as f64 / res.n() as f64;
        if frac > POSITIVITY_WARN_FRACTION {
            warnings.push(format!(
                "positivity: {:.1}% of propensity scores at the truncation bound {}",
                100.0 * frac,
                res.g_truncation
            ));
        }
        PropensityDiagnostics {
            truncation: res.g_truncation,
            truncated_fraction: frac,
            g_min: res.g_min,
            g_max: res.g_max,
        }
    });
    if res.se.contains(&0.0) {
        warnings.push("some EIC columns have zero variance; their intervals are degenerate".into());
    }
    Diagnostics {
        converged: res.converged,
        iterations: res.iterations,
        abs_mean_eic: abs_mean,
        tol: res.tol.clone(),
        se: res.se.clone(),
        scores_solved,
        propensity,
        warnings,
        notes: vec![
            "The nuisance estimators are assumed to lie in a Donsker class; this is not checked \
             (cross-validated targeting removes the requirement)."
                .into(),
            "Consistency of the EIC estimate in L2 is assumed; the reported standard errors rely on it.".into(),
        ],
    }
}
