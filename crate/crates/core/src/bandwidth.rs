//! Fixed-rate bandwidth and the data-driven selector: scan a grid of
//! bandwidths, find a monotone run of estimates, monotonize the variance and
//! take the most extreme interval bound across the run.

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{arg_err, Result};
use crate::estimator::{cross_fit, tmle_update, SmoothingSpec, TmleOptions, TmleResult};
use crate::learners::{Learner, NuisanceFit};
use crate::par;
use crate::util::normal_quantile;

/// `n^(-1 / (2J + 1))`.
pub fn optimal_fixed_bandwidth(n: usize, order: usize) -> Result<f64> {
    if n < 2 {
        return arg_err(format!("bandwidth needs n >= 2, got {n}"));
    }
    if order < 2 || !order.is_multiple_of(2) {
        return arg_err(format!("kernel order must be even and at least 2, got {order}"));
    }
    Ok((n as f64).powf(-1.0 / (2 * order + 1) as f64))
}

/// `h_i = i h_max / steps`, `i = 1..=steps`.
pub fn bandwidth_grid(h_max: f64, steps: usize) -> Vec<f64> {
    (1..=steps).map(|i| i as f64 * h_max / steps as f64).collect()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SelectorConfig {
    pub steps: usize,
    pub min_run: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig { steps: 20, min_run: 5 }
    }
}

/// Direction of the estimates along a run, read as the bandwidth shrinks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunDirection {
    /// Estimates fall (or stay level) as `h` decreases.
    Decreasing,
    /// Estimates rise as `h` decreases.
    Increasing,
}

/// A monotone run as inclusive grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Run {
    pub start: usize,
    pub end: usize,
    pub direction: RunDirection,
}

impl Run {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: usize) -> bool {
        (self.start..=self.end).contains(&i)
    }
}

/// The selected interval for one `t`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Selection {
    pub index: usize,
    pub h: f64,
    pub psi: f64,
    pub lo: f64,
    pub hi: f64,
    /// No monotone run was found and `h_max` was used.
    pub fallback: bool,
}

/// Estimates and variances over the bandwidth grid. Matrices are indexed
/// `[grid index][t index]`.
#[derive(Debug, Clone, Serialize)]
pub struct BandwidthPath {
    pub grid: Vec<f64>,
    pub t: Vec<f64>,
    pub psi: Vec<Vec<f64>>,
    pub var: Vec<Vec<f64>>,
    pub var_monotone: Vec<Vec<f64>>,
    pub runs: Vec<Option<Run>>,
    pub converged: Vec<bool>,
}

/// Longest stretch starting at `s` where `ok(prev, next)` holds.
fn extend(est: &[f64], s: usize, ok: impl Fn(f64, f64) -> bool) -> usize {
    let mut e = s;
    while e + 1 < est.len() && ok(est[e], est[e + 1]) {
        e += 1;
    }
    e
}

/// Smallest-bandwidth run of at least `min_run` consecutive grid points on
/// which `est` (ordered by increasing `h`) is monotone, extended as far as
/// monotonicity holds. Level stretches count as monotone in either
/// direction; a run that is level or rising in `h` is classed as
/// decreasing as `h` shrinks.
pub fn find_run(est: &[f64], min_run: usize) -> Option<Run> {
    let min_run = min_run.max(1);
    for s in 0..est.len() {
        let up = extend(est, s, |a, b| b >= a);
        let down = extend(est, s, |a, b| b <= a);
        let (up_len, down_len) = (up - s + 1, down - s + 1);
        if up_len < min_run && down_len < min_run {
            continue;
        }
        return Some(if up_len >= down_len {
            Run {
                start: s,
                end: up,
                direction: RunDirection::Decreasing,
            }
        } else {
            Run {
                start: s,
                end: down,
                direction: RunDirection::Increasing,
            }
        });
    }
    None
}

/// Running maximum from the largest bandwidth downward, so the result is
/// nondecreasing as `h` decreases.
pub fn monotonize_variance(var: &[f64]) -> Vec<f64> {
    let mut out = var.to_vec();
    for i in (0..out.len().saturating_sub(1)).rev() {
        out[i] = out[i].max(out[i + 1]);
    }
    out
}

impl BandwidthPath {
    /// Assembles a path from per-bandwidth results (grid ascending).
    pub fn from_results(grid: Vec<f64>, results: &[TmleResult], cfg: &SelectorConfig) -> Result<Self> {
        if grid.is_empty() || grid.len() != results.len() {
            return arg_err("grid and results must be nonempty and of equal length");
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return arg_err("bandwidth grid must be strictly increasing");
        }
        let t = results[0].t.clone();
        let d = t.len();
        let psi: Vec<Vec<f64>> = results.iter().map(|r| r.psi.clone()).collect();
        let var: Vec<Vec<f64>> = results.iter().map(|r| r.se.iter().map(|s| s * s).collect()).collect();
        let mut var_monotone = var.clone();
        let mut runs = Vec::with_capacity(d);
        for j in 0..d {
            let col: Vec<f64> = var.iter().map(|v| v[j]).collect();
            for (i, v) in monotonize_variance(&col).into_iter().enumerate() {
                var_monotone[i][j] = v;
            }
            let est: Vec<f64> = psi.iter().map(|p| p[j]).collect();
            runs.push(find_run(&est, cfg.min_run));
        }
        Ok(BandwidthPath {
            grid,
            t,
            psi,
            var,
            var_monotone,
            runs,
            converged: results.iter().map(|r| r.converged).collect(),
        })
    }

    pub fn h_max(&self) -> f64 {
        *self.grid.last().expect("nonempty grid")
    }

    /// Per-`t` selected interval at confidence `level`.
    pub fn select_ci(&self, level: f64) -> Result<Vec<Selection>> {
        if !(level > 0.0 && level < 1.0) {
            return arg_err(format!("confidence level must lie in (0, 1), got {level}"));
        }
        let z = normal_quantile(0.5 * (1.0 + level));
        let last = self.grid.len() - 1;
        let interval = |i: usize, j: usize| {
            let p = self.psi[i][j];
            let s = self.var_monotone[i][j].sqrt();
            (p - z * s, p + z * s)
        };
        Ok((0..self.t.len())
            .map(|j| match self.runs[j] {
                None => {
                    let (lo, hi) = interval(last, j);
                    Selection {
                        index: last,
                        h: self.grid[last],
                        psi: self.psi[last][j],
                        lo,
                        hi,
                        fallback: true,
                    }
                }
                Some(run) => {
                    let mut best = run.start;
                    for i in run.start..=run.end {
                        let (lo, hi) = interval(i, j);
                        let (blo, bhi) = interval(best, j);
                        let better = match run.direction {
                            RunDirection::Decreasing => hi < bhi,
                            RunDirection::Increasing => lo > blo,
                        };
                        if better {
                            best = i;
                        }
                    }
                    let (lo, hi) = interval(best, j);
                    Selection {
                        index: best,
                        h: self.grid[best],
                        psi: self.psi[best][j],
                        lo,
                        hi,
                        fallback: false,
                    }
                }
            })
            .collect())
    }

    /// Long-format CSV: `h, t, psi, var, var_monotone, in_run`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["h", "t", "psi", "var", "var_monotone", "in_run"])?;
        for j in 0..self.t.len() {
            for i in 0..self.grid.len() {
                let in_run = self.runs[j].is_some_and(|r| r.contains(i));
                w.write_record([
                    self.grid[i].to_string(),
                    self.t[j].to_string(),
                    self.psi[i][j].to_string(),
                    self.var[i][j].to_string(),
                    self.var_monotone[i][j].to_string(),
                    (in_run as u8).to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| crate::error::Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Targets every bandwidth of `grid` on shared nuisance predictions.
pub fn scan_results(
    a: &[f64],
    y: &[f64],
    nf: &NuisanceFit,
    spec: &SmoothingSpec,
    grid: &[f64],
    opts: &TmleOptions,
) -> Result<Vec<TmleResult>> {
    let specs: Vec<SmoothingSpec> = grid.iter().map(|&h| spec.with_delta(h)).collect::<Result<_>>()?;
    par::map_slice(&specs, |s| tmle_update(a, y, nf, s, opts))
        .into_iter()
        .collect()
}

pub fn scan_path_from_fit(
    a: &[f64],
    y: &[f64],
    nf: &NuisanceFit,
    spec: &SmoothingSpec,
    grid: &[f64],
    opts: &TmleOptions,
    cfg: &SelectorConfig,
) -> Result<BandwidthPath> {
    let results = scan_results(a, y, nf, spec, grid, opts)?;
    BandwidthPath::from_results(grid.to_vec(), &results, cfg)
}

/// Cross-fits the nuisances once and scans the default grid up to
/// `n^(-1/(2J+1))`.
#[allow(clippy::too_many_arguments)]
pub fn scan_path(
    data: &Dataset,
    spec: &SmoothingSpec,
    learner: &dyn Learner,
    folds: usize,
    g_truncation: f64,
    known_g: Option<&[f64]>,
    seed: u64,
    opts: &TmleOptions,
    cfg: &SelectorConfig,
) -> Result<BandwidthPath> {
    let h_max = optimal_fixed_bandwidth(data.n(), spec.kernel.order())?;
    let grid = bandwidth_grid(h_max, cfg.steps);
    let cf = cross_fit(data, learner, folds, g_truncation, known_g, seed)?;
    scan_path_from_fit(data.a(), data.y(), &cf.nuisance, spec, &grid, opts, cfg)
}
