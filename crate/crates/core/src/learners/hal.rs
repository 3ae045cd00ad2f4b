//! Highly adaptive lasso for one confounder: L1-penalized logistic regression
//! over zero-order spline bases `I(w >= knot_j)`, optionally with a treatment
//! column and treatment-by-basis interactions.
//!
//! The indicator columns are nested (column `j` covers every row whose knot
//! count exceeds `j`), so one coordinate-descent pass over a block costs
//! `O(n + p)` instead of `O(n p)`: rows are bucketed by knot count, the block
//! is swept from the largest knot down while maintaining the partial
//! residual sum over the current suffix, and the accumulated coefficient
//! moves are pushed back to the residuals with a single prefix sum.

use ndarray::ArrayView2;
use serde::Serialize;

use crate::error::{arg_err, Error, Result};
use crate::learners::lasso::{fit_lasso_logistic, soft_threshold, CdDesign, LassoFit, LassoOptions};
use crate::learners::{Learner, OutcomeModel, PropensityModel};
use crate::util::{clamp_prob, expit};

/// Default cap on the number of knots.
pub const MAX_KNOTS: usize = 200;

/// Knots: the sorted unique values, or `max_knots` equally spaced order
/// statistics of them when there are more.
pub fn select_knots(w: &[f64], max_knots: usize) -> Vec<f64> {
    let mut u: Vec<f64> = w.to_vec();
    u.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    u.dedup();
    if u.len() <= max_knots || max_knots < 2 {
        return u;
    }
    let m = u.len();
    let mut knots: Vec<f64> = (0..max_knots)
        .map(|j| u[((j as f64) * (m - 1) as f64 / (max_knots - 1) as f64).round() as usize])
        .collect();
    knots.dedup();
    knots
}

/// Zero-order spline design for a single covariate.
#[derive(Debug, Clone)]
pub struct IndicatorDesign {
    knots: Vec<f64>,
    /// Number of knots `<= w_i` for each row.
    counts: Vec<usize>,
    /// Treatment indicator per row when interactions are present.
    treat: Option<Vec<f64>>,
}

impl IndicatorDesign {
    pub fn new(w: &[f64], treat: Option<&[f64]>, knots: Vec<f64>) -> Result<Self> {
        if w.iter().any(|v| !v.is_finite()) || knots.iter().any(|v| !v.is_finite()) {
            return arg_err("HAL design inputs must be finite");
        }
        if treat.is_some_and(|a| a.len() != w.len()) {
            return arg_err("treatment length differs from covariate length");
        }
        Ok(IndicatorDesign {
            counts: w.iter().map(|&x| knot_count(&knots, x)).collect(),
            knots,
            treat: treat.map(<[f64]>::to_vec),
        })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn n_knots(&self) -> usize {
        self.knots.len()
    }

    pub fn has_treatment(&self) -> bool {
        self.treat.is_some()
    }

    /// Dense rows, for inspection and testing.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let p = self.knots.len();
        (0..self.counts.len())
            .map(|i| {
                let c = self.counts[i];
                let mut row: Vec<f64> = (0..p).map(|j| if j < c { 1.0 } else { 0.0 }).collect();
                if let Some(a) = &self.treat {
                    row.push(a[i]);
                    row.extend((0..p).map(|j| if j < c { a[i] } else { 0.0 }));
                }
                row
            })
            .collect()
    }

    /// One pass over a nested indicator block. `mask` restricts the block to
    /// rows with mask 1 (treatment interactions); `None` means every row.
    fn sweep_block(
        &self,
        beta: &mut [f64],
        weights: &[f64],
        resid: &mut [f64],
        lambda: f64,
        mask: Option<&[f64]>,
    ) -> f64 {
        let p = self.knots.len();
        let mut bucket_wr = vec![0.0; p + 1];
        let mut bucket_w = vec![0.0; p + 1];
        for i in 0..self.counts.len() {
            let m = mask.map_or(1.0, |m| m[i]);
            if m != 0.0 {
                let c = self.counts[i];
                bucket_wr[c] += weights[i] * resid[i];
                bucket_w[c] += weights[i];
            }
        }
        let mut deltas = vec![0.0; p];
        let mut suffix_wr = 0.0;
        let mut suffix_w = 0.0;
        let mut max_change = 0.0f64;
        for j in (0..p).rev() {
            // column j covers rows with count >= j + 1
            suffix_wr += bucket_wr[j + 1];
            suffix_w += bucket_w[j + 1];
            if suffix_w <= 0.0 {
                continue;
            }
            let new = soft_threshold(suffix_wr + suffix_w * beta[j], lambda) / suffix_w;
            let delta = new - beta[j];
            if delta != 0.0 {
                beta[j] = new;
                deltas[j] = delta;
                suffix_wr -= delta * suffix_w;
                max_change = max_change.max(suffix_w * delta * delta);
            }
        }
        if max_change > 0.0 {
            // shift[c] = sum_{j < c} delta_j
            let mut shift = vec![0.0; p + 1];
            for c in 1..=p {
                shift[c] = shift[c - 1] + deltas[c - 1];
            }
            for i in 0..self.counts.len() {
                let m = mask.map_or(1.0, |m| m[i]);
                if m != 0.0 {
                    resid[i] -= shift[self.counts[i]];
                }
            }
        }
        max_change
    }
}

fn knot_count(knots: &[f64], x: f64) -> usize {
    knots.partition_point(|k| *k <= x)
}

impl CdDesign for IndicatorDesign {
    fn nrows(&self) -> usize {
        self.counts.len()
    }

    fn ncols(&self) -> usize {
        match self.treat {
            Some(_) => 2 * self.knots.len() + 1,
            None => self.knots.len(),
        }
    }

    fn predictor(&self, beta: &[f64], out: &mut [f64]) {
        let p = self.knots.len();
        let mut main = vec![0.0; p + 1];
        for c in 1..=p {
            main[c] = main[c - 1] + beta[c - 1];
        }
        match &self.treat {
            None => {
                for (o, &c) in out.iter_mut().zip(&self.counts) {
                    *o = main[c];
                }
            }
            Some(a) => {
                let mut inter = vec![0.0; p + 1];
                for c in 1..=p {
                    inter[c] = inter[c - 1] + beta[p + c];
                }
                let ba = beta[p];
                for i in 0..self.counts.len() {
                    let c = self.counts[i];
                    out[i] = main[c] + a[i] * (ba + inter[c]);
                }
            }
        }
    }

    fn crossprod(&self, v: &[f64]) -> Vec<f64> {
        let p = self.knots.len();
        let suffix = |mask: Option<&[f64]>| {
            let mut bucket = vec![0.0; p + 1];
            for i in 0..self.counts.len() {
                bucket[self.counts[i]] += v[i] * mask.map_or(1.0, |m| m[i]);
            }
            let mut out = vec![0.0; p];
            let mut acc = 0.0;
            for j in (0..p).rev() {
                acc += bucket[j + 1];
                out[j] = acc;
            }
            out
        };
        let mut out = suffix(None);
        if let Some(a) = &self.treat {
            out.push(a.iter().zip(v).map(|(x, y)| x * y).sum());
            out.extend(suffix(Some(a)));
        }
        out
    }

    fn sweep(&self, beta: &mut [f64], weights: &[f64], resid: &mut [f64], lambda: f64) -> f64 {
        let p = self.knots.len();
        let mut change = self.sweep_block(&mut beta[..p], weights, resid, lambda, None);
        if let Some(a) = &self.treat {
            let (mut g, mut h) = (0.0, 0.0);
            for i in 0..a.len() {
                let wa = weights[i] * a[i];
                g += wa * resid[i];
                h += wa;
            }
            if h > 0.0 {
                let new = soft_threshold(g + h * beta[p], lambda) / h;
                let delta = new - beta[p];
                if delta != 0.0 {
                    beta[p] = new;
                    for i in 0..a.len() {
                        resid[i] -= delta * a[i];
                    }
                    change = change.max(h * delta * delta);
                }
            }
            let inter = self.sweep_block(&mut beta[p + 1..], weights, resid, lambda, Some(a));
            change = change.max(inter);
        }
        change
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        IndicatorDesign {
            knots: self.knots.clone(),
            counts: rows.iter().map(|&i| self.counts[i]).collect(),
            treat: self.treat.as_ref().map(|a| rows.iter().map(|&i| a[i]).collect()),
        }
    }
}

fn single_column(w: ArrayView2<f64>) -> Result<Vec<f64>> {
    if w.ncols() != 1 {
        return Err(Error::Argument(format!(
            "HAL supports exactly one confounder column, got {}; plug in a different \
             implementation of the Learner trait for multivariate W",
            w.ncols()
        )));
    }
    Ok(w.column(0).to_vec())
}

/// Builds the HAL design for a single-column `w`, with treatment
/// interactions when `a` is given.
pub fn make_hal_design(w: ArrayView2<f64>, a: Option<&[f64]>, max_knots: usize) -> Result<IndicatorDesign> {
    let col = single_column(w)?;
    let knots = select_knots(&col, max_knots);
    IndicatorDesign::new(&col, a, knots)
}

#[derive(Debug, Clone, Serialize)]
pub struct HalConfig {
    pub max_knots: usize,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    /// Folds for choosing the penalty.
    pub cv_folds: usize,
}

impl Default for HalConfig {
    fn default() -> Self {
        HalConfig {
            max_knots: MAX_KNOTS,
            n_lambda: 50,
            lambda_ratio: 1e-4,
            cv_folds: 5,
        }
    }
}

/// A fitted HAL model.
#[derive(Debug, Clone, Serialize)]
pub struct HalFit {
    pub knots: Vec<f64>,
    pub with_treatment: bool,
    pub lasso: LassoFit,
}

impl HalFit {
    fn eta(&self, w: &[f64], a: Option<&[f64]>) -> Vec<f64> {
        let p = self.knots.len();
        let beta = &self.lasso.coefficients.beta;
        let b0 = self.lasso.coefficients.intercept;
        let mut main = vec![0.0; p + 1];
        for c in 1..=p {
            main[c] = main[c - 1] + beta[c - 1];
        }
        let inter: Option<Vec<f64>> = self.with_treatment.then(|| {
            let mut v = vec![0.0; p + 1];
            for c in 1..=p {
                v[c] = v[c - 1] + beta[p + c];
            }
            v
        });
        w.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = knot_count(&self.knots, x);
                let mut e = b0 + main[c];
                if let (Some(inter), Some(a)) = (&inter, a) {
                    e += a[i] * (beta[p] + inter[c]);
                }
                e
            })
            .collect()
    }

    pub fn predict(&self, w: &[f64], a: Option<&[f64]>) -> Vec<f64> {
        self.eta(w, a).into_iter().map(|e| clamp_prob(expit(e))).collect()
    }
}

pub fn fit_hal(w: ArrayView2<f64>, a: Option<&[f64]>, y: &[f64], cfg: &HalConfig, seed: u64) -> Result<HalFit> {
    let design = make_hal_design(w, a, cfg.max_knots)?;
    let opts = LassoOptions {
        lambda_grid: None,
        n_lambda: cfg.n_lambda,
        lambda_ratio: cfg.lambda_ratio,
        folds: cfg.cv_folds.min(y.len()),
        seed,
    };
    let lasso = fit_lasso_logistic(&design, y, &opts)?;
    Ok(HalFit {
        knots: design.knots().to_vec(),
        with_treatment: a.is_some(),
        lasso,
    })
}

#[derive(Debug, Clone, Default)]
pub struct HalLearner {
    pub config: HalConfig,
}

struct HalOutcome(HalFit);
struct HalPropensity(HalFit);

impl OutcomeModel for HalOutcome {
    fn predict(&self, w: ArrayView2<f64>, a: &[f64]) -> Vec<f64> {
        self.0.predict(&w.column(0).to_vec(), Some(a))
    }
}

impl PropensityModel for HalPropensity {
    fn predict(&self, w: ArrayView2<f64>) -> Vec<f64> {
        self.0.predict(&w.column(0).to_vec(), None)
    }
}

impl Learner for HalLearner {
    fn name(&self) -> &str {
        "hal"
    }

    fn fit_outcome(&self, w: ArrayView2<f64>, a: &[f64], y: &[f64], seed: u64) -> Result<Box<dyn OutcomeModel>> {
        Ok(Box::new(HalOutcome(fit_hal(w, Some(a), y, &self.config, seed)?)))
    }

    fn fit_propensity(&self, w: ArrayView2<f64>, a: &[f64], seed: u64) -> Result<Box<dyn PropensityModel>> {
        Ok(Box::new(HalPropensity(fit_hal(w, None, a, &self.config, seed)?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::lasso::{solve_at_tol, DenseDesign, LassoCoefficients};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn basis_rows_for_three_points() {
        let w = Array2::from_shape_vec((3, 1), vec![1.0, 2.0, 3.0]).unwrap();
        let d = make_hal_design(w.view(), None, MAX_KNOTS).unwrap();
        assert_eq!(d.n_knots(), 3);
        assert_eq!(
            d.to_dense(),
            vec![vec![1.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 1.0]]
        );
    }

    #[test]
    fn ties_collapse_knots() {
        let w = Array2::from_shape_vec((3, 1), vec![1.0, 1.0, 2.0]).unwrap();
        assert_eq!(make_hal_design(w.view(), None, MAX_KNOTS).unwrap().n_knots(), 2);
    }

    #[test]
    fn knot_cap() {
        let w: Vec<f64> = (0..500).map(|i| i as f64 * 0.37).collect();
        let knots = select_knots(&w, MAX_KNOTS);
        assert_eq!(knots.len(), 200);
        assert_eq!(knots[0], 0.0);
        assert_eq!(*knots.last().unwrap(), 499.0 * 0.37);
    }

    #[test]
    fn multivariate_w_is_rejected() {
        let w = Array2::zeros((5, 2));
        let err = make_hal_design(w.view(), None, MAX_KNOTS).unwrap_err();
        assert!(err.to_string().contains("Learner"), "{err}");
    }

    fn random_problem(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let a: Vec<f64> = (0..n).map(|_| if rng.random::<f64>() < 0.5 { 1.0 } else { 0.0 }).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                let p = expit(0.3 * a[i] + 5.0 * a[i] * w[i].sin().powi(2) - a[i] * w[i].cos());
                if rng.random::<f64>() < p { 1.0 } else { 0.0 }
            })
            .collect();
        (w, a, y)
    }

    #[test]
    fn structured_matches_dense() {
        let (w, a, y) = random_problem(120, 9);
        let knots = select_knots(&w, 40);
        let fast = IndicatorDesign::new(&w, Some(&a), knots).unwrap();
        let dense_rows = fast.to_dense();
        let p = dense_rows[0].len();
        let x = Array2::from_shape_fn((120, p), |(i, j)| dense_rows[i][j]);
        let dense = DenseDesign::new(x.view()).unwrap();

        let v: Vec<f64> = (0..120).map(|i| (i as f64 * 0.3).sin()).collect();
        for (s, t) in fast.crossprod(&v).iter().zip(dense.crossprod(&v)) {
            assert!((s - t).abs() < 1e-12);
        }

        // identical column order means identical coordinate descent iterates
        // up to the order within a block; compare converged solutions
        for lambda in [0.05, 0.01, 0.002] {
            let mut c1 = LassoCoefficients::zeros(p);
            let mut c2 = LassoCoefficients::zeros(p);
            solve_at_tol(&fast, &y, lambda, &mut c1, 1e-16);
            solve_at_tol(&dense, &y, lambda, &mut c2, 1e-16);
            let e1 = c1.eta(&fast);
            let e2 = c2.eta(&dense);
            let worst = e1.iter().zip(&e2).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-4, "lambda {lambda}: max eta gap {worst}");
        }
    }
}
