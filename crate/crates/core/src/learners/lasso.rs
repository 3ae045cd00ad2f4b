//! L1-penalized logistic regression by coordinate descent.
//!
//! Minimizes `(1/n) sum_i loss(y_i, b0 + x_i' beta) + lambda * |beta|_1` with
//! an unpenalized intercept. Each outer step forms the IRLS quadratic
//! approximation; the inner loop runs cyclic coordinate descent on it. The
//! design is abstract so structured bases can supply fast sweeps.

use ndarray::ArrayView2;
use serde::Serialize;

use crate::error::{arg_err, Result};
use crate::learners::fold_assignment;
use crate::par;
use crate::util::{clamp_prob, expit, logistic_loss, logit};

/// Convergence tolerance on the largest `h_j * delta_j^2` per sweep, where
/// `h_j` is the weighted column sum of squares.
pub const CD_TOL: f64 = 1e-7;
const MAX_SWEEPS: usize = 20_000;
const MAX_IRLS: usize = 200;
const MIN_WEIGHT: f64 = 1e-5;
/// Grid points past the best validation loss before the CV path stops.
pub const CV_PATIENCE: usize = 10;

/// A design matrix that coordinate descent can run on.
pub trait CdDesign: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `out_i = sum_j x_ij beta_j` (no intercept).
    fn predictor(&self, beta: &[f64], out: &mut [f64]);

    /// `X^T v`.
    fn crossprod(&self, v: &[f64]) -> Vec<f64>;

    /// One pass of coordinate descent over every column for the weighted
    /// least-squares problem `1/2 sum_i w_i (r_i)^2 + lambda |beta|_1`,
    /// where `resid` holds the working residuals and `weights` already carry
    /// the `1/n` factor. Updates `beta` and `resid` in place and returns the
    /// largest `h_j * |delta_j|` over columns.
    fn sweep(&self, beta: &mut [f64], weights: &[f64], resid: &mut [f64], lambda: f64) -> f64;

    /// The design restricted to the given rows.
    fn select_rows(&self, rows: &[usize]) -> Self
    where
        Self: Sized;
}

#[inline]
pub(crate) fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Column-stored dense design.
#[derive(Debug, Clone)]
pub struct DenseDesign {
    n: usize,
    cols: Vec<Vec<f64>>,
}

impl DenseDesign {
    pub fn new(x: ArrayView2<f64>) -> Result<Self> {
        if x.iter().any(|v| !v.is_finite()) {
            return arg_err("design contains non-finite values");
        }
        Ok(DenseDesign {
            n: x.nrows(),
            cols: x.columns().into_iter().map(|c| c.to_vec()).collect(),
        })
    }
}

impl CdDesign for DenseDesign {
    fn nrows(&self) -> usize {
        self.n
    }

    fn ncols(&self) -> usize {
        self.cols.len()
    }

    fn predictor(&self, beta: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (col, b) in self.cols.iter().zip(beta) {
            if *b != 0.0 {
                for (o, x) in out.iter_mut().zip(col) {
                    *o += x * b;
                }
            }
        }
    }

    fn crossprod(&self, v: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|c| c.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn sweep(&self, beta: &mut [f64], weights: &[f64], resid: &mut [f64], lambda: f64) -> f64 {
        let mut max_change = 0.0f64;
        for (j, col) in self.cols.iter().enumerate() {
            let mut g = 0.0;
            let mut h = 0.0;
            for i in 0..self.n {
                let wx = weights[i] * col[i];
                g += wx * resid[i];
                h += wx * col[i];
            }
            if h <= 0.0 {
                continue;
            }
            let new = soft_threshold(g + h * beta[j], lambda) / h;
            let delta = new - beta[j];
            if delta != 0.0 {
                for i in 0..self.n {
                    resid[i] -= delta * col[i];
                }
                beta[j] = new;
                max_change = max_change.max(h * delta * delta);
            }
        }
        max_change
    }

    fn select_rows(&self, rows: &[usize]) -> Self {
        DenseDesign {
            n: rows.len(),
            cols: self.cols.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
        }
    }
}

/// Coefficients of one penalized fit.
#[derive(Debug, Clone, Serialize)]
pub struct LassoCoefficients {
    pub intercept: f64,
    pub beta: Vec<f64>,
}

impl LassoCoefficients {
    pub fn zeros(p: usize) -> Self {
        LassoCoefficients {
            intercept: 0.0,
            beta: vec![0.0; p],
        }
    }

    pub fn eta<D: CdDesign>(&self, design: &D) -> Vec<f64> {
        let mut eta = vec![0.0; design.nrows()];
        design.predictor(&self.beta, &mut eta);
        eta.iter_mut().for_each(|e| *e += self.intercept);
        eta
    }

    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }
}

fn penalized_objective(y: &[f64], eta: &[f64], coef: &LassoCoefficients, lambda: f64) -> f64 {
    let n = y.len() as f64;
    y.iter().zip(eta).map(|(&yi, &e)| logistic_loss(yi, e)).sum::<f64>() / n + lambda * coef.l1_norm()
}

/// Solves the penalized problem at one `lambda`, starting from `coef`.
pub fn solve_at<D: CdDesign>(design: &D, y: &[f64], lambda: f64, coef: &mut LassoCoefficients) {
    solve_at_tol(design, y, lambda, coef, CD_TOL)
}

/// [`solve_at`] with an explicit coordinate-descent tolerance.
pub fn solve_at_tol<D: CdDesign>(design: &D, y: &[f64], lambda: f64, coef: &mut LassoCoefficients, tol: f64) {
    let n = design.nrows();
    let nf = n as f64;
    let mut eta = coef.eta(design);
    let mut obj = penalized_objective(y, &eta, coef, lambda);
    let mut weights = vec![0.0; n];
    let mut resid = vec![0.0; n];

    for _ in 0..MAX_IRLS {
        for i in 0..n {
            let mu = expit(eta[i]);
            let w = (mu * (1.0 - mu)).max(MIN_WEIGHT);
            weights[i] = w / nf;
            resid[i] = (y[i] - mu) / w;
        }
        let wsum: f64 = weights.iter().sum();
        let previous = coef.clone();

        let mut sweeps = 0;
        loop {
            sweeps += 1;
            let d0 = weights.iter().zip(&resid).map(|(w, r)| w * r).sum::<f64>() / wsum;
            coef.intercept += d0;
            resid.iter_mut().for_each(|r| *r -= d0);
            let change = design.sweep(&mut coef.beta, &weights, &mut resid, lambda).max(wsum * d0 * d0);
            if change < tol || sweeps >= MAX_SWEEPS {
                break;
            }
        }

        // backtrack toward the previous iterate if the true objective rose
        let mut new_eta = coef.eta(design);
        let mut new_obj = penalized_objective(y, &new_eta, coef, lambda);
        let mut halvings = 0;
        while !(new_obj <= obj + 1e-13) && halvings < 30 {
            coef.intercept = 0.5 * (coef.intercept + previous.intercept);
            for (b, p) in coef.beta.iter_mut().zip(&previous.beta) {
                *b = 0.5 * (*b + p);
            }
            new_eta = coef.eta(design);
            new_obj = penalized_objective(y, &new_eta, coef, lambda);
            halvings += 1;
        }
        if !(new_obj <= obj + 1e-13) {
            *coef = previous;
            break;
        }
        eta = new_eta;
        obj = new_obj;
        if sweeps == 1 && halvings == 0 {
            break;
        }
    }
}

/// Smallest `lambda` at which every penalized coefficient is zero.
pub fn lambda_max<D: CdDesign>(design: &D, y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let centered: Vec<f64> = y.iter().map(|v| v - ybar).collect();
    design
        .crossprod(&centered)
        .iter()
        .fold(0.0f64, |m, s| m.max(s.abs() / n))
}

/// Log-spaced descending grid from `lambda_max` to `lambda_max * ratio`.
pub fn default_lambda_grid(lambda_max: f64, len: usize, ratio: f64) -> Vec<f64> {
    if len == 1 {
        return vec![lambda_max];
    }
    let (hi, lo) = (lambda_max.ln(), (lambda_max * ratio).ln());
    (0..len)
        .map(|k| (hi + (lo - hi) * k as f64 / (len - 1) as f64).exp())
        .collect()
}

fn null_coefficients(p: usize, y: &[f64]) -> LassoCoefficients {
    let ybar = clamp_prob(y.iter().sum::<f64>() / y.len() as f64);
    LassoCoefficients {
        intercept: logit(ybar),
        beta: vec![0.0; p],
    }
}

/// Fits along a descending grid with warm starts, returning one set of
/// coefficients per grid point.
pub fn lasso_path<D: CdDesign>(design: &D, y: &[f64], grid: &[f64]) -> Vec<LassoCoefficients> {
    let mut coef = null_coefficients(design.ncols(), y);
    grid.iter()
        .map(|&lambda| {
            solve_at(design, y, lambda, &mut coef);
            coef.clone()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LassoFit {
    pub coefficients: LassoCoefficients,
    pub lambda: f64,
    pub lambda_grid: Vec<f64>,
    /// Mean validation loss per visited grid point; the path stops
    /// `CV_PATIENCE` points after its minimum, so it may be shorter than
    /// `lambda_grid`.
    pub cv_loss_path: Vec<f64>,
    /// True when the response was constant and an intercept-only fit was returned.
    pub intercept_only: bool,
}

#[derive(Debug, Clone)]
pub struct LassoOptions {
    /// Explicit grid; defaults to a log-spaced grid from `lambda_max`.
    pub lambda_grid: Option<Vec<f64>>,
    pub n_lambda: usize,
    pub lambda_ratio: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            lambda_grid: None,
            n_lambda: 50,
            lambda_ratio: 1e-4,
            folds: 5,
            seed: 0,
        }
    }
}

/// Cross-validated L1 logistic regression. The penalty minimizing the mean
/// validation loss is refit on all rows.
pub fn fit_lasso_logistic<D: CdDesign>(design: &D, y: &[f64], opts: &LassoOptions) -> Result<LassoFit> {
    let n = design.nrows();
    if y.len() != n {
        return arg_err("design and response lengths differ");
    }
    if y.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return arg_err("lasso responses must lie in [0, 1]");
    }
    if opts.folds < 2 || opts.folds > n {
        return arg_err(format!("lasso needs 2 <= folds <= n, got {}", opts.folds));
    }
    let p = design.ncols();
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Ok(LassoFit {
            coefficients: null_coefficients(p, y),
            lambda: f64::INFINITY,
            lambda_grid: Vec::new(),
            cv_loss_path: Vec::new(),
            intercept_only: true,
        });
    }

    let grid = match &opts.lambda_grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
                return arg_err("lambda grid must be nonempty and positive");
            }
            if g.windows(2).any(|w| w[1] > w[0]) {
                return arg_err("lambda grid must be descending");
            }
            g.clone()
        }
        None => {
            let lmax = lambda_max(design, y).max(1e-12);
            default_lambda_grid(lmax, opts.n_lambda.max(1), opts.lambda_ratio)
        }
    };

    let folds = fold_assignment(n, opts.folds, opts.seed);
    struct FoldState<D> {
        train: D,
        valid: D,
        ytrain: Vec<f64>,
        yvalid: Vec<f64>,
        constant: bool,
    }
    let states: Vec<FoldState<D>> = (0..opts.folds)
        .map(|v| {
            let train: Vec<usize> = (0..n).filter(|&i| folds[i] != v).collect();
            let valid: Vec<usize> = (0..n).filter(|&i| folds[i] == v).collect();
            let ytrain: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            FoldState {
                train: design.select_rows(&train),
                valid: design.select_rows(&valid),
                // a constant training response cannot inform the penalty
                constant: ytrain.iter().all(|&v| v == ytrain[0]),
                yvalid: valid.iter().map(|&i| y[i]).collect(),
                ytrain,
            }
        })
        .collect();
    let mut coefs: Vec<LassoCoefficients> = states.iter().map(|s| null_coefficients(p, &s.ytrain)).collect();

    // folds advance in lockstep so the path can stop once the pooled
    // validation loss is past its minimum
    let mut cv_loss_path: Vec<f64> = Vec::with_capacity(grid.len());
    let mut best = 0;
    for &lambda in &grid {
        let stepped: Vec<(LassoCoefficients, f64)> = par::map_indexed(opts.folds, |v| {
            let s = &states[v];
            let mut c = coefs[v].clone();
            if !s.constant {
                solve_at(&s.train, &s.ytrain, lambda, &mut c);
            }
            let eta = c.eta(&s.valid);
            let loss = s.yvalid.iter().zip(&eta).map(|(&yi, &e)| logistic_loss(yi, e)).sum::<f64>();
            (c, loss)
        });
        let total = stepped.iter().map(|(_, l)| l).sum::<f64>() / n as f64;
        coefs = stepped.into_iter().map(|(c, _)| c).collect();
        cv_loss_path.push(total);
        let k = cv_loss_path.len() - 1;
        if total < cv_loss_path[best] {
            best = k;
        }
        if k - best >= CV_PATIENCE {
            break;
        }
    }

    let path = lasso_path(design, y, &grid[..=best]);
    Ok(LassoFit {
        coefficients: path.into_iter().last().expect("nonempty path"),
        lambda: grid[best],
        lambda_grid: grid,
        cv_loss_path,
        intercept_only: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::glm::fit_glm_logistic;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy(n: usize, seed: u64) -> (Array2<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let y = (0..n)
            .map(|i| {
                let eta = 0.3 + 1.0 * x[[i, 0]] - 0.5 * x[[i, 1]];
                if rng.random::<f64>() < expit(eta) { 1.0 } else { 0.0 }
            })
            .collect();
        (x, y)
    }

    #[test]
    fn huge_lambda_gives_null_model() {
        let (x, y) = toy(200, 1);
        let d = DenseDesign::new(x.view()).unwrap();
        let mut c = LassoCoefficients::zeros(3);
        solve_at(&d, &y, 1e6, &mut c);
        assert!(c.beta.iter().all(|b| *b == 0.0));
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        assert!((c.intercept - logit(ybar)).abs() < 1e-6);
    }

    #[test]
    fn zero_penalty_matches_glm() {
        let (x, y) = toy(300, 2);
        let d = DenseDesign::new(x.view()).unwrap();
        let mut c = LassoCoefficients::zeros(3);
        solve_at(&d, &y, 0.0, &mut c);
        let with_int = Array2::from_shape_fn((300, 4), |(i, j)| if j == 0 { 1.0 } else { x[[i, j - 1]] });
        let glm = fit_glm_logistic(with_int.view(), &y, None).unwrap();
        assert!((c.intercept - glm.coefficients[0]).abs() < 1e-4);
        for j in 0..3 {
            assert!((c.beta[j] - glm.coefficients[j + 1]).abs() < 1e-4);
        }
    }

    #[test]
    fn kkt_conditions_hold() {
        let (x, y) = toy(250, 3);
        let d = DenseDesign::new(x.view()).unwrap();
        let lmax = lambda_max(&d, &y);
        for frac in [0.5, 0.1, 0.01] {
            let lambda = lmax * frac;
            let mut c = LassoCoefficients::zeros(3);
            solve_at(&d, &y, lambda, &mut c);
            let eta = c.eta(&d);
            let r: Vec<f64> = y.iter().zip(&eta).map(|(yi, e)| yi - expit(*e)).collect();
            let score: Vec<f64> = d.crossprod(&r).iter().map(|s| s / 250.0).collect();
            for (s, b) in score.iter().zip(&c.beta) {
                if *b == 0.0 {
                    assert!(s.abs() <= lambda + 1e-5);
                } else {
                    assert!((s - lambda * b.signum()).abs() <= 1e-5, "{s} {lambda} {b}");
                }
            }
        }
    }

    #[test]
    fn cv_selects_minimum() {
        let (x, y) = toy(300, 4);
        let d = DenseDesign::new(x.view()).unwrap();
        let fit = fit_lasso_logistic(&d, &y, &LassoOptions { n_lambda: 20, ..Default::default() }).unwrap();
        let min = fit.cv_loss_path.iter().cloned().fold(f64::INFINITY, f64::min);
        let k = fit.lambda_grid.iter().position(|l| *l == fit.lambda).unwrap();
        assert_eq!(fit.cv_loss_path[k], min);
    }

    #[test]
    fn constant_response_intercept_only() {
        let (x, _) = toy(50, 5);
        let d = DenseDesign::new(x.view()).unwrap();
        let fit = fit_lasso_logistic(&d, &vec![1.0; 50], &LassoOptions::default()).unwrap();
        assert!(fit.intercept_only);
        assert!(fit.coefficients.beta.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn bad_inputs() {
        let x = Array2::from_elem((10, 2), f64::NAN);
        assert!(DenseDesign::new(x.view()).is_err());
        let (x, y) = toy(40, 6);
        let d = DenseDesign::new(x.view()).unwrap();
        let asc = LassoOptions { lambda_grid: Some(vec![0.01, 0.1]), ..Default::default() };
        assert!(fit_lasso_logistic(&d, &y, &asc).is_err());
        let one_fold = LassoOptions { folds: 1, ..Default::default() };
        assert!(fit_lasso_logistic(&d, &y, &one_fold).is_err());
    }
}
