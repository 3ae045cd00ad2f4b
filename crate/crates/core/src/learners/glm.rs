//! Logistic regression by Newton-Raphson (IRLS) for responses in `[0, 1]`.

use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::error::{arg_err, Result};
use crate::linalg;
use crate::util::{expit, logistic_loss};

const COEF_TOL: f64 = 1e-10;
const MAX_ITER: usize = 100;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// A ridge jitter was needed because the information matrix was singular.
    pub ridge_applied: bool,
    pub iterations: usize,
}

impl GlmFit {
    pub fn linear_predictor(&self, x: ArrayView2<f64>, offset: Option<&[f64]>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                let off = offset.map_or(0.0, |o| o[i]);
                off + row.iter().zip(&self.coefficients).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }
}

fn total_loss(x: ArrayView2<f64>, y: &[f64], offset: Option<&[f64]>, beta: &[f64], eta: &mut [f64]) -> f64 {
    for (i, row) in x.rows().into_iter().enumerate() {
        eta[i] = offset.map_or(0.0, |o| o[i]) + row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
    }
    y.iter().zip(eta.iter()).map(|(&yi, &e)| logistic_loss(yi, e)).sum()
}

/// Maximizes the quasi-binomial log-likelihood of `y` given design `x` and an
/// optional offset. Fractional responses are allowed.
///
/// Non-convergence (for example under separation) returns the last iterate
/// with `converged = false` rather than an error.
pub fn fit_glm_logistic(x: ArrayView2<f64>, y: &[f64], offset: Option<&[f64]>) -> Result<GlmFit> {
    let (n, q) = x.dim();
    if y.len() != n || offset.is_some_and(|o| o.len() != n) {
        return arg_err("design, response and offset lengths differ");
    }
    if n <= q {
        return arg_err(format!("need more rows than columns, got n={n}, q={q}"));
    }
    if x.iter().any(|v| !v.is_finite()) || offset.is_some_and(|o| o.iter().any(|v| !v.is_finite())) {
        return arg_err("design or offset contains non-finite values");
    }

    let mut beta = vec![0.0; q];
    let mut eta = vec![0.0; n];
    let mut loss = total_loss(x, y, offset, &beta, &mut eta);
    let mut ridge_applied = false;
    let mut converged = false;
    let mut iterations = 0;

    let mut grad = vec![0.0; q];
    let mut info = vec![0.0; q * q];
    let mut trial = vec![0.0; q];
    for it in 1..=MAX_ITER {
        iterations = it;
        grad.iter_mut().for_each(|g| *g = 0.0);
        info.iter_mut().for_each(|v| *v = 0.0);
        for (i, row) in x.rows().into_iter().enumerate() {
            let mu = expit(eta[i]);
            let resid = y[i] - mu;
            let wt = mu * (1.0 - mu);
            for a in 0..q {
                let xa = row[a];
                grad[a] += xa * resid;
                let wx = wt * xa;
                for b in 0..=a {
                    info[a * q + b] += wx * row[b];
                }
            }
        }
        for a in 0..q {
            for b in 0..a {
                info[b * q + a] = info[a * q + b];
            }
        }
        let step = match linalg::solve(&info, &grad) {
            Ok(s) => s,
            Err(_) => {
                ridge_applied = true;
                let scale = (0..q).map(|a| info[a * q + a]).fold(1.0f64, f64::max);
                for a in 0..q {
                    info[a * q + a] += RIDGE * scale;
                }
                match linalg::solve(&info, &grad) {
                    Ok(s) => s,
                    Err(_) => break,
                }
            }
        };

        // step halving keeps the loss monotone
        let mut frac = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            for a in 0..q {
                trial[a] = beta[a] + frac * step[a];
            }
            let new_loss = total_loss(x, y, offset, &trial, &mut eta);
            if new_loss.is_finite() && new_loss <= loss + 1e-12 * loss.abs().max(1.0) {
                loss = new_loss;
                accepted = true;
                break;
            }
            frac *= 0.5;
        }
        if !accepted {
            total_loss(x, y, offset, &beta, &mut eta);
            converged = step.iter().all(|s| s.abs() < COEF_TOL.sqrt());
            break;
        }
        let change = (0..q).map(|a| (trial[a] - beta[a]).abs()).fold(0.0, f64::max);
        beta.copy_from_slice(&trial);
        if change < COEF_TOL {
            converged = true;
            break;
        }
    }

    Ok(GlmFit {
        coefficients: beta,
        converged,
        ridge_applied,
        iterations,
    })
}

/// Score `X^T (y - mu)` at `beta`.
pub fn logistic_score(x: ArrayView2<f64>, y: &[f64], offset: Option<&[f64]>, beta: &[f64]) -> Vec<f64> {
    let q = x.ncols();
    let mut g = vec![0.0; q];
    for (i, row) in x.rows().into_iter().enumerate() {
        let eta = offset.map_or(0.0, |o| o[i]) + row.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        let r = y[i] - expit(eta);
        for a in 0..q {
            g[a] += row[a] * r;
        }
    }
    g
}

/// Main-terms design `(1, W)`.
pub fn main_terms_design(w: ArrayView2<f64>) -> Array2<f64> {
    let (n, p) = w.dim();
    Array2::from_shape_fn((n, p + 1), |(i, j)| if j == 0 { 1.0 } else { w[[i, j - 1]] })
}

/// Main terms plus treatment interactions `(1, W, A, A*W)`.
pub fn interaction_design(w: ArrayView2<f64>, a: &[f64]) -> Array2<f64> {
    let (n, p) = w.dim();
    Array2::from_shape_fn((n, 2 * p + 2), |(i, j)| match j {
        0 => 1.0,
        j if j <= p => w[[i, j - 1]],
        j if j == p + 1 => a[i],
        j => a[i] * w[[i, j - p - 2]],
    })
}
