//! Scalar helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal};

/// Probabilities are kept inside `[PROB_FLOOR, 1 - PROB_FLOOR]`.
pub const PROB_FLOOR: f64 = 1e-6;

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Largest logit magnitude allowed for offsets.
pub fn logit_bound() -> f64 {
    logit(1.0 - PROB_FLOOR)
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Quasi-binomial loss `-[y log mu + (1-y) log(1-mu)]` at linear predictor `eta`.
#[inline]
pub fn logistic_loss(y: f64, eta: f64) -> f64 {
    softplus(eta) - y * eta
}

/// Mean quasi-binomial loss of probabilities `p` against responses `y`.
pub fn mean_log_loss(y: &[f64], p: &[f64]) -> f64 {
    let s: f64 = y
        .iter()
        .zip(p)
        .map(|(&yi, &pi)| -(yi * pi.ln() + (1.0 - yi) * (1.0 - pi).ln()))
        .sum();
    s / y.len() as f64
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1 denominator); zero for fewer than two values.
pub fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Empirical quantile of sorted data: the smallest value with at least a
/// `p` fraction of the sample at or below it.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
    sorted[idx]
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expit_logit_inverse() {
        for x in [-30.0, -2.0, 0.0, 0.7, 25.0] {
            assert!((logit(expit(x)) - x).abs() < 1e-6 * (1.0 + x.abs()));
        }
        assert!((expit(1.0) - expit(0.0) - 0.231_058_6).abs() < 1e-6);
    }

    #[test]
    fn normal_quantile_975() {
        assert!((normal_quantile(0.975) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn loss_matches_direct_form() {
        let (y, eta) = (0.3, 1.2);
        let mu = expit(eta);
        let direct = -(y * mu.ln() + (1.0 - y) * (1.0 - mu).ln());
        assert!((logistic_loss(y, eta) - direct).abs() < 1e-14);
    }

    #[test]
    fn quantile_rule() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(sorted_quantile(&v, 0.5), 2.0);
        assert_eq!(sorted_quantile(&v, 0.51), 3.0);
        assert_eq!(sorted_quantile(&v, 1.0), 4.0);
    }
}
