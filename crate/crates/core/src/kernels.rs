//! Symmetric compact-support polynomial kernels of arbitrary even order.
//!
//! A kernel is `k(x) = sum_{i=0}^{K+2} a_i x^{2i}` on `[-R, R]` and zero
//! outside. The `K + 3` coefficients solve a square system: value and slope
//! vanish at the support boundary, moments `2, 4, ..., 2K` vanish, and the
//! kernel integrates to one. Because the kernel is a polynomial its
//! antiderivative and moments have exact closed forms, so smoothing never
//! needs numerical integration.

use serde::{Deserialize, Serialize};

use crate::error::{arg_err, Error, Result};
use crate::linalg;

/// Moments with absolute value at or below this are treated as zero when the
/// order is measured.
pub const MOMENT_ZERO_TOL: f64 = 1e-8;

const MIN_RADIUS: f64 = 0.1;
const MAX_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyKernel {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "R")]
    radius: f64,
    coefficients: Vec<f64>,
    order: usize,
    #[serde(skip)]
    antideriv: Vec<f64>,
}

impl PolyKernel {
    /// Builds the kernel for construction parameter `k` (even, >= 0) and
    /// support radius `radius`.
    pub fn build(k: i64, radius: f64) -> Result<Self> {
        if k < 0 || k % 2 != 0 {
            return arg_err(format!("kernel K must be an even nonnegative integer, got {k}"));
        }
        if !radius.is_finite() || !(MIN_RADIUS..=MAX_RADIUS).contains(&radius) {
            return arg_err(format!(
                "kernel R must lie in [{MIN_RADIUS}, {MAX_RADIUS}], got {radius}"
            ));
        }
        let k = k as usize;
        let m = k + 3;

        // Unknowns are c_i = a_i R^{2i}; this column scaling keeps the
        // system O(1) for any radius. Rows are also divided by the common
        // power of R so every entry is a pure number.
        let mut sys = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        let mut row = 0;
        // value at R
        for i in 0..m {
            sys[row * m + i] = 1.0;
        }
        row += 1;
        // slope at R
        for i in 0..m {
            sys[row * m + i] = 2.0 * i as f64;
        }
        row += 1;
        // vanishing even moments 2..=2K
        for r in (2..=2 * k).step_by(2) {
            for i in 0..m {
                sys[row * m + i] = 2.0 / (2 * i + 1 + r) as f64;
            }
            row += 1;
        }
        // unit mass
        for i in 0..m {
            sys[row * m + i] = 2.0 / (2 * i + 1) as f64;
        }
        rhs[row] = 1.0 / radius;
        debug_assert_eq!(row + 1, m);

        let scaled = linalg::solve_refined(&sys, &rhs).map_err(|s| {
            Error::Numerical(format!(
                "kernel system singular for K={k}, R={radius} (condition estimate {:.3e})",
                s.condition_estimate
            ))
        })?;
        let coefficients: Vec<f64> = scaled
            .iter()
            .enumerate()
            .map(|(i, c)| c / radius.powi(2 * i as i32))
            .collect();

        let mut kern = PolyKernel {
            k,
            radius,
            coefficients,
            order: 0,
            antideriv: Vec::new(),
        };
        kern.finish()?;
        Ok(kern)
    }

    /// Parses the JSON export format and re-measures the order.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut kern: PolyKernel = serde_json::from_str(text)?;
        if kern.coefficients.len() != kern.k + 3 {
            return arg_err(format!(
                "kernel JSON has {} coefficients, expected K+3 = {}",
                kern.coefficients.len(),
                kern.k + 3
            ));
        }
        if !(kern.radius > 0.0) || kern.coefficients.iter().any(|c| !c.is_finite()) {
            return arg_err("kernel JSON has a non-positive radius or non-finite coefficients");
        }
        let stated = kern.order;
        kern.finish()?;
        if stated != kern.order {
            return arg_err(format!(
                "kernel JSON states order {stated} but the coefficients have order {}",
                kern.order
            ));
        }
        Ok(kern)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("kernel serializes")
    }

    fn finish(&mut self) -> Result<()> {
        self.antideriv = self
            .coefficients
            .iter()
            .enumerate()
            .map(|(i, a)| a / (2 * i + 1) as f64)
            .collect();
        self.order = self.measure_order().ok_or_else(|| {
            Error::Numerical("kernel has no nonzero moment in the scanned range".into())
        })?;
        Ok(())
    }

    /// Moments are compared on the unit-radius scale, `moment(r) / R^r`, so
    /// the measured order does not depend on the radius.
    fn measure_order(&self) -> Option<usize> {
        (1..=2 * self.k + 16).find(|&r| (self.moment(r) / self.radius.powi(r as i32)).abs() > MOMENT_ZERO_TOL)
    }

    /// Construction parameter `K`.
    pub fn construction_k(&self) -> usize {
        self.k
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    /// Measured order: the degree of the first nonzero moment.
    pub fn order(&self) -> usize {
        self.order
    }

    /// `k(x)`, zero outside the support.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if x.abs() > self.radius {
            return 0.0;
        }
        let x2 = x * x;
        self.coefficients.iter().rev().fold(0.0, |acc, a| acc * x2 + a)
    }

    /// `k'(x)` inside the support (zero outside).
    pub fn derivative(&self, x: f64) -> f64 {
        if x.abs() > self.radius {
            return 0.0;
        }
        let x2 = x * x;
        // d/dx sum a_i x^{2i} = x * sum 2 i a_i x^{2(i-1)}
        let inner = self
            .coefficients
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (i, a)| acc * x2 + 2.0 * i as f64 * a);
        x * inner
    }

    #[inline]
    fn antiderivative(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * self.antideriv.iter().rev().fold(0.0, |acc, a| acc * x2 + a)
    }

    /// Kernel CDF: `integral_{-R}^{min(u, R)} k(x) dx`, using the odd
    /// antiderivative and unit mass.
    #[inline]
    pub fn cdf(&self, u: f64) -> f64 {
        if u <= -self.radius {
            0.0
        } else if u >= self.radius {
            1.0
        } else {
            0.5 + self.antiderivative(u)
        }
    }

    /// Both `k(u)` and the kernel CDF at `u`.
    #[inline]
    pub fn eval_with_cdf(&self, u: f64) -> (f64, f64) {
        if u <= -self.radius {
            (0.0, 0.0)
        } else if u >= self.radius {
            (0.0, 1.0)
        } else {
            (self.eval(u), self.cdf(u))
        }
    }

    /// `integral x^r k(x) dx` in closed form.
    pub fn moment(&self, r: usize) -> f64 {
        if r % 2 == 1 {
            return 0.0;
        }
        self.coefficients
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let p = 2 * i + 1 + r;
                2.0 * a * self.radius.powi(p as i32) / p as f64
            })
            .sum()
    }
}

/// Free-function form of [`PolyKernel::build`].
pub fn build_kernel(k: i64, radius: f64) -> Result<PolyKernel> {
    PolyKernel::build(k, radius)
}
