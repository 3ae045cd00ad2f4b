//! The two simulation laws and Monte Carlo truth for the blip distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{arg_err, Result};
use crate::kernels::PolyKernel;
use crate::learners::column;
use crate::util::expit;

/// Seed of the truth sample, kept apart from replicate seeds.
pub const TRUTH_SEED: u64 = 0x7275_7468;
pub const DEFAULT_TRUTH_DRAWS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// Logistic propensity and outcome, correctly specified by the GLM.
    WellSpecified,
    /// Trigonometric laws that defeat a main-terms GLM.
    Misspecified,
}

impl DgpKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "well_specified" => Ok(DgpKind::WellSpecified),
            "misspecified" => Ok(DgpKind::Misspecified),
            other => arg_err(format!("unknown DGP '{other}', expected well_specified or misspecified")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::WellSpecified => "well_specified",
            DgpKind::Misspecified => "misspecified",
        }
    }

    /// `Pr(A = 1 | W = w)`.
    pub fn propensity(self, w: f64) -> f64 {
        match self {
            DgpKind::WellSpecified => expit(0.2 + 0.2 * w),
            DgpKind::Misspecified => {
                let tail = if w.abs() > 1.0 { w * w } else { 0.0 };
                expit(-0.1 - 0.5 * w.sin() - 0.4 * tail)
            }
        }
    }

    /// `E[Y | A = a, W = w]`.
    pub fn outcome(self, a: f64, w: f64) -> f64 {
        match self {
            DgpKind::WellSpecified => expit(a + 2.5 * a * w + w),
            DgpKind::Misspecified => expit(0.3 * a + 5.0 * a * w.sin().powi(2) - a * w.cos()),
        }
    }

    /// True blip `E[Y | 1, w] - E[Y | 0, w]`.
    pub fn blip(self, w: f64) -> f64 {
        self.outcome(1.0, w) - self.outcome(0.0, w)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub n: usize,
    pub seed: u64,
}

/// A draw together with the true propensity of each row.
#[derive(Debug, Clone)]
pub struct Draw {
    pub data: Dataset,
    pub g_true: Vec<f64>,
}

/// Draws `n` observations; a pure function of `(kind, n, seed)`.
pub fn draw(spec: &DgpSpec) -> Result<Draw> {
    if spec.n < 10 {
        return arg_err(format!("simulated samples need n >= 10, got {}", spec.n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut w = Vec::with_capacity(spec.n);
    let mut a = Vec::with_capacity(spec.n);
    let mut y = Vec::with_capacity(spec.n);
    let mut g = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let wi: f64 = rng.sample(StandardNormal);
        let gi = spec.kind.propensity(wi);
        let ai = if rng.random::<f64>() < gi { 1.0 } else { 0.0 };
        let yi = if rng.random::<f64>() < spec.kind.outcome(ai, wi) { 1.0 } else { 0.0 };
        w.push(wi);
        g.push(gi);
        a.push(ai);
        y.push(yi);
    }
    Ok(Draw {
        data: Dataset::new(column(&w), a, y)?,
        g_true: g,
    })
}

pub fn true_blip(kind: DgpKind, w: &[f64]) -> Vec<f64> {
    w.iter().map(|&x| kind.blip(x)).collect()
}

/// Sorted true blips of a large seeded sample of `W`.
#[derive(Debug, Clone)]
pub struct TruthSample {
    pub kind: DgpKind,
    pub seed: u64,
    sorted: Vec<f64>,
}

impl TruthSample {
    pub fn new(kind: DgpKind, draws: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sorted: Vec<f64> = (0..draws).map(|_| kind.blip(rng.sample(StandardNormal))).collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
        TruthSample { kind, seed, sorted }
    }

    pub fn draws(&self) -> usize {
        self.sorted.len()
    }

    /// `F(t) = Pr(b(W) <= t)`.
    pub fn cdf(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&b| b <= t) as f64 / self.sorted.len() as f64
    }

    /// `E[1 - Kcdf((b(W) - t) / delta)]`. Only blips inside the kernel
    /// window need evaluating; those below it contribute one.
    pub fn smoothed(&self, kernel: &PolyKernel, delta: f64, t: f64) -> f64 {
        let reach = delta * kernel.radius();
        let lo = self.sorted.partition_point(|&b| b <= t - reach);
        let hi = self.sorted.partition_point(|&b| b < t + reach);
        let inside: f64 = self.sorted[lo..hi]
            .iter()
            .map(|&b| 1.0 - kernel.cdf((b - t) / delta))
            .sum();
        (lo as f64 + inside) / self.sorted.len() as f64
    }
}

/// True unsmoothed and smoothed targets at each `t`.
#[derive(Debug, Clone, Serialize)]
pub struct Targets {
    pub t: Vec<f64>,
    pub cdf: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub delta: f64,
    pub truth_seed: u64,
    pub truth_draws: usize,
}

pub fn true_targets(truth: &TruthSample, kernel: &PolyKernel, delta: f64, t: &[f64]) -> Targets {
    Targets {
        t: t.to_vec(),
        cdf: t.iter().map(|&x| truth.cdf(x)).collect(),
        smoothed: t.iter().map(|&x| truth.smoothed(kernel, delta, x)).collect(),
        delta,
        truth_seed: truth.seed,
        truth_draws: truth.draws(),
    }
}
