//! Nuisance estimation: outcome regression `Qbar(A, W)` and propensity
//! `g(1 | W)`.

pub mod glm;
pub mod hal;
pub mod lasso;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{arg_err, Error, Result};
use crate::util::clamp_prob;

pub use glm::{fit_glm_logistic, GlmFit};
pub use hal::{HalConfig, HalLearner};
pub use lasso::{fit_lasso_logistic, LassoFit, LassoOptions};

/// Default truncation of the propensity score.
pub const DEFAULT_G_TRUNCATION: f64 = 0.01;

/// Assigns each of `n` rows to one of `v` folds of near-equal size. A pure
/// function of `(n, v, seed)`.
pub fn fold_assignment(n: usize, v: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        folds[row] = pos % v.max(1);
    }
    folds
}

/// Fitted `E[Y | A, W]`.
pub trait OutcomeModel: Send + Sync {
    fn predict(&self, w: ArrayView2<f64>, a: &[f64]) -> Vec<f64>;
}

/// Fitted `Pr(A = 1 | W)`.
pub trait PropensityModel: Send + Sync {
    fn predict(&self, w: ArrayView2<f64>) -> Vec<f64>;
}

/// A nuisance learner. Implement this to plug in other regressions.
pub trait Learner: Send + Sync {
    fn name(&self) -> &str;
    fn fit_outcome(&self, w: ArrayView2<f64>, a: &[f64], y: &[f64], seed: u64) -> Result<Box<dyn OutcomeModel>>;
    fn fit_propensity(&self, w: ArrayView2<f64>, a: &[f64], seed: u64) -> Result<Box<dyn PropensityModel>>;
}

/// Logistic GLM: `(1, W, A, A W)` for the outcome and `(1, W)` for the
/// propensity.
#[derive(Debug, Clone, Copy, Default)]
pub struct GlmLearner;

struct GlmOutcome(GlmFit);
struct GlmPropensity(GlmFit);

impl OutcomeModel for GlmOutcome {
    fn predict(&self, w: ArrayView2<f64>, a: &[f64]) -> Vec<f64> {
        let x = glm::interaction_design(w, a);
        self.0
            .linear_predictor(x.view(), None)
            .into_iter()
            .map(|e| clamp_prob(crate::util::expit(e)))
            .collect()
    }
}

impl PropensityModel for GlmPropensity {
    fn predict(&self, w: ArrayView2<f64>) -> Vec<f64> {
        let x = glm::main_terms_design(w);
        self.0
            .linear_predictor(x.view(), None)
            .into_iter()
            .map(|e| clamp_prob(crate::util::expit(e)))
            .collect()
    }
}

impl Learner for GlmLearner {
    fn name(&self) -> &str {
        "glm"
    }

    fn fit_outcome(&self, w: ArrayView2<f64>, a: &[f64], y: &[f64], _seed: u64) -> Result<Box<dyn OutcomeModel>> {
        let x = glm::interaction_design(w, a);
        Ok(Box::new(GlmOutcome(fit_glm_logistic(x.view(), y, None)?)))
    }

    fn fit_propensity(&self, w: ArrayView2<f64>, a: &[f64], _seed: u64) -> Result<Box<dyn PropensityModel>> {
        let x = glm::main_terms_design(w);
        Ok(Box::new(GlmPropensity(fit_glm_logistic(x.view(), a, None)?)))
    }
}

/// Learner selection by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Glm,
    Hal,
}

impl LearnerKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "glm" => Ok(LearnerKind::Glm),
            "hal" => Ok(LearnerKind::Hal),
            other => arg_err(format!("unknown learner '{other}', expected glm or hal")),
        }
    }

    pub fn build(self) -> Box<dyn Learner> {
        match self {
            LearnerKind::Glm => Box::new(GlmLearner),
            LearnerKind::Hal => Box::new(HalLearner::default()),
        }
    }
}

/// Nuisance predictions on one set of rows.
#[derive(Debug, Clone, Serialize)]
pub struct NuisanceFit {
    pub q0: Vec<f64>,
    pub q1: Vec<f64>,
    pub g1: Vec<f64>,
    pub g_truncation: f64,
    /// `g1` came from a known propensity rather than a fit.
    pub g_known: bool,
    /// Rows whose `g1` sat at a truncation bound.
    pub g_truncated_count: usize,
}

impl NuisanceFit {
    pub fn n(&self) -> usize {
        self.q0.len()
    }

    /// Subset of rows in the given order.
    pub fn subset(&self, rows: &[usize]) -> NuisanceFit {
        let pick = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let g1 = pick(&self.g1);
        NuisanceFit {
            q0: pick(&self.q0),
            q1: pick(&self.q1),
            g_truncated_count: count_at_bounds(&g1, self.g_truncation),
            g1,
            g_truncation: self.g_truncation,
            g_known: self.g_known,
        }
    }
}

/// Truncates propensities to `[trunc, 1 - trunc]`.
pub fn truncate_g(g: &[f64], trunc: f64) -> Vec<f64> {
    g.iter().map(|&v| v.clamp(trunc, 1.0 - trunc)).collect()
}

fn count_at_bounds(g: &[f64], trunc: f64) -> usize {
    g.iter().filter(|&&v| v <= trunc || v >= 1.0 - trunc).count()
}

fn check_truncation(trunc: f64) -> Result<()> {
    if !(trunc > 0.0 && trunc < 0.5) {
        return arg_err(format!("g truncation must lie in (0, 0.5), got {trunc}"));
    }
    Ok(())
}

/// Fitted nuisance models, able to predict on new rows.
pub struct FittedNuisance {
    q: Box<dyn OutcomeModel>,
    g: Option<Box<dyn PropensityModel>>,
}

impl FittedNuisance {
    /// Fits on `train`. When `known_g` is set the propensity is not fit.
    pub fn fit(train: &Dataset, learner: &dyn Learner, fit_g: bool, seed: u64) -> Result<Self> {
        let treated = train.a().iter().filter(|&&a| a == 1.0).count();
        if treated == 0 || treated == train.n() {
            return Err(Error::Data(format!(
                "positivity violated: all {} observations have A = {}",
                train.n(),
                train.a()[0]
            )));
        }
        let q = learner.fit_outcome(train.w().view(), train.a(), train.y(), seed)?;
        let g = if fit_g {
            Some(learner.fit_propensity(train.w().view(), train.a(), seed ^ 0x9e37_79b9)?)
        } else {
            None
        };
        Ok(FittedNuisance { q, g })
    }

    /// Predicts on `w`; `known_g` supplies the propensity when it was not fit.
    pub fn predict(&self, w: ArrayView2<f64>, known_g: Option<&[f64]>, g_truncation: f64) -> Result<NuisanceFit> {
        check_truncation(g_truncation)?;
        let n = w.nrows();
        let q0 = self.q.predict(w, &vec![0.0; n]).into_iter().map(clamp_prob).collect();
        let q1 = self.q.predict(w, &vec![1.0; n]).into_iter().map(clamp_prob).collect();
        let (raw, g_known) = match (&self.g, known_g) {
            (_, Some(g)) => {
                if g.len() != n {
                    return arg_err(format!("known propensity has {} values for {n} rows", g.len()));
                }
                (g.to_vec(), true)
            }
            (Some(model), None) => (model.predict(w), false),
            (None, None) => return arg_err("propensity was not fit and no known propensity was given"),
        };
        let g1 = truncate_g(&raw, g_truncation);
        Ok(NuisanceFit {
            q0,
            q1,
            g_truncated_count: count_at_bounds(&g1, g_truncation),
            g1,
            g_truncation,
            g_known,
        })
    }
}

/// Fits `Qbar` and `g` on `data` and evaluates them on the same rows.
pub fn fit_nuisance(
    data: &Dataset,
    learner: &dyn Learner,
    g_truncation: f64,
    known_g: Option<&[f64]>,
    seed: u64,
) -> Result<NuisanceFit> {
    check_truncation(g_truncation)?;
    let fitted = FittedNuisance::fit(data, learner, known_g.is_none(), seed)?;
    fitted.predict(data.w().view(), known_g, g_truncation)
}

/// Convenience: single-column confounder matrix.
pub fn column(w: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((w.len(), 1), w.to_vec()).expect("shape")
}
