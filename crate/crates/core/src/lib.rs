//! Targeted estimation of the kernel-smoothed distribution function of the
//! conditional treatment effect (the blip), with influence-curve inference,
//! a bandwidth selector and a simulation harness.

pub mod bandwidth;
pub mod cli;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimator;
pub mod inference;
pub mod kernels;
pub mod learners;
pub mod linalg;
pub mod par;
pub mod sim;
pub mod util;

pub use data::{CsvSpec, Dataset, LoadedData, OutcomeScaling};
pub use error::{Error, Result};
pub use estimator::{cv_tmle, tmle, tmle_update, SmoothingSpec, TmleOptions, TmleResult};
pub use kernels::{build_kernel, PolyKernel};
pub use learners::{fit_nuisance, GlmLearner, HalLearner, Learner, LearnerKind, NuisanceFit};
