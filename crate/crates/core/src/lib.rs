//! Adaptive Bayesian estimation of semantic entropy.
//!
//! A response set is summarized as an [`EstimationDataset`]; the posterior
//! over the number of meanings and their probabilities yields an entropy
//! mean and variance, and [`estimate_semantic_entropy`] keeps sampling
//! until that variance drops below a threshold.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backends;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod estimator;
pub mod exploration;
pub mod k_inference;
pub mod math;
pub mod posterior;
pub mod types;

pub use error::{BackendError, Error, Result};
pub use estimator::{
    baseline_semantic_entropy, estimate_semantic_entropy, replay, scaled_alphas, total_moments,
    update_with_weighted_sample, EntropyEstimate, EstimatorConfig, Termination, TotalMoments, TrajectoryPoint,
};
pub use k_inference::{KPosterior, KPrior};
pub use math::{dirichlet_entropy_mean_closed_form, dirichlet_log_density, dirichlet_sample, shannon_entropy};
pub use posterior::{snis_entropy_moments, ConstraintSet, SnisResult};
pub use types::{EstimationDataset, ProbabilityVector, Response, SampleSource, SemanticSample};
