//! Gaussian mixture densities, EM training and likelihood-ratio scoring.
//!
//! Everything here works in the log domain. Component densities go through a
//! Cholesky factor of the covariance and mixtures are combined with
//! log-sum-exp, so models with many dimensions or far-away frames do not
//! underflow.

mod component;
mod em;
mod features;
mod model;
mod score;

pub use component::{gaussian_log_density, GaussianComponent};
pub use em::{em_fit, em_fit_traced, CovarianceKind, EmConfig, EmTrace};
pub use features::{FeatureSet, FeatureVector};
pub use model::{gmm_log_density, log_sum_exp, sequence_log_likelihood, GmmModel};
pub(crate) use score::combine as combine_scores;
pub use score::{likelihood_ratio_score, ScoreForm};
