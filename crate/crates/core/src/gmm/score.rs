use serde::{Deserialize, Serialize};

use super::features::FeatureSet;
use super::model::GmmModel;
use crate::error::{Error, Result};

/// How a cluster model is compared against the reference model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ScoreForm {
    /// `(1/n)[ln p(X|cluster) - ln p(X|reference)]`.
    #[default]
    LogDifference,
    /// `ln p(X|reference) / ln p(X|cluster)`, a quotient of log-likelihoods.
    LogQuotient,
}

impl ScoreForm {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreForm::LogDifference => "LOG_DIFFERENCE",
            ScoreForm::LogQuotient => "LOG_QUOTIENT",
        }
    }
}

impl std::fmt::Display for ScoreForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ScoreForm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "diff" | "log_difference" => Ok(ScoreForm::LogDifference),
            "quotient" | "log_quotient" => Ok(ScoreForm::LogQuotient),
            other => Err(format!(
                "unknown score form `{other}` (expected diff|quotient)"
            )),
        }
    }
}

/// Combines two sequence log-likelihoods into a score. Shared with the router
/// so reported scores are reproducible from the densities alone.
pub(crate) fn combine(
    form: ScoreForm,
    cluster_ll: f64,
    reference_ll: f64,
    n: usize,
) -> Result<f64> {
    match form {
        ScoreForm::LogDifference => Ok((cluster_ll - reference_ll) / n as f64),
        ScoreForm::LogQuotient => {
            if !(cluster_ll.abs() >= 1e-300) {
                return Err(Error::IllPosedQuotient(cluster_ll.abs()));
            }
            Ok(reference_ll / cluster_ll)
        }
    }
}

/// Likelihood-ratio score of `set` for `cluster` against `reference`.
pub fn likelihood_ratio_score(
    set: &FeatureSet,
    cluster: &GmmModel,
    reference: &GmmModel,
    form: ScoreForm,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    let cluster_ll = cluster.log_likelihood(set)?;
    let reference_ll = reference.log_likelihood(set)?;
    combine(form, cluster_ll, reference_ll, set.len())
}
