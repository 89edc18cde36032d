//! Allots a request to a specialist cluster by likelihood-ratio test, falling
//! back to the general cluster when no specialist passes its threshold.
//!
//! Clusters are numbered from 1. With `k - 1` specialist models the general
//! cluster is `k`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{FeatureSet, GmmModel, ScoreForm};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Policy {
    /// Lowest-index cluster whose score reaches its threshold.
    #[default]
    FirstMatch,
    /// Highest-scoring cluster among those reaching their threshold.
    BestMatch,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::FirstMatch => "FIRST_MATCH",
            Policy::BestMatch => "BEST_MATCH",
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Policy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "first" | "first_match" => Ok(Policy::FirstMatch),
            "best" | "best_match" => Ok(Policy::BestMatch),
            other => Err(format!("unknown policy `{other}` (expected first|best)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Thresholds {
    Global(f64),
    PerCluster(Vec<f64>),
}

impl Thresholds {
    /// Threshold of specialist cluster `i` (1-based).
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Thresholds::Global(t) => *t,
            Thresholds::PerCluster(ts) => ts[i - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    ThresholdPass,
    FallbackGeneral,
}

impl Reason {
    pub fn as_str(self) -> &'static str {
        match self {
            Reason::ThresholdPass => "THRESHOLD_PASS",
            Reason::FallbackGeneral => "FALLBACK_GENERAL",
        }
    }
}

#[derive(Debug, Clone)]
pub struct RouterConfig {
    thresholds: Thresholds,
    policy: Policy,
    score_form: ScoreForm,
    cluster_models: Vec<GmmModel>,
    labels: Option<Vec<String>>,
    reference_model: GmmModel,
}

impl RouterConfig {
    pub fn new(
        thresholds: Thresholds,
        policy: Policy,
        score_form: ScoreForm,
        cluster_models: Vec<GmmModel>,
        reference_model: GmmModel,
    ) -> Result<Self> {
        let cfg = Self {
            thresholds,
            policy,
            score_form,
            cluster_models,
            labels: None,
            reference_model,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.cluster_models.len() {
            return Err(Error::InvalidRouterConfig(format!(
                "{} labels for {} cluster models",
                labels.len(),
                self.cluster_models.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        let d = self.reference_model.dimension();
        for m in &self.cluster_models {
            if m.dimension() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: m.dimension(),
                });
            }
        }
        match &self.thresholds {
            Thresholds::Global(t) if t.is_nan() => {
                Err(Error::InvalidRouterConfig("threshold is NaN".into()))
            }
            Thresholds::PerCluster(ts) if ts.len() != self.cluster_models.len() => {
                Err(Error::InvalidRouterConfig(format!(
                    "{} thresholds for {} cluster models",
                    ts.len(),
                    self.cluster_models.len()
                )))
            }
            Thresholds::PerCluster(ts) if ts.iter().any(|t| t.is_nan()) => {
                Err(Error::InvalidRouterConfig("threshold is NaN".into()))
            }
            _ => Ok(()),
        }
    }

    /// Reads `{thresholds, policy, score_form, model_paths, reference_model_path}`.
    /// Relative model paths resolve against the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: RouterConfigFile =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let cluster_models = file
            .model_paths
            .iter()
            .map(|p| GmmModel::load(base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        let reference = GmmModel::load(base.join(&file.reference_model_path))?;
        let cfg = Self::new(
            file.thresholds,
            file.policy,
            file.score_form,
            cluster_models,
            reference,
        )?;
        match file.labels {
            Some(labels) => cfg.with_labels(labels),
            None => Ok(cfg),
        }
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn score_form(&self) -> ScoreForm {
        self.score_form
    }

    pub fn cluster_models(&self) -> &[GmmModel] {
        &self.cluster_models
    }

    pub fn reference_model(&self) -> &GmmModel {
        &self.reference_model
    }

    /// Specialist labels, when the config names them.
    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn dimension(&self) -> usize {
        self.reference_model.dimension()
    }

    /// Number of clusters including the general one.
    pub fn cluster_count(&self) -> usize {
        self.cluster_models.len() + 1
    }

    pub fn general_cluster_index(&self) -> usize {
        self.cluster_count()
    }

    pub fn set_policy(&mut self, policy: Policy) {
        self.policy = policy;
    }

    pub fn set_score_form(&mut self, form: ScoreForm) {
        self.score_form = form;
    }

    pub fn set_thresholds(&mut self, thresholds: Thresholds) -> Result<()> {
        let old = std::mem::replace(&mut self.thresholds, thresholds);
        if let Err(e) = self.validate() {
            self.thresholds = old;
            return Err(e);
        }
        Ok(())
    }

    /// Scores of every specialist cluster, in cluster order.
    pub fn scores(&self, set: &FeatureSet) -> Result<Vec<f64>> {
        if set.is_empty() {
            return Err(Error::EmptyFeatureSet);
        }
        let reference_ll = self.reference_model.log_likelihood(set)?;
        self.cluster_models
            .iter()
            .map(|m| {
                let ll = m.log_likelihood(set)?;
                crate::gmm::combine_scores(self.score_form, ll, reference_ll, set.len())
            })
            .collect()
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterConfigFile {
    pub thresholds: Thresholds,
    #[serde(default)]
    pub policy: Policy,
    #[serde(default)]
    pub score_form: ScoreForm,
    pub model_paths: Vec<PathBuf>,
    pub reference_model_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub patient_id: String,
    pub chosen_cluster: usize,
    pub scores: Vec<f64>,
    pub reason: Reason,
    pub policy: Policy,
    pub score_form: ScoreForm,
}

impl RoutingDecision {
    pub fn is_specialist(&self) -> bool {
        self.reason == Reason::ThresholdPass
    }
}

pub fn allot_patient(
    patient_id: &str,
    set: &FeatureSet,
    cfg: &RouterConfig,
) -> Result<RoutingDecision> {
    if set.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    if set.dimension() != cfg.dimension() {
        return Err(Error::DimensionMismatch {
            expected: cfg.dimension(),
            found: set.dimension(),
        });
    }
    let scores = if cfg.cluster_models.is_empty() {
        Vec::new()
    } else {
        cfg.scores(set)?
    };
    let passes = |i: usize| scores[i - 1] >= cfg.thresholds.get(i);
    let chosen = match cfg.policy {
        Policy::FirstMatch => (1..cfg.cluster_count()).find(|&i| passes(i)),
        Policy::BestMatch => {
            (1..cfg.cluster_count())
                .filter(|&i| passes(i))
                .fold(None, |best: Option<usize>, i| match best {
                    Some(b) if scores[b - 1] >= scores[i - 1] => Some(b),
                    _ => Some(i),
                })
        }
    };
    let (chosen_cluster, reason) = match chosen {
        Some(i) => (i, Reason::ThresholdPass),
        None => (cfg.general_cluster_index(), Reason::FallbackGeneral),
    };
    Ok(RoutingDecision {
        patient_id: patient_id.to_string(),
        chosen_cluster,
        scores,
        reason,
        policy: cfg.policy,
        score_form: cfg.score_form,
    })
}

/// One point of a threshold sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    /// Fraction of impostor scores at or above the threshold.
    pub false_accept: f64,
    /// Fraction of genuine scores below the threshold.
    pub false_reject: f64,
}

/// Genuine and impostor score populations for threshold calibration.
///
/// A genuine score is a cluster's score on a patient of that cluster's
/// specialty; an impostor score is its score on anyone else.
#[derive(Debug, Clone, Default)]
pub struct ScoreSample {
    genuine: Vec<f64>,
    impostor: Vec<f64>,
}

impl ScoreSample {
    pub fn new(mut genuine: Vec<f64>, mut impostor: Vec<f64>) -> Self {
        genuine.sort_by(f64::total_cmp);
        impostor.sort_by(f64::total_cmp);
        Self { genuine, impostor }
    }

    /// Scores every labeled set against every specialist cluster. `labels[i]`
    /// is the true cluster of `sets[i]` (1-based; the general index or
    /// anything out of range counts as impostor everywhere).
    pub fn collect(cfg: &RouterConfig, sets: &[FeatureSet], labels: &[usize]) -> Result<Self> {
        let mut genuine = Vec::new();
        let mut impostor = Vec::new();
        for (set, &label) in sets.iter().zip(labels) {
            for (i, s) in cfg.scores(set)?.into_iter().enumerate() {
                if i + 1 == label {
                    genuine.push(s);
                } else {
                    impostor.push(s);
                }
            }
        }
        Ok(Self::new(genuine, impostor))
    }

    pub fn genuine(&self) -> &[f64] {
        &self.genuine
    }

    pub fn impostor(&self) -> &[f64] {
        &self.impostor
    }

    pub fn point(&self, threshold: f64) -> OperatingPoint {
        let below = |v: &[f64]| v.partition_point(|&s| s < threshold);
        let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        OperatingPoint {
            threshold,
            false_accept: frac(
                self.impostor.len() - below(&self.impostor),
                self.impostor.len(),
            ),
            false_reject: frac(below(&self.genuine), self.genuine.len()),
        }
    }

    /// Smallest threshold whose false-acceptance rate does not exceed `target`.
    pub fn threshold_for_far(&self, target: f64) -> f64 {
        let n = self.impostor.len();
        let allowed = (target.clamp(0.0, 1.0) * n as f64 + 1e-9).floor() as usize;
        if allowed >= n {
            let lowest = self
                .genuine
                .first()
                .copied()
                .into_iter()
                .chain(self.impostor.first().copied())
                .fold(f64::INFINITY, f64::min);
            return if lowest.is_finite() { lowest } else { 0.0 };
        }
        // impostors sorted ascending: the (allowed+1)-th largest must be rejected
        self.impostor[n - 1 - allowed].next_up()
    }

    /// Operating points at up to `max_points` thresholds spread over the
    /// observed score range (every distinct score when there are few).
    pub fn curve(&self, max_points: usize) -> Vec<OperatingPoint> {
        let mut all: Vec<f64> = self.genuine.iter().chain(&self.impostor).copied().collect();
        all.sort_by(f64::total_cmp);
        all.dedup();
        if all.is_empty() || max_points == 0 {
            return Vec::new();
        }
        let picks: Vec<f64> = if all.len() <= max_points {
            all
        } else {
            (0..max_points)
                .map(|i| all[i * (all.len() - 1) / (max_points - 1).max(1)])
                .collect()
        };
        picks.into_iter().map(|t| self.point(t)).collect()
    }
}
