use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{load_population, validate_population, FeatureSchema, PopulationSpec};
use crate::registry::{Capacity, ClusterSpec};
use crate::router::RouterConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ServiceDistribution {
    #[default]
    Exponential,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    /// Mean service time in minutes (the exact duration when FIXED).
    #[serde(default = "default_service_mean")]
    pub mean: f64,
    #[serde(default)]
    pub distribution: ServiceDistribution,
}

fn default_service_mean() -> f64 {
    60.0
}

impl Default for ServiceSpec {
    fn default() -> Self {
        Self {
            mean: default_service_mean(),
            distribution: ServiceDistribution::Exponential,
        }
    }
}

/// Population given inline or as a path to a population file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PopulationRef {
    Path(PathBuf),
    Inline(Vec<PopulationSpec>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalFile {
    /// Mean minutes between Poisson arrivals; `null` means no traffic.
    pub mean_interarrival: Option<f64>,
    pub population: PopulationRef,
}

/// On-disk scenario. Paths are relative to the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default)]
    pub name: String,
    pub clusters: Vec<ClusterSpec>,
    pub arrival: ArrivalFile,
    #[serde(default)]
    pub service: ServiceSpec,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_delta_t")]
    pub delta_t: f64,
    #[serde(default)]
    pub seed: u64,
    pub router: PathBuf,
    pub schema: PathBuf,
}

fn default_horizon() -> f64 {
    120.0
}

fn default_delta_t() -> f64 {
    5.0
}

#[derive(Debug, Clone)]
pub struct Arrival {
    pub mean_interarrival: Option<f64>,
    pub population: Vec<PopulationSpec>,
}

/// A fully loaded, validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub clusters: Vec<ClusterSpec>,
    pub arrival: Arrival,
    pub service: ServiceSpec,
    pub horizon: f64,
    pub delta_t: f64,
    pub seed: u64,
    pub router: RouterConfig,
    pub schema: FeatureSchema,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: ScenarioFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_file(file, base)
    }

    pub fn from_file(file: ScenarioFile, base: &Path) -> Result<Self> {
        let router = RouterConfig::load(base.join(&file.router))?;
        let schema = FeatureSchema::load(base.join(&file.schema))?;
        let population = match file.arrival.population {
            PopulationRef::Path(p) => load_population(base.join(p))?,
            PopulationRef::Inline(v) => v,
        };
        let s = Self {
            name: file.name,
            clusters: file.clusters,
            arrival: Arrival {
                mean_interarrival: file.arrival.mean_interarrival,
                population,
            },
            service: file.service,
            horizon: file.horizon,
            delta_t: file.delta_t,
            seed: file.seed,
            router,
            schema,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if !(self.delta_t > 0.0) || !self.delta_t.is_finite() {
            return bad(format!("delta_t must be positive, got {}", self.delta_t));
        }
        if self.clusters.is_empty() {
            return bad("no clusters".into());
        }
        for c in &self.clusters {
            if c.physicians == 0 {
                return bad(format!("cluster `{}` has no physicians", c.label));
            }
        }
        let general = self.clusters.last().expect("non-empty");
        if general.capacity != Capacity::Unbounded {
            return bad(format!(
                "general cluster `{}` must have unbounded capacity",
                general.label
            ));
        }
        if let Some(m) = self.arrival.mean_interarrival {
            if !(m > 0.0) || !m.is_finite() {
                return bad(format!("mean_interarrival must be positive, got {m}"));
            }
        }
        if !(self.service.mean > 0.0) || !self.service.mean.is_finite() {
            return bad(format!(
                "service mean must be positive, got {}",
                self.service.mean
            ));
        }
        if self.router.cluster_count() != self.clusters.len() {
            return bad(format!(
                "router has {} clusters, scenario has {}",
                self.router.cluster_count(),
                self.clusters.len()
            ));
        }
        if let Some(labels) = self.router.labels() {
            for (l, c) in labels.iter().zip(&self.clusters) {
                if l != &c.label {
                    return bad(format!(
                        "router label `{l}` does not match cluster `{}`",
                        c.label
                    ));
                }
            }
        }
        if self.router.dimension() != self.schema.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.schema.dimension(),
                found: self.router.dimension(),
            });
        }
        validate_population(&self.arrival.population, &self.schema)
    }

    /// Cluster index (1-based) whose label matches a population label; the
    /// general cluster otherwise.
    pub fn true_cluster(&self, label: &str) -> usize {
        self.clusters
            .iter()
            .position(|c| c.label == label)
            .map_or(self.clusters.len(), |i| i + 1)
    }
}
