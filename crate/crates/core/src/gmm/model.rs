use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::component::GaussianComponent;
use super::features::FeatureSet;
use crate::error::{Error, Result};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// A mixture `λ = {w_i, μ_i, Σ_i}` of `l ≥ 1` components of equal dimension.
///
/// Serializes as `{dimension, components: [{weight, mean, covariance}]}` with
/// each covariance flattened row-major. Deserializing re-runs every check
/// [`GmmModel::new`] performs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GmmModelFile", into = "GmmModelFile")]
pub struct GmmModel {
    dimension: usize,
    components: Vec<GaussianComponent>,
}

impl GmmModel {
    pub fn new(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidModel("a mixture needs at least one component".into()))?;
        let dimension = first.dimension();
        for c in &components {
            if c.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: c.dimension(),
                });
            }
        }
        let total: f64 = components.iter().map(GaussianComponent::weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidModel(format!(
                "mixture weights sum to {total}, not 1"
            )));
        }
        Ok(Self {
            dimension,
            components,
        })
    }

    /// A single standard-form Gaussian with weight 1.
    pub fn single(mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![GaussianComponent::new(1.0, mean, covariance)?])
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub(crate) fn check_dimension(&self, found: usize) -> Result<()> {
        if found != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found,
            });
        }
        Ok(())
    }

    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        log_sum_exp(
            self.components
                .iter()
                .map(|c| c.weight().ln() + c.log_density_unchecked(x)),
        )
    }

    /// `ln p(x | λ)`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        self.check_dimension(x.len())?;
        Ok(self.log_density_unchecked(x))
    }

    /// `Σ_h ln p(x_h | λ)` over independent frames.
    pub fn log_likelihood(&self, set: &FeatureSet) -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        self.check_dimension(set.dimension())?;
        Ok(set.iter().map(|x| self.log_density_unchecked(x)).sum())
    }

    /// Draws one vector: a component by weight, then a normal draw from it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut chosen = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight();
            if u < acc {
                chosen = i;
                break;
            }
        }
        self.components[chosen].sample(rng)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization is infallible")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.to_json();
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `ln Σ exp(a_i)`, shifting by the maximum. Returns `-inf` for an empty or
/// all `-inf` input.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(terms: I) -> f64 {
    let mut buf = [0.0f64; 16];
    let mut heap = Vec::new();
    let mut n = 0;
    let mut max = f64::NEG_INFINITY;
    for t in terms {
        if n < buf.len() {
            buf[n] = t;
        } else {
            if n == buf.len() {
                heap.extend_from_slice(&buf);
            }
            heap.push(t);
        }
        n += 1;
        if t > max {
            max = t;
        }
    }
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    let values = if n <= buf.len() { &buf[..n] } else { &heap[..] };
    max + values.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `ln p(x | λ) = ln Σ_i w_i N(x; μ_i, Σ_i)`.
pub fn gmm_log_density(x: &[f64], model: &GmmModel) -> Result<f64> {
    model.log_density(x)
}

/// `ln p(X | λ) = Σ_h ln p(x_h | λ)`; zero for an empty set.
pub fn sequence_log_likelihood(set: &FeatureSet, model: &GmmModel) -> Result<f64> {
    model.log_likelihood(set)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentFile {
    weight: f64,
    mean: Vec<f64>,
    covariance: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GmmModelFile {
    dimension: usize,
    components: Vec<ComponentFile>,
}

impl TryFrom<GmmModelFile> for GmmModel {
    type Error = Error;

    fn try_from(file: GmmModelFile) -> Result<Self> {
        let d = file.dimension;
        if d == 0 {
            return Err(Error::InvalidModel("dimension must be >= 1".into()));
        }
        let mut components = Vec::with_capacity(file.components.len());
        for (i, c) in file.components.into_iter().enumerate() {
            if c.mean.len() != d {
                return Err(Error::InvalidModel(format!(
                    "component {i}: mean has {} values, dimension is {d}",
                    c.mean.len()
                )));
            }
            if c.covariance.len() != d * d {
                return Err(Error::InvalidModel(format!(
                    "component {i}: covariance has {} values, expected {}",
                    c.covariance.len(),
                    d * d
                )));
            }
            let cov = DMatrix::from_row_slice(d, d, &c.covariance);
            let comp = GaussianComponent::new(c.weight, c.mean, cov).map_err(|e| match e {
                Error::NotPositiveDefinite { .. } => Error::NotPositiveDefinite { component: i },
                Error::InvalidModel(msg) => Error::InvalidModel(format!("component {i}: {msg}")),
                other => other,
            })?;
            components.push(comp);
        }
        GmmModel::new(components)
    }
}

impl From<GmmModel> for GmmModelFile {
    fn from(m: GmmModel) -> Self {
        let d = m.dimension;
        GmmModelFile {
            dimension: d,
            components: m
                .components
                .iter()
                .map(|c| {
                    let cov = c.covariance();
                    let mut flat = Vec::with_capacity(d * d);
                    for i in 0..d {
                        for j in 0..d {
                            flat.push(cov[(i, j)]);
                        }
                    }
                    ComponentFile {
                        weight: c.weight(),
                        mean: c.mean().to_vec(),
                        covariance: flat,
                    }
                })
                .collect(),
        }
    }
}
