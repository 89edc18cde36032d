use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One frame: a `d`-dimensional vector of normalized features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidRecord("feature vector has no values".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord(format!(
                "feature vector value {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// The frames extracted from one request, all of the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    dimension: usize,
    vectors: Vec<FeatureVector>,
}

impl FeatureSet {
    pub fn empty(dimension: usize) -> Self {
        Self {
            dimension,
            vectors: Vec::new(),
        }
    }

    pub fn new(dimension: usize, vectors: Vec<FeatureVector>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidRecord(
                "feature dimension must be >= 1".into(),
            ));
        }
        for v in &vectors {
            if v.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: v.dimension(),
                });
            }
        }
        Ok(Self { dimension, vectors })
    }

    /// Builds a set from raw rows; the dimension is taken from the first row.
    pub fn from_rows<I, R>(rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: Into<Vec<f64>>,
    {
        let vectors = rows
            .into_iter()
            .map(|r| FeatureVector::new(r.into()))
            .collect::<Result<Vec<_>>>()?;
        let dimension = vectors
            .first()
            .map(FeatureVector::dimension)
            .ok_or(Error::EmptyFeatureSet)?;
        Self::new(dimension, vectors)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[FeatureVector] {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.iter().map(FeatureVector::as_slice)
    }

    pub fn push(&mut self, v: FeatureVector) -> Result<()> {
        if v.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: v.dimension(),
            });
        }
        self.vectors.push(v);
        Ok(())
    }

    /// Concatenates `other` onto `self`.
    pub fn extend(&mut self, other: &FeatureSet) -> Result<()> {
        if other.dimension != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: other.dimension,
            });
        }
        self.vectors.extend(other.vectors.iter().cloned());
        Ok(())
    }
}
