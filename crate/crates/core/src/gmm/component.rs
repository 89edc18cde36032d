use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// A weighted multivariate normal `w · N(μ, Σ)`.
///
/// The lower Cholesky factor of `Σ` is computed once at construction; a
/// component that exists is always positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    weight: f64,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    log_det: f64,
}

impl GaussianComponent {
    pub fn new(weight: f64, mean: Vec<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidModel("component mean is empty".into()));
        }
        if !weight.is_finite() || !(0.0..=1.0).contains(&weight) {
            return Err(Error::InvalidModel(format!(
                "component weight {weight} is outside [0, 1]"
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("component mean is not finite".into()));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::InvalidModel(format!(
                "covariance is {}x{}, mean has dimension {d}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("covariance is not finite".into()));
        }
        let asym = (&covariance - covariance.transpose()).amax();
        if asym > SYMMETRY_TOLERANCE {
            return Err(Error::InvalidModel(format!(
                "covariance is not symmetric (max |S - S'| = {asym:e})"
            )));
        }
        let (chol_lower, log_det) =
            cholesky(&covariance).ok_or(Error::NotPositiveDefinite { component: 0 })?;
        Ok(Self {
            weight,
            mean: DVector::from_vec(mean),
            covariance,
            chol_lower,
            log_det,
        })
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    /// `ln |Σ|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub(crate) fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    /// `(x-μ)' Σ⁻¹ (x-μ)`, via forward substitution on the Cholesky factor.
    pub(crate) fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.mean.len();
        let l = &self.chol_lower;
        let mut y = [0.0f64; 16];
        let mut heap;
        let y: &mut [f64] = if d <= y.len() {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..d {
            let mut s = x[i] - self.mean[i];
            for k in 0..i {
                s -= l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
            acc += y[i] * y[i];
        }
        acc
    }

    /// `ln N(x; μ, Σ)` without the weight. The caller guarantees the dimension.
    pub(crate) fn log_density_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        -0.5 * (d * (2.0 * PI).ln() + self.log_det + self.mahalanobis_sq(x))
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch {
                expected: self.dimension(),
                found: x.len(),
            });
        }
        Ok(self.log_density_unchecked(x))
    }

    /// Draws `μ + L z` with `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let d = self.dimension();
        let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        (0..d)
            .map(|i| self.mean[i] + (0..=i).map(|k| self.chol_lower[(i, k)] * z[k]).sum::<f64>())
            .collect()
    }
}

/// Lower Cholesky factor and `ln |Σ|`, or `None` when `Σ` is not positive definite.
pub(crate) fn cholesky(cov: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let chol = nalgebra::Cholesky::new(cov.clone())?;
    let l = chol.unpack();
    let mut log_det = 0.0;
    for i in 0..l.nrows() {
        let lii = l[(i, i)];
        if !(lii > 0.0) || !lii.is_finite() {
            return None;
        }
        log_det += 2.0 * lii.ln();
    }
    Some((l, log_det))
}

/// `ln N(x; μ, Σ)` for a single component, ignoring its mixture weight.
pub fn gaussian_log_density(x: &[f64], component: &GaussianComponent) -> Result<f64> {
    component.log_density(x)
}
