#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random SPD matrix `L Lᵀ + 0.1 I` with entries of moderate size.
pub fn random_spd<R: Rng>(rng: &mut R, d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            l[(i, j)] = if i == j {
                rng.random_range(0.3..2.0)
            } else {
                rng.random_range(-1.0..1.0)
            };
        }
    }
    let s = &l * l.transpose() + DMatrix::identity(d, d) * 0.1;
    // exact symmetry
    (&s + s.transpose()) * 0.5
}

pub fn random_vec<R: Rng>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Closed-form bivariate normal log density.
pub fn bivariate_log_pdf(x: [f64; 2], mu: [f64; 2], s: [[f64; 2]; 2]) -> f64 {
    let (a, b, c) = (s[0][0], s[0][1], s[1][1]);
    let det = a * c - b * b;
    let (dx, dy) = (x[0] - mu[0], x[1] - mu[1]);
    let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q
}

/// Univariate normal density, written out directly.
pub fn normal_pdf(x: f64, mu: f64, var: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Naive multivariate density by explicit inverse and determinant.
pub fn naive_pdf(x: &[f64], mu: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let inv = cov.clone().try_inverse().unwrap();
    let diff = nalgebra::DVector::from_iterator(d, x.iter().zip(mu).map(|(a, b)| a - b));
    let q = (diff.transpose() * inv * &diff)[(0, 0)];
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * cov.determinant()).sqrt()
}
