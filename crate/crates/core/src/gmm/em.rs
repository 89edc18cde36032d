//! Expectation-maximization for Gaussian mixtures.
//!
//! Seeding picks initial means with k-means++ (each new seed drawn with
//! probability proportional to its squared distance from the nearest seed so
//! far). Every component then starts from the pooled data covariance with a
//! uniform weight. After each M-step, covariance diagonals are clamped to a
//! fraction of the pooled per-dimension variance.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::component::{cholesky, GaussianComponent};
use super::features::FeatureSet;
use super::model::{log_sum_exp, GmmModel};
use crate::error::{Error, Result};

/// Components whose total responsibility falls below this fraction of `n`
/// keep their previous mean and covariance.
const COLLAPSE_FRACTION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    #[default]
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once the log-likelihood gain of an iteration is below this.
    pub tolerance: f64,
    /// Diagonal floor as a multiple of the pooled variance of each dimension.
    pub variance_floor: f64,
    pub seed: u64,
    pub covariance: CovarianceKind,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            variance_floor: 1e-6,
            seed: 0,
            covariance: CovarianceKind::Full,
        }
    }
}

impl EmConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }
}

/// A fitted model together with its training log-likelihood trajectory.
///
/// `log_likelihoods[0]` is the likelihood of the seeded model and entry `t`
/// the likelihood after the `t`-th M-step.
#[derive(Debug, Clone)]
pub struct EmTrace {
    pub model: GmmModel,
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn em_fit(data: &FeatureSet, components: usize, cfg: &EmConfig) -> Result<GmmModel> {
    em_fit_traced(data, components, cfg).map(|t| t.model)
}

pub fn em_fit_traced(data: &FeatureSet, components: usize, cfg: &EmConfig) -> Result<EmTrace> {
    let n = data.len();
    if n == 0 {
        return Err(Error::EmptyFeatureSet);
    }
    if components == 0 {
        return Err(Error::InvalidModel("component count must be >= 1".into()));
    }
    if n < components {
        return Err(Error::NotEnoughData {
            points: n,
            components,
        });
    }
    let d = data.dimension();
    let rows: Vec<&[f64]> = data.iter().collect();

    for j in 0..d {
        let first = rows[0][j];
        if rows.iter().all(|r| r[j] == first) {
            return Err(Error::DegenerateData { dimension: j });
        }
    }

    let ones = vec![1.0; n];
    let (_, global_cov) = weighted_moments(&rows, &ones, n as f64, d);
    let floors: Vec<f64> = (0..d)
        .map(|j| cfg.variance_floor * global_cov[(j, j)])
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seeds = kmeans_pp_seeds(&rows, components, &mut rng);

    let init_cov = finish_covariance(global_cov, &floors, cfg.covariance)?;
    let init_weight = 1.0 / components as f64;
    let mut comps = seeds
        .iter()
        .map(|&s| GaussianComponent::new(init_weight, rows[s].to_vec(), init_cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    renormalize(&mut comps);
    let mut model = GmmModel::new(comps)?;

    let mut resp = vec![0.0; n * components];
    let mut ll = e_step(&model, &rows, &mut resp);
    let mut log_likelihoods = vec![ll];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iterations {
        model = m_step(&model, &rows, &resp, &floors, cfg.covariance)?;
        let next = e_step(&model, &rows, &mut resp);
        log_likelihoods.push(next);
        iterations += 1;
        let gain = next - ll;
        ll = next;
        if gain < cfg.tolerance {
            converged = true;
            break;
        }
    }

    Ok(EmTrace {
        model,
        log_likelihoods,
        iterations,
        converged,
    })
}

/// Fills `resp` (row-major `n × l`) with posterior responsibilities and
/// returns the total log-likelihood.
fn e_step(model: &GmmModel, rows: &[&[f64]], resp: &mut [f64]) -> f64 {
    let l = model.len();
    let log_w: Vec<f64> = model.components().iter().map(|c| c.weight().ln()).collect();
    let mut total = 0.0;
    for (i, x) in rows.iter().enumerate() {
        let r = &mut resp[i * l..(i + 1) * l];
        for (k, c) in model.components().iter().enumerate() {
            r[k] = log_w[k] + c.log_density_unchecked(x);
        }
        let lse = log_sum_exp(r.iter().copied());
        for v in r.iter_mut() {
            *v = (*v - lse).exp();
        }
        total += lse;
    }
    total
}

fn m_step(
    prev: &GmmModel,
    rows: &[&[f64]],
    resp: &[f64],
    floors: &[f64],
    kind: CovarianceKind,
) -> Result<GmmModel> {
    let n = rows.len();
    let l = prev.len();
    let d = prev.dimension();
    let mass: Vec<f64> = (0..l)
        .map(|k| (0..n).map(|i| resp[i * l + k]).sum())
        .collect();
    let total_mass: f64 = mass.iter().sum();

    let mut comps = Vec::with_capacity(l);
    for k in 0..l {
        let weight = mass[k] / total_mass;
        if mass[k] < COLLAPSE_FRACTION * n as f64 {
            let old = &prev.components()[k];
            comps.push(GaussianComponent::new(
                weight,
                old.mean().to_vec(),
                old.covariance().clone(),
            )?);
            continue;
        }
        let w: Vec<f64> = (0..n).map(|i| resp[i * l + k]).collect();
        let (mean, cov) = weighted_moments(rows, &w, mass[k], d);
        let cov = finish_covariance(cov, floors, kind)
            .map_err(|_| Error::NotPositiveDefinite { component: k })?;
        comps.push(GaussianComponent::new(weight, mean, cov)?);
    }
    renormalize(&mut comps);
    GmmModel::new(comps)
}

/// Nudges the last weight so the weights sum to one to within rounding.
fn renormalize(comps: &mut Vec<GaussianComponent>) {
    let sum: f64 = comps.iter().map(|c| c.weight()).sum();
    if (sum - 1.0).abs() <= 1e-13 || comps.len() < 2 {
        return;
    }
    let rest: f64 = comps[..comps.len() - 1].iter().map(|c| c.weight()).sum();
    let last = comps.pop().expect("non-empty");
    comps.push(last.with_weight((1.0 - rest).clamp(0.0, 1.0)));
}

/// Weighted mean and maximum-likelihood covariance (divide by total weight).
/// The covariance is exactly symmetric.
fn weighted_moments(rows: &[&[f64]], w: &[f64], mass: f64, d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let mut mean = vec![0.0; d];
    for (x, &wi) in rows.iter().zip(w) {
        for j in 0..d {
            mean[j] += wi * x[j];
        }
    }
    for m in &mut mean {
        *m /= mass;
    }
    let mut cov = DMatrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for (x, &wi) in rows.iter().zip(w) {
        for j in 0..d {
            diff[j] = x[j] - mean[j];
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += wi * diff[a] * diff[b];
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / mass;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    (mean, cov)
}

/// Applies the covariance kind and the diagonal floor, then makes sure the
/// result factors. A matrix that still fails gets growing diagonal loading.
fn finish_covariance(
    mut cov: DMatrix<f64>,
    floors: &[f64],
    kind: CovarianceKind,
) -> Result<DMatrix<f64>> {
    let d = cov.nrows();
    if kind == CovarianceKind::Diagonal {
        for a in 0..d {
            for b in 0..d {
                if a != b {
                    cov[(a, b)] = 0.0;
                }
            }
        }
    }
    for j in 0..d {
        if !(cov[(j, j)] >= floors[j]) {
            cov[(j, j)] = floors[j];
        }
    }
    if cholesky(&cov).is_some() {
        return Ok(cov);
    }
    let mut scale = 1.0;
    for _ in 0..12 {
        let mut loaded = cov.clone();
        for j in 0..d {
            loaded[(j, j)] += scale * floors[j];
        }
        if cholesky(&loaded).is_some() {
            return Ok(loaded);
        }
        scale *= 10.0;
    }
    Err(Error::NotPositiveDefinite { component: 0 })
}

/// k-means++ seeding: returns `k` distinct row indices when the data allow.
fn kmeans_pp_seeds<R: Rng>(rows: &[&[f64]], k: usize, rng: &mut R) -> Vec<usize> {
    let n = rows.len();
    let mut seeds = Vec::with_capacity(k);
    seeds.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = rows.iter().map(|x| sq_dist(x, rows[seeds[0]])).collect();
    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &dist) in nearest.iter().enumerate() {
                acc += dist;
                if dist > 0.0 && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| nearest.iter().rposition(|&v| v > 0.0).unwrap_or(0))
        } else {
            // every point coincides with a seed
            rng.random_range(0..n)
        };
        seeds.push(pick);
        for (i, x) in rows.iter().enumerate() {
            let dist = sq_dist(x, rows[pick]);
            if dist < nearest[i] {
                nearest[i] = dist;
            }
        }
    }
    seeds
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
