//! Fixtures shared by the dispatch benchmarks.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use triage_core::gmm::GaussianComponent;
use triage_core::{FeatureSet, GmmModel, Policy, RouterConfig, Scenario, ScoreForm, Thresholds};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Unit-covariance Gaussian at `4 e_axis`.
pub fn axis_model(d: usize, axis: usize) -> GmmModel {
    let mut mean = vec![0.0; d];
    mean[axis] = 4.0;
    GmmModel::single(mean, DMatrix::identity(d, d)).expect("identity is positive definite")
}

/// Equal-weight mixture of `l` axis-aligned components.
pub fn mixture(d: usize, l: usize) -> GmmModel {
    let w = 1.0 / l as f64;
    let comps = (0..l)
        .map(|i| {
            let mut mean = vec![0.0; d];
            mean[i % d] = 4.0 * (1 + i / d) as f64;
            let weight = if i + 1 == l {
                1.0 - w * (l - 1) as f64
            } else {
                w
            };
            GaussianComponent::new(weight, mean, DMatrix::identity(d, d)).expect("valid component")
        })
        .collect();
    GmmModel::new(comps).expect("weights sum to one")
}

pub fn sample_set(model: &GmmModel, frames: usize, seed: u64) -> FeatureSet {
    let mut r = rng(seed);
    FeatureSet::from_rows((0..frames).map(|_| model.sample(&mut r))).expect("finite samples")
}

/// Router with `clusters` specialist models in `d` dimensions.
pub fn router(d: usize, clusters: usize) -> RouterConfig {
    let models = (0..clusters).map(|i| axis_model(d, i % d)).collect();
    RouterConfig::new(
        Thresholds::Global(0.0),
        Policy::FirstMatch,
        ScoreForm::LogDifference,
        models,
        mixture(d, clusters),
    )
    .expect("consistent router")
}

pub fn scenario_path(fig: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(fig)
        .join(format!("{fig}.json"))
}

pub fn scenario(fig: &str) -> Scenario {
    Scenario::load(scenario_path(fig)).expect("bundled scenario loads")
}
