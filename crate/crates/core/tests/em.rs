mod common;

use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use triage_core::gmm::{em_fit_traced, CovarianceKind, GaussianComponent};
use triage_core::{em_fit, EmConfig, FeatureSet, GmmModel};

fn two_blobs(seed: u64, n: usize) -> FeatureSet {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = if i % 2 == 0 { -5.0 } else { 5.0 };
            let z: f64 = StandardNormal.sample(&mut r);
            vec![c + z]
        })
        .collect();
    FeatureSet::from_rows(rows).unwrap()
}

#[test]
fn single_component_is_the_sample_mle() {
    let mut r = rng(10);
    let cov = random_spd(&mut r, 3);
    let truth = GmmModel::single(vec![1.0, -2.0, 0.5], cov).unwrap();
    let rows: Vec<Vec<f64>> = (0..500).map(|_| truth.sample(&mut r)).collect();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..3)
        .map(|j| rows.iter().map(|x| x[j]).sum::<f64>() / n)
        .collect();
    let mut s = DMatrix::<f64>::zeros(3, 3);
    for x in &rows {
        for i in 0..3 {
            for j in 0..3 {
                s[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]) / n;
            }
        }
    }
    let fit = em_fit(
        &FeatureSet::from_rows(rows).unwrap(),
        1,
        &EmConfig::default(),
    )
    .unwrap();
    let c = &fit.components()[0];
    for i in 0..3 {
        assert!((c.mean()[i] - mean[i]).abs() < 1e-6);
        for j in 0..3 {
            assert!((c.covariance()[(i, j)] - s[(i, j)]).abs() < 1e-6);
        }
    }
}

#[test]
fn log_likelihood_never_decreases() {
    let mut r = rng(11);
    let truth = GmmModel::new(vec![
        GaussianComponent::new(0.5, vec![0.0, 0.0], random_spd(&mut r, 2)).unwrap(),
        GaussianComponent::new(0.3, vec![3.0, 1.0], random_spd(&mut r, 2)).unwrap(),
        GaussianComponent::new(0.2, vec![-2.0, 4.0], random_spd(&mut r, 2)).unwrap(),
    ])
    .unwrap();
    let data = FeatureSet::from_rows((0..600).map(|_| truth.sample(&mut r))).unwrap();
    for seed in 0..10 {
        for kind in [CovarianceKind::Full, CovarianceKind::Diagonal] {
            let cfg = EmConfig {
                covariance: kind,
                ..EmConfig::with_seed(seed)
            };
            let t = em_fit_traced(&data, 3, &cfg).unwrap();
            for w in t.log_likelihoods.windows(2) {
                assert!(w[1] - w[0] >= -1e-8, "seed {seed}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn recovers_separated_components() {
    let mut good = 0;
    for seed in 0..10 {
        let data = two_blobs(100 + seed, 1000);
        let m = em_fit(&data, 2, &EmConfig::with_seed(seed)).unwrap();
        let mut means: Vec<f64> = m.components().iter().map(|c| c.mean()[0]).collect();
        means.sort_by(f64::total_cmp);
        if (means[0] + 5.0).abs() < 0.2 && (means[1] - 5.0).abs() < 0.2 {
            good += 1;
        }
    }
    assert!(good >= 9, "{good}/10");
}

#[test]
fn fit_is_reproducible_for_a_seed() {
    let data = two_blobs(7, 400);
    let a = em_fit(&data, 2, &EmConfig::with_seed(3)).unwrap();
    let b = em_fit(&data, 2, &EmConfig::with_seed(3)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn variance_floor_keeps_duplicated_points_fittable() {
    let mut r = rng(12);
    let mut rows: Vec<Vec<f64>> = (0..50)
        .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect();
    rows.extend(std::iter::repeat_n(vec![3.0, 3.0], 50));
    let m = em_fit(
        &FeatureSet::from_rows(rows).unwrap(),
        3,
        &EmConfig::default(),
    )
    .unwrap();
    for c in m.components() {
        assert!(c
            .covariance()
            .diagonal()
            .iter()
            .all(|v| *v > 0.0 && v.is_finite()));
    }
}

#[test]
fn too_few_points_is_an_error() {
    let data = FeatureSet::from_rows(vec![vec![0.0], vec![1.0]]).unwrap();
    assert!(em_fit(&data, 3, &EmConfig::default()).is_err());
}
