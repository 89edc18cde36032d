//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits nonzero if any criterion fails.
//!
//! ```text
//! cargo test -p triage-cli --test acceptance
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use triage_core::gmm::{em_fit_traced, log_sum_exp, GaussianComponent};
use triage_core::registry::MutationOp;
use triage_core::sim::{self, EventKind, EventLog};
use triage_core::{
    allot_patient, em_fit, gaussian_log_density, gmm_log_density, sequence_log_likelihood,
    Capacity, Cluster, ClusterSpec, EmConfig, FeatureSet, GmmModel, Policy, Registry,
    RegistryError, RouterConfig, Scenario, ScoreForm, Thresholds,
};

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn random_spd<R: Rng>(r: &mut R, d: usize) -> DMatrix<f64> {
    let mut l = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            l[(i, j)] = if i == j {
                r.random_range(0.3..2.0)
            } else {
                r.random_range(-1.0..1.0)
            };
        }
    }
    let s = &l * l.transpose() + DMatrix::identity(d, d) * 0.1;
    (&s + s.transpose()) * 0.5
}

fn random_vec<R: Rng>(r: &mut R, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-scale..scale)).collect()
}

fn naive_pdf(x: &[f64], mu: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let inv = cov.clone().try_inverse().unwrap();
    let diff = nalgebra::DVector::from_iterator(d, x.iter().zip(mu).map(|(a, b)| a - b));
    let q = (diff.transpose() * inv * &diff)[(0, 0)];
    (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(d as i32) * cov.determinant()).sqrt()
}

fn density_correctness() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let s = random_spd(&mut r, 2);
        let mu = random_vec(&mut r, 2, 3.0);
        let x = random_vec(&mut r, 2, 5.0);
        let got = gaussian_log_density(
            &x,
            &GaussianComponent::new(1.0, mu.clone(), s.clone()).unwrap(),
        )
        .unwrap();
        let (a, b, c) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
        let det = a * c - b * b;
        let (dx, dy) = (x[0] - mu[0], x[1] - mu[1]);
        let q = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
        let want = -(2.0 * std::f64::consts::PI).ln() - 0.5 * det.ln() - 0.5 * q;
        worst = worst.max((got - want).abs());
    }
    ensure(worst <= 1e-12, || format!("closed-form error {worst:e}"))?;

    let m = GmmModel::new(vec![
        GaussianComponent::new(0.3, vec![-2.0], DMatrix::from_element(1, 1, 0.5)).unwrap(),
        GaussianComponent::new(0.5, vec![1.0], DMatrix::from_element(1, 1, 1.5)).unwrap(),
        GaussianComponent::new(0.2, vec![4.0], DMatrix::from_element(1, 1, 0.2)).unwrap(),
    ])
    .unwrap();
    let (lo, hi, n) = (-15.0, 15.0, 6000);
    let h = (hi - lo) / n as f64;
    let f = |x: f64| gmm_log_density(&[x], &m).unwrap().exp();
    let inner: f64 = (1..n)
        .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h))
        .sum();
    let integral = (f(lo) + f(hi) + inner) * h / 3.0;
    ensure((integral - 1.0).abs() < 1e-3, || {
        format!("quadrature {integral}")
    })?;
    Ok(format!(
        "max closed-form error {worst:.1e}, integral {integral:.6}"
    ))
}

fn mixture_fidelity() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let d = r.random_range(1..=4);
        let l = r.random_range(1..=4);
        let raw: Vec<f64> = (0..l).map(|_| r.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        w[l - 1] = 1.0 - w[..l - 1].iter().sum::<f64>();
        let parts: Vec<(f64, Vec<f64>, DMatrix<f64>)> = w
            .iter()
            .map(|&wi| (wi, random_vec(&mut r, d, 2.0), random_spd(&mut r, d)))
            .collect();
        let m = GmmModel::new(
            parts
                .iter()
                .map(|(wi, mu, s)| GaussianComponent::new(*wi, mu.clone(), s.clone()).unwrap())
                .collect(),
        )
        .unwrap();
        let x = random_vec(&mut r, d, 2.0);
        let naive: f64 = parts
            .iter()
            .map(|(wi, mu, s)| wi * naive_pdf(&x, mu, s))
            .sum();
        worst = worst.max((gmm_log_density(&x, &m).unwrap() - naive.ln()).abs());
        let t = random_vec(&mut r, 5, 40.0);
        let direct = t.iter().map(|v| v.exp()).sum::<f64>().ln();
        worst = worst.max((log_sum_exp(t.iter().copied()) - direct).abs() / direct.abs().max(1.0));
    }
    ensure(worst <= 1e-9, || format!("log-sum-exp error {worst:e}"))?;

    let mut additivity: f64 = 0.0;
    let m = GmmModel::new(vec![
        GaussianComponent::new(0.6, vec![0.0, 0.0], random_spd(&mut r, 2)).unwrap(),
        GaussianComponent::new(0.4, vec![2.0, -1.0], random_spd(&mut r, 2)).unwrap(),
    ])
    .unwrap();
    for _ in 0..100 {
        let a = FeatureSet::from_rows((0..7).map(|_| random_vec(&mut r, 2, 3.0))).unwrap();
        let b = FeatureSet::from_rows((0..5).map(|_| random_vec(&mut r, 2, 3.0))).unwrap();
        let mut ab = a.clone();
        ab.extend(&b).unwrap();
        let split =
            sequence_log_likelihood(&a, &m).unwrap() + sequence_log_likelihood(&b, &m).unwrap();
        additivity = additivity.max((sequence_log_likelihood(&ab, &m).unwrap() - split).abs());
    }
    ensure(additivity <= 1e-9, || {
        format!("additivity error {additivity:e}")
    })?;
    Ok(format!(
        "max mixture error {worst:.1e}, additivity error {additivity:.1e}"
    ))
}

fn em_sanity() -> Outcome {
    let mut r = rng(3);
    let truth = GmmModel::single(vec![1.0, -2.0, 0.5], random_spd(&mut r, 3)).unwrap();
    let rows: Vec<Vec<f64>> = (0..500).map(|_| truth.sample(&mut r)).collect();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..3)
        .map(|j| rows.iter().map(|x| x[j]).sum::<f64>() / n)
        .collect();
    let mut cov = DMatrix::<f64>::zeros(3, 3);
    for x in &rows {
        for i in 0..3 {
            for j in 0..3 {
                cov[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]) / n;
            }
        }
    }
    let fit = em_fit(
        &FeatureSet::from_rows(rows).unwrap(),
        1,
        &EmConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    let c = &fit.components()[0];
    let mut mle_err: f64 = 0.0;
    for i in 0..3 {
        mle_err = mle_err.max((c.mean()[i] - mean[i]).abs());
        for j in 0..3 {
            mle_err = mle_err.max((c.covariance()[(i, j)] - cov[(i, j)]).abs());
        }
    }
    ensure(mle_err <= 1e-6, || format!("MLE error {mle_err:e}"))?;

    let mix = GmmModel::new(vec![
        GaussianComponent::new(0.5, vec![0.0, 0.0], random_spd(&mut r, 2)).unwrap(),
        GaussianComponent::new(0.3, vec![3.0, 1.0], random_spd(&mut r, 2)).unwrap(),
        GaussianComponent::new(0.2, vec![-2.0, 4.0], random_spd(&mut r, 2)).unwrap(),
    ])
    .unwrap();
    let data = FeatureSet::from_rows((0..600).map(|_| mix.sample(&mut r))).unwrap();
    let mut worst_drop: f64 = 0.0;
    for seed in 0..10 {
        let t = em_fit_traced(&data, 3, &EmConfig::with_seed(seed)).map_err(|e| e.to_string())?;
        for w in t.log_likelihoods.windows(2) {
            worst_drop = worst_drop.min(w[1] - w[0]);
        }
    }
    ensure(worst_drop >= -1e-8, || {
        format!("log-likelihood decreased by {}", -worst_drop)
    })?;

    let mut recovered = 0;
    for seed in 0..10u64 {
        let mut r = rng(100 + seed);
        let rows = (0..1000).map(|i| {
            let z: f64 = StandardNormal.sample(&mut r);
            vec![if i % 2 == 0 { -5.0 } else { 5.0 } + z]
        });
        let m = em_fit(
            &FeatureSet::from_rows(rows).unwrap(),
            2,
            &EmConfig::with_seed(seed),
        )
        .map_err(|e| e.to_string())?;
        let mut mu: Vec<f64> = m.components().iter().map(|c| c.mean()[0]).collect();
        mu.sort_by(f64::total_cmp);
        if (mu[0] + 5.0).abs() < 0.2 && (mu[1] - 5.0).abs() < 0.2 {
            recovered += 1;
        }
    }
    ensure(recovered >= 9, || format!("recovered {recovered}/10"))?;
    Ok(format!(
        "MLE error {mle_err:.1e}, worst step {worst_drop:.1e}, recovered {recovered}/10"
    ))
}

fn routing_accuracy() -> Outcome {
    const D: usize = 4;
    let gens: Vec<GmmModel> = (0..3)
        .map(|axis| {
            let mut mean = vec![0.0; D];
            mean[axis] = 4.0;
            GmmModel::single(mean, DMatrix::identity(D, D)).unwrap()
        })
        .collect();
    let mut r = rng(4);
    let mut pooled = FeatureSet::empty(D);
    let mut models = Vec::new();
    for (i, g) in gens.iter().enumerate() {
        let data = FeatureSet::from_rows((0..2000).map(|_| g.sample(&mut r))).unwrap();
        pooled.extend(&data).unwrap();
        models.push(em_fit(&data, 2, &EmConfig::with_seed(i as u64)).map_err(|e| e.to_string())?);
    }
    let reference = em_fit(&pooled, 6, &EmConfig::with_seed(9)).map_err(|e| e.to_string())?;
    let cfg = RouterConfig::new(
        Thresholds::Global(0.0),
        Policy::FirstMatch,
        ScoreForm::LogDifference,
        models,
        reference,
    )
    .map_err(|e| e.to_string())?;
    let mut correct = 0;
    for n in 0..1000 {
        let truth = n % 3;
        let set = FeatureSet::from_rows((0..20).map(|_| gens[truth].sample(&mut r))).unwrap();
        if allot_patient(&format!("p{n}"), &set, &cfg)
            .map_err(|e| e.to_string())?
            .chosen_cluster
            == truth + 1
        {
            correct += 1;
        }
    }
    ensure(correct >= 990, || {
        format!("{correct}/1000 routed correctly")
    })?;
    Ok(format!("{correct}/1000 routed to their generator"))
}

fn registry_invariants() -> Outcome {
    let spec = |label: &str, physicians, capacity| ClusterSpec {
        label: label.into(),
        physicians,
        capacity,
    };
    let specs = vec![
        spec("a", 3, Capacity::Bounded(4)),
        spec("b", 5, Capacity::Bounded(2)),
        spec("c", 7, Capacity::Bounded(3)),
        spec("general", 4, Capacity::Unbounded),
    ];
    let within_capacity = |reg: &Registry| {
        reg.clusters()
            .iter()
            .flat_map(|c| c.physicians())
            .all(|p| match p.capacity() {
                Capacity::Bounded(n) => p.load() <= n,
                Capacity::Unbounded => true,
            })
    };

    let mut reg = Registry::new(&specs).map_err(|e| e.to_string())?;
    let mut r = rng(5);
    let mut live = Vec::new();
    let (mut assigned, mut released) = (0usize, 0usize);
    for n in 0..100_000 {
        if live.is_empty() || r.random_bool(0.55) {
            let cluster = r.random_range(1..=4);
            match reg.assign(cluster, &format!("p{n}"), n as f64) {
                Ok(pid) => {
                    live.push((format!("p{n}"), pid));
                    assigned += 1;
                }
                Err(RegistryError::Saturated(_)) => {}
                Err(e) => return Err(e.to_string()),
            }
        } else {
            let (id, pid) = live.swap_remove(r.random_range(0..live.len()));
            reg.release(pid, &id, n as f64).map_err(|e| e.to_string())?;
            released += 1;
        }
        ensure(within_capacity(&reg), || {
            format!("capacity violated at op {n}")
        })?;
        ensure(reg.total_assigned() == assigned - released, || {
            format!("conservation violated at op {n}")
        })?;
    }
    let replayed = Registry::replay(&specs, reg.mutations()).map_err(|e| e.to_string())?;
    ensure(replayed == reg, || "replay diverged".into())?;

    let mut reg = Registry::new(&specs).map_err(|e| e.to_string())?;
    for n in 0..20_000 {
        let _ = reg.assign(r.random_range(1..=4), &format!("q{n}"), n as f64);
        for c in reg.clusters() {
            let loads = c.loads();
            let spread = loads.iter().max().unwrap() - loads.iter().min().unwrap();
            ensure(spread <= 1, || format!("imbalance {loads:?}"))?;
        }
    }

    for _ in 0..1000 {
        let v = r.random_range(1..30);
        let loads: Vec<usize> = (0..v).map(|_| r.random_range(0..5)).collect();
        let mut best = 0;
        for j in 1..v {
            if loads[j] < loads[best] {
                best = j;
            }
        }
        let got = Cluster::with_loads(1, &loads, Capacity::Unbounded)
            .min_loaded_physician()
            .map_err(|e| e.to_string())?;
        ensure(got.ordinal == best + 1, || {
            format!("argmin {loads:?}: got {}", got.ordinal)
        })?;
    }
    Ok(format!(
        "{assigned} assigns, {released} releases, replay identical"
    ))
}

/// First time every physician of each cluster was at capacity, rebuilt from
/// the registry's mutation log.
fn full_times_from_mutations(s: &Scenario, reg: &Registry) -> Vec<Option<f64>> {
    let mut loads: Vec<Vec<usize>> = std::iter::once(Vec::new())
        .chain(s.clusters.iter().map(|c| vec![0; c.physicians]))
        .collect();
    let mut out = vec![None; s.clusters.len() + 1];
    for m in reg.mutations() {
        let (c, Some(j)) = (m.cluster, m.physician) else {
            continue;
        };
        match m.op {
            MutationOp::Assign => loads[c][j - 1] += 1,
            MutationOp::Release => loads[c][j - 1] -= 1,
            _ => continue,
        }
        let cap = s.clusters[c - 1].capacity;
        if out[c].is_none() && loads[c].iter().all(|&l| !cap.admits(l)) {
            out[c] = Some(m.time);
        }
    }
    out
}

/// Specialist-bound arrivals after their cluster saturated, and how many of
/// those overflowed.
fn post_saturation_overflow(log: &EventLog, full: &[Option<f64>]) -> (usize, usize) {
    let general = log.header.clusters.len();
    let overflowed: std::collections::HashSet<&str> = log
        .events()
        .filter(|e| e.kind == EventKind::OverflowToGeneral)
        .filter_map(|e| e.patient_id.as_deref())
        .collect();
    let mut bound = 0;
    let mut over = 0;
    for e in log.events().filter(|e| e.kind == EventKind::Arrival) {
        let c = e.cluster.unwrap_or(general);
        if c < general && full[c].is_some_and(|t| e.time > t) {
            bound += 1;
            if overflowed.contains(e.patient_id.as_deref().unwrap_or("")) {
                over += 1;
            }
        }
    }
    (bound, over)
}

fn saturation(fig: &str, target: f64) -> Outcome {
    let base = Scenario::load(scenarios().join(fig).join(format!("{fig}.json")))
        .map_err(|e| e.to_string())?;
    let specialists = base.clusters.len() - 1;
    let mut hits = 0;
    let mut firsts = Vec::new();
    let (mut bound, mut over) = (0, 0);
    for seed in 0..10 {
        let mut s = base.clone();
        s.seed = seed;
        let (log, reg) = sim::run_detailed(&s).map_err(|e| e.to_string())?;
        let full = log.first_full_times();
        ensure(full == full_times_from_mutations(&s, &reg), || {
            format!("seed {seed}: event log and mutation log disagree")
        })?;
        let first = full[1..=specialists]
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if (75.0..=95.0).contains(&first) {
            hits += 1;
        }
        firsts.push(first);
        let (b, o) = post_saturation_overflow(&log, &full);
        bound += b;
        over += o;
    }
    firsts.sort_by(f64::total_cmp);
    let median = firsts[firsts.len() / 2];
    ensure(hits >= 8, || {
        format!("{hits}/10 seeds saturate in [75, 95]; times {firsts:.1?}")
    })?;
    ensure(bound > 0 && over == bound, || {
        format!("{over}/{bound} post-saturation arrivals overflowed")
    })?;
    Ok(format!(
        "{hits}/10 seeds in [75, 95], median {median:.1} min (target {target}), {over}/{bound} later arrivals overflowed"
    ))
}

fn fig_saturation() -> Outcome {
    let a = saturation("fig1", 85.0)?;
    let b = saturation("fig2", 82.0)?;
    Ok(format!("fig1: {a}; fig2: {b}"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_triage"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!("triage {args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn determinism() -> Outcome {
    let sc = scenarios();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |s: &str| dir.path().join(s);
    let fig1 = sc.join("fig1/fig1.json");
    for run in ["sim_a", "sim_b"] {
        run_cli(&[
            "simulate",
            "--scenario",
            fig1.to_str().unwrap(),
            "--seed",
            "42",
            "--out",
            p(run).to_str().unwrap(),
        ])?;
    }
    let read = |f: PathBuf| fs::read(&f).map_err(|e| format!("{}: {e}", f.display()));
    ensure(
        read(p("sim_a/events.jsonl"))? == read(p("sim_b/events.jsonl"))?,
        || "event logs differ".into(),
    )?;

    run_cli(&[
        "synth",
        "--population",
        sc.join("fig1/population.json").to_str().unwrap(),
        "--schema",
        sc.join("schema.json").to_str().unwrap(),
        "--count",
        "600",
        "--seed",
        "11",
        "--out",
        p("train.jsonl").to_str().unwrap(),
    ])?;
    for run in ["models_a", "models_b"] {
        run_cli(&[
            "train",
            "--data",
            p("train.jsonl").to_str().unwrap(),
            "--schema",
            sc.join("schema.json").to_str().unwrap(),
            "--seed",
            "42",
            "--clusters",
            "Cardiologist,Nephrologist",
            "--out",
            p(run).to_str().unwrap(),
        ])?;
    }
    let files = [
        "cluster_1.json",
        "cluster_2.json",
        "reference.json",
        "router.json",
    ];
    for f in files {
        ensure(
            read(p("models_a").join(f))? == read(p("models_b").join(f))?,
            || format!("{f} differs"),
        )?;
    }
    Ok(format!(
        "event logs and {} model files byte-identical",
        files.len()
    ))
}

fn stagnation_rule() -> Outcome {
    let s = Scenario::load(scenarios().join("fig1/fig1.json")).map_err(|e| e.to_string())?;
    let (log, reg) = sim::run_detailed(&s).map_err(|e| e.to_string())?;
    let full = full_times_from_mutations(&s, &reg);
    let mut notes = Vec::new();
    let specialists = s.clusters.len() - 1;
    for (c, sat) in full.iter().enumerate().skip(1).take(specialists) {
        let sat = sat.ok_or_else(|| format!("cluster {c} never saturated"))?;
        let flag = log
            .events()
            .find(|e| e.kind == EventKind::StagnationFlag && e.cluster == Some(c))
            .map(|e| e.time)
            .ok_or_else(|| format!("cluster {c} never flagged"))?;
        // the flag must come from the first window that starts at or after saturation
        let window_start = flag - s.delta_t;
        ensure(
            window_start >= sat && window_start - sat < s.delta_t,
            || format!("cluster {c}: saturated {sat:.2}, flagged {flag:.2}"),
        )?;
        notes.push(format!("cluster {c} full {sat:.1}, flagged {flag:.1}"));
    }
    Ok(notes.join("; "))
}

struct Criterion {
    id: u8,
    name: &'static str,
    limit: Duration,
    check: fn() -> Outcome,
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            id: 1,
            name: "density correctness",
            limit: Duration::from_secs(10),
            check: density_correctness,
        },
        Criterion {
            id: 2,
            name: "mixture and sequence fidelity",
            limit: Duration::from_secs(10),
            check: mixture_fidelity,
        },
        Criterion {
            id: 3,
            name: "EM sanity",
            limit: Duration::from_secs(60),
            check: em_sanity,
        },
        Criterion {
            id: 4,
            name: "routing accuracy",
            limit: Duration::from_secs(60),
            check: routing_accuracy,
        },
        Criterion {
            id: 5,
            name: "registry invariants",
            limit: Duration::from_secs(30),
            check: registry_invariants,
        },
        Criterion {
            id: 6,
            name: "saturation reproduction",
            limit: Duration::from_secs(120),
            check: fig_saturation,
        },
        Criterion {
            id: 7,
            name: "determinism",
            limit: Duration::from_secs(60),
            check: determinism,
        },
        Criterion {
            id: 8,
            name: "stagnation rule",
            limit: Duration::from_secs(120),
            check: stagnation_rule,
        },
    ];
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.check)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.limit => {
                Err(format!("{detail}; took {elapsed:.1?}, limit {:?}", c.limit))
            }
            other => other,
        };
        match outcome {
            Ok(detail) => println!(
                "[PASS] criterion {} {} ({elapsed:.2?}): {detail}",
                c.id, c.name
            ),
            Err(why) => {
                failed += 1;
                println!(
                    "[FAIL] criterion {} {} ({elapsed:.2?}): {why}",
                    c.id, c.name
                );
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
