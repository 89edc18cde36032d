use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use triage_core::features::{self, read_records, write_records, FeatureSchema, PatientRecord};
use triage_core::gmm::{em_fit, CovarianceKind, EmConfig, FeatureSet};
use triage_core::router::{allot_patient, RouterConfig, RouterConfigFile, ScoreSample, Thresholds};
use triage_core::sim::{self, EventLog, Scenario, ScenarioFile};
use triage_core::RoutingDecision;

use crate::manifest::Manifest;
use crate::{
    CalibrateArgs, ReportArgs, RouteArgs, RoutingOverrides, SimulateArgs, SynthArgs, TrainArgs,
};

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn load_router(models: &Path, overrides: Option<&RoutingOverrides>) -> Result<RouterConfig> {
    let path = models.join("router.json");
    let mut cfg = RouterConfig::load(&path)?;
    if let Some(o) = overrides {
        if let Some(p) = o.policy {
            cfg.set_policy(p);
        }
        if let Some(f) = o.score_form {
            cfg.set_score_form(f);
        }
        if let Some(t) = o.threshold {
            cfg.set_thresholds(Thresholds::Global(t))?;
        }
    }
    Ok(cfg)
}

fn router_inputs(manifest: &mut Manifest, router_path: &Path) -> Result<()> {
    manifest.input(router_path)?;
    let text = fs::read_to_string(router_path)?;
    let file: RouterConfigFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", router_path.display()))?;
    let base = router_path.parent().unwrap_or_else(|| Path::new("."));
    for p in file
        .model_paths
        .iter()
        .chain(Some(&file.reference_model_path))
    {
        manifest.input(&base.join(p))?;
    }
    Ok(())
}

fn labeled_sets(
    records: &[PatientRecord],
    schema: &FeatureSchema,
) -> Result<Vec<(String, FeatureSet)>> {
    records
        .iter()
        .map(|r| {
            let label = r
                .label
                .clone()
                .with_context(|| format!("record `{}` has no label", r.patient_id))?;
            let x = features::extract_features(r, schema)?;
            Ok((label, x.features))
        })
        .collect()
}

pub fn train(args: TrainArgs) -> Result<()> {
    if args.components == 0 {
        bail!("--components must be >= 1");
    }
    let schema = FeatureSchema::load(&args.schema)?;
    let records = read_records(&args.data)?;
    let sets = labeled_sets(&records, &schema)?;

    let clusters: Vec<String> = match &args.clusters {
        Some(c) => c.clone(),
        None => {
            let mut seen = Vec::new();
            for (l, _) in &sets {
                if !seen.contains(l) && !args.general_labels.contains(l) {
                    seen.push(l.clone());
                }
            }
            seen
        }
    };
    if clusters.is_empty() {
        bail!("no specialist labels to train");
    }

    let em = |seed: u64| EmConfig {
        seed,
        covariance: if args.diagonal {
            CovarianceKind::Diagonal
        } else {
            CovarianceKind::Full
        },
        ..EmConfig::default()
    };

    create_dir(&args.out)?;
    let mut pooled = FeatureSet::empty(schema.dimension());
    let mut model_paths = Vec::new();
    for (i, label) in clusters.iter().enumerate() {
        let mut data = FeatureSet::empty(schema.dimension());
        for (_, set) in sets.iter().filter(|(l, _)| l == label) {
            data.extend(set)?;
        }
        if data.is_empty() {
            bail!("no training records labeled `{label}`");
        }
        pooled.extend(&data)?;
        let model = em_fit(
            &data,
            args.components,
            &em(args.seed.wrapping_add(i as u64 + 1)),
        )
        .with_context(|| format!("fitting cluster `{label}`"))?;
        let name = format!("cluster_{}.json", i + 1);
        model.save(args.out.join(&name))?;
        eprintln!("cluster {} `{label}`: {} frames", i + 1, data.len());
        model_paths.push(PathBuf::from(name));
    }
    let ref_components = args
        .reference_components
        .unwrap_or(args.components * clusters.len());
    let reference =
        em_fit(&pooled, ref_components, &em(args.seed)).context("fitting reference model")?;
    reference.save(args.out.join("reference.json"))?;

    let router = RouterConfigFile {
        thresholds: Thresholds::Global(args.routing.threshold.unwrap_or(0.0)),
        policy: args.routing.policy.unwrap_or_default(),
        score_form: args.routing.score_form.unwrap_or_default(),
        model_paths,
        reference_model_path: PathBuf::from("reference.json"),
        labels: Some(clusters.clone()),
    };
    write_json(&args.out.join("router.json"), &router)?;
    write_json(&args.out.join("schema.json"), &schema)?;

    let mut m = Manifest::new("train", Some(args.seed));
    m.input(&args.data)?;
    m.input(&args.schema)?;
    m.setting("components", args.components);
    m.setting("reference_components", ref_components);
    m.setting("diagonal", args.diagonal);
    m.setting("clusters", clusters.join(","));
    for f in ["router.json", "reference.json"] {
        m.input(&args.out.join(f))?;
    }
    m.write(args.out.join("manifest.json"))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn route(args: RouteArgs) -> Result<()> {
    let cfg = load_router(&args.models, Some(&args.routing))?;
    let schema_path = args
        .schema
        .clone()
        .unwrap_or_else(|| args.models.join("schema.json"));
    let schema = FeatureSchema::load(&schema_path)?;
    let records = read_records(&args.records)?;

    let mut seen = HashSet::new();
    let mut unknown = 0;
    let mut decisions = Vec::with_capacity(records.len());
    for r in &records {
        if !seen.insert(r.patient_id.as_str()) {
            bail!("duplicate patient_id `{}`", r.patient_id);
        }
        let x = features::extract_features(r, &schema)?;
        unknown += x.unknown_fields;
        decisions.push(allot_patient(&r.patient_id, &x.features, &cfg)?);
    }
    if unknown > 0 {
        eprintln!("warning: ignored {unknown} field values not in the schema");
    }

    let json = matches!(
        args.out.extension().and_then(|e| e.to_str()),
        Some("jsonl" | "json")
    );
    if json {
        write_decisions_jsonl(&args.out, &decisions)?;
    } else {
        write_decisions_csv(&args.out, &decisions, cfg.cluster_count() - 1)?;
    }

    let mut m = Manifest::new("route", None);
    m.input(&args.records)?;
    m.input(&schema_path)?;
    router_inputs(&mut m, &args.models.join("router.json"))?;
    m.setting("policy", cfg.policy());
    m.setting("score_form", cfg.score_form());
    m.setting("thresholds", serde_json::to_string(cfg.thresholds())?);
    m.write(sidecar(&args.out))
}

/// CSV columns: `patient_id,chosen_cluster,reason,policy,score_form,score_1..score_{k-1}`.
pub fn write_decisions_csv(
    path: &Path,
    decisions: &[RoutingDecision],
    specialists: usize,
) -> Result<()> {
    let mut out = String::from("patient_id,chosen_cluster,reason,policy,score_form");
    for i in 1..=specialists {
        out.push_str(&format!(",score_{i}"));
    }
    out.push('\n');
    for d in decisions {
        out.push_str(&format!(
            "{},{},{},{},{}",
            csv_field(&d.patient_id),
            d.chosen_cluster,
            d.reason.as_str(),
            d.policy,
            d.score_form
        ));
        for s in &d.scores {
            out.push_str(&format!(",{s}"));
        }
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_decisions_jsonl(path: &Path, decisions: &[RoutingDecision]) -> Result<()> {
    let mut buf = Vec::new();
    for d in decisions {
        serde_json::to_writer(&mut buf, d)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).with_context(|| format!("writing {}", path.display()))
}

pub fn simulate(args: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scenario)
        .with_context(|| format!("reading {}", args.scenario.display()))?;
    let file: ScenarioFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.scenario.display()))?;
    let base = args
        .scenario
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();

    let mut m = Manifest::new("simulate", None);
    m.input(&args.scenario)?;
    m.input(&base.join(&file.schema))?;
    router_inputs(&mut m, &base.join(&file.router))?;
    if let sim::PopulationRef::Path(p) = &file.arrival.population {
        m.input(&base.join(p))?;
    }

    let mut scenario = Scenario::from_file(file, &base)?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    m.seed = Some(scenario.seed);

    let (log, registry) = sim::run_detailed(&scenario)?;
    create_dir(&args.out)?;
    log.write_jsonl(args.out.join("events.jsonl"))?;
    registry.write_mutations_jsonl(args.out.join("mutations.jsonl"))?;
    registry.write_dump_csv(args.out.join("registry.csv"), scenario.horizon)?;
    let report = sim::report(&log);
    report.write_timeseries_csv(args.out.join("timeseries.csv"))?;
    report.write_overflows_csv(args.out.join("overflows.csv"))?;

    for (c, s) in log.summary() {
        eprintln!(
            "cluster {c}: {} bound, {} assigned, {} departed, {} overflowed",
            s.arrivals_bound, s.assignments, s.departures, s.overflows_from
        );
    }
    m.write(args.out.join("manifest.json"))
}

pub fn report(args: ReportArgs) -> Result<()> {
    let log = EventLog::read_jsonl(&args.log)?;
    let report = sim::report(&log);
    create_dir(&args.out)?;
    report.write_timeseries_csv(args.out.join("timeseries.csv"))?;
    report.write_overflows_csv(args.out.join("overflows.csv"))?;
    let mut m = Manifest::new("report", Some(log.header.seed));
    m.input(&args.log)?;
    m.write(args.out.join("manifest.json"))
}

pub fn calibrate(args: CalibrateArgs) -> Result<()> {
    let mut cfg = load_router(&args.models, None)?;
    if let Some(f) = args.score_form {
        cfg.set_score_form(f);
    }
    let labels: Vec<String> = cfg
        .labels()
        .context("router.json must name its clusters (`labels`) for calibration")?
        .to_vec();
    let schema_path = args
        .schema
        .clone()
        .unwrap_or_else(|| args.models.join("schema.json"));
    let schema = FeatureSchema::load(&schema_path)?;
    let records = read_records(&args.data)?;
    let sets = labeled_sets(&records, &schema)?;
    let truth: Vec<usize> = sets
        .iter()
        .map(|(l, _)| labels.iter().position(|x| x == l).map_or(0, |i| i + 1))
        .collect();
    let sets: Vec<FeatureSet> = sets.into_iter().map(|(_, s)| s).collect();
    let sample = ScoreSample::collect(&cfg, &sets, &truth)?;

    let mut out = String::from("threshold,false_accept,false_reject\n");
    for p in sample.curve(args.points) {
        out.push_str(&format!(
            "{},{},{}\n",
            p.threshold, p.false_accept, p.false_reject
        ));
    }
    let t = sample.threshold_for_far(args.target_far);
    let at = sample.point(t);
    match &args.out {
        Some(path) => {
            fs::write(path, &out).with_context(|| format!("writing {}", path.display()))?;
            let mut m = Manifest::new("calibrate-threshold", None);
            m.input(&args.data)?;
            m.input(&schema_path)?;
            router_inputs(&mut m, &args.models.join("router.json"))?;
            m.setting("target_far", args.target_far);
            m.setting("threshold", t);
            m.write(sidecar(path))?;
        }
        None => std::io::stdout().write_all(out.as_bytes())?,
    }
    eprintln!(
        "threshold {t} gives false_accept {} (target {}), false_reject {}",
        at.false_accept, args.target_far, at.false_reject
    );
    Ok(())
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let schema = FeatureSchema::load(&args.schema)?;
    let population = features::load_population(&args.population)?;
    let records: Vec<PatientRecord> =
        features::synth_patients(&population, &schema, args.count, args.seed)?
            .into_iter()
            .map(|(r, _)| r)
            .collect();
    write_records(&args.out, &records)?;
    let mut m = Manifest::new("synth", Some(args.seed));
    m.input(&args.population)?;
    m.input(&args.schema)?;
    m.setting("count", args.count);
    m.write(sidecar(&args.out))
}
