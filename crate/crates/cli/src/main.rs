use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use triage_core::{Policy, ScoreForm};

mod commands;
mod manifest;

#[derive(Debug, Parser)]
#[command(
    name = "triage",
    version,
    about = "Route requests to specialist clusters and simulate dispatch load"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one mixture per labeled cluster plus the pooled reference model.
    Train(TrainArgs),
    /// Route patient records and write one decision per record.
    Route(RouteArgs),
    /// Run a scenario and write the event log and report tables.
    Simulate(SimulateArgs),
    /// Re-derive report tables from a saved event log.
    Report(ReportArgs),
    /// Sweep thresholds over labeled data and print the operating curve.
    CalibrateThreshold(CalibrateArgs),
    /// Draw labeled synthetic records from a population file.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct RoutingOverrides {
    #[arg(long, value_parser = parse_policy)]
    policy: Option<Policy>,
    #[arg(long = "score-form", value_parser = parse_score_form)]
    score_form: Option<ScoreForm>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Labeled JSON-lines records.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Components per cluster model.
    #[arg(long, default_value_t = 2)]
    components: usize,
    /// Components of the reference model (default: components x clusters).
    #[arg(long)]
    reference_components: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    diagonal: bool,
    /// Specialist labels in cluster order (default: order of first appearance).
    #[arg(long, value_delimiter = ',')]
    clusters: Option<Vec<String>>,
    /// Labels that belong to the general cluster and get no model.
    #[arg(long = "general-label")]
    general_labels: Vec<String>,
    #[command(flatten)]
    routing: RoutingOverrides,
}

#[derive(Debug, Args)]
struct RouteArgs {
    /// JSON-lines patient records.
    #[arg(long)]
    records: PathBuf,
    /// Directory holding router.json (as written by `train`).
    #[arg(long)]
    models: PathBuf,
    /// Feature schema (default: schema.json inside --models).
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Output path; `.jsonl` or `.json` writes JSON lines, anything else CSV.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    routing: RoutingOverrides,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Event log written by `simulate`.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Labeled held-out JSON-lines records.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Target false-acceptance rate.
    #[arg(long = "target-far", default_value_t = 0.01)]
    target_far: f64,
    /// Maximum number of curve points printed.
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Write the curve here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "score-form", value_parser = parse_score_form)]
    score_form: Option<ScoreForm>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    population: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse()
}

fn parse_score_form(s: &str) -> Result<ScoreForm, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Route(a) => commands::route(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Report(a) => commands::report(a),
        Command::CalibrateThreshold(a) => commands::calibrate(a),
        Command::Synth(a) => commands::synth(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
