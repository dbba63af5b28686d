//! `nrule`: run, validate and list reduction scenarios, or run the acceptance suite.
//!
//! Exit codes: 0 success, 1 validation or flag error, 2 runtime error.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use nrule_core::acceptance::{run_acceptance, AcceptanceOptions};
use nrule_core::ensemble::{run_ensemble, EnsembleConfig, EnsembleSummary};
use nrule_core::scenario::{build_builtin, catalog, parse, validate_semantics, Diagnostic, Scenario, ScenarioFlags, Severity};
use nrule_core::trajectory::TrajectoryRecord;

const WORKERS_ENV: &str = "NRULE_WORKERS";

#[derive(Parser)]
#[command(name = "nrule", version, about = "Stochastic state-reduction trajectory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of trajectories and write the summary or event log.
    Run(RunArgs),
    /// Check a scenario file and print its diagnostics.
    Validate(ValidateArgs),
    /// List the built-in scenarios.
    List,
    /// Run the acceptance suite and print a pass/fail table.
    Accept(AcceptArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Name of a built-in scenario (see `nrule list`).
    #[arg(long)]
    builtin: Option<String>,
    /// Path to a scenario file.
    #[arg(long)]
    file: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    source: Source,
    /// Number of trajectories.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    n: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time step; defaults to 1e-3 of the scenario time scale.
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write output here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Remove phantom components once they are marked.
    #[arg(long)]
    prune_phantoms: bool,
    /// Keep the accumulated trigger hazard after a no-op hit.
    #[arg(long)]
    noop_no_reset: bool,
    /// Include every trajectory record in JSON output.
    #[arg(long)]
    trajectories: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file to check.
    #[arg(required_unless_present = "builtin", conflicts_with = "builtin")]
    path: Option<PathBuf>,
    #[arg(long)]
    builtin: Option<String>,
}

#[derive(Args)]
struct AcceptArgs {
    #[arg(long)]
    seed: Option<u64>,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (msg, code) = match self {
            Failure::Invalid(m) => (m, 1),
            Failure::Runtime(m) => (m, 2),
        };
        let mut err = io::stderr().lock();
        let _ = writeln!(err, "{}", msg.trim_end());
        ExitCode::from(code)
    }
}

fn diagnostics_text(origin: &str, diags: &[Diagnostic]) -> String {
    let mut s = String::new();
    for d in diags {
        let sep = if d.line > 0 { ":" } else { ": " };
        let _ = writeln!(s, "{origin}{sep}{d}");
    }
    s
}

fn load(builtin: Option<&str>, file: Option<&PathBuf>) -> Result<(Scenario, String), Failure> {
    match (builtin, file) {
        (Some(name), _) => build_builtin(name)
            .map(|s| (s, format!("builtin:{name}")))
            .map_err(|e| Failure::Invalid(e.to_string())),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
            let origin = path.display().to_string();
            parse(&text)
                .map(|s| (s, origin.clone()))
                .map_err(|d| Failure::Invalid(diagnostics_text(&origin, &d)))
        }
        (None, None) => Err(Failure::Invalid("no scenario given".into())),
    }
}

fn workers() -> Result<Option<usize>, Failure> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Invalid(format!("{WORKERS_ENV}={v:?} is not a worker count"))),
        Err(_) => Ok(None),
    }
}

#[derive(Serialize)]
struct RunConfig<'a> {
    scenario: &'a str,
    source: &'a str,
    n: u64,
    seed: u64,
    dt: f64,
    format: Format,
    flags: ScenarioFlags,
}

#[derive(Serialize)]
struct RunOutput<'a> {
    config: RunConfig<'a>,
    summary: &'a EnsembleSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectories: Option<&'a [TrajectoryRecord]>,
}

#[derive(Serialize)]
struct EventRow<'a> {
    trajectory: u64,
    event_index: usize,
    time: f64,
    chosen: &'a str,
    outcome: &'static str,
    s_before: f64,
    s_after: f64,
}

fn event_csv(records: &[TrajectoryRecord]) -> Result<String, Failure> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let fail = |e: csv::Error| Failure::Runtime(e.to_string());
    // Written by hand so an empty log still has a header.
    w.write_record(["trajectory", "event_index", "time", "chosen", "outcome", "s_before", "s_after"])
        .map_err(fail)?;
    for r in records {
        for (i, e) in r.events.iter().enumerate() {
            w.serialize(EventRow {
                trajectory: r.stream_id,
                event_index: i,
                time: e.time,
                chosen: &e.chosen_name,
                outcome: e.outcome.as_str(),
                s_before: e.s_before,
                s_after: e.s_after,
            })
            .map_err(fail)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Failure::Runtime(e.to_string()))
}

fn cmd_run(args: &RunArgs) -> Result<String, Failure> {
    let (scenario, source) = load(args.source.builtin.as_deref(), args.source.file.as_ref())?;
    let dt = match args.dt {
        Some(dt) if !(dt > 0.0 && dt.is_finite()) => {
            return Err(Failure::Invalid(format!("--dt must be positive and finite, got {dt}")))
        }
        Some(dt) => dt,
        None => scenario.default_dt(),
    };
    let mut flags = scenario.flags;
    flags.phantom_prune |= args.prune_phantoms;
    if args.noop_no_reset {
        flags.noop_resets_trigger = false;
    }
    let config = EnsembleConfig {
        n: args.n,
        seed: args.seed,
        dt: Some(dt),
        flags: Some(flags),
        workers: workers()?,
        keep_records: args.format == Format::Csv || args.trajectories,
        ..Default::default()
    };
    let run = run_ensemble(&scenario, &config).map_err(|e| Failure::Runtime(e.to_string()))?;
    let records = run.records.as_deref().unwrap_or_default();
    match args.format {
        Format::Csv => event_csv(records),
        Format::Json => {
            let output = RunOutput {
                config: RunConfig {
                    scenario: &scenario.name,
                    source: &source,
                    n: args.n,
                    seed: args.seed,
                    dt,
                    format: args.format,
                    flags,
                },
                summary: &run.summary,
                trajectories: args.trajectories.then_some(records),
            };
            serde_json::to_string_pretty(&output)
                .map(|s| s + "\n")
                .map_err(|e| Failure::Runtime(e.to_string()))
        }
    }
}

fn cmd_validate(args: &ValidateArgs) -> Result<String, Failure> {
    let (scenario, origin) = load(args.builtin.as_deref(), args.path.as_ref())?;
    let warnings = validate_semantics(&scenario);
    debug_assert!(warnings.iter().all(|d| d.severity == Severity::Warning));
    let mut err = io::stderr().lock();
    let _ = err.write_all(diagnostics_text(&origin, &warnings).as_bytes());
    Ok(format!("{origin}: ok, {} warning(s)\n", warnings.len()))
}

fn cmd_list() -> String {
    let mut out = String::new();
    for entry in catalog() {
        let _ = writeln!(out, "{:<24}{}", entry.name, entry.summary);
    }
    out
}

fn cmd_accept(args: &AcceptArgs) -> Result<(String, bool), Failure> {
    let mut opts = AcceptanceOptions {
        workers: workers()?,
        ..Default::default()
    };
    if let Some(seed) = args.seed {
        opts.seed = seed;
    }
    let (report, times) = run_acceptance(&opts);
    let total: std::time::Duration = times.iter().sum();
    log::info!("acceptance suite took {total:.2?}");
    Ok((report.render(), report.all_passed()))
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display()))),
        None => io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string())),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args).and_then(|text| emit(&text, args.out.as_ref())),
        Command::Validate(args) => cmd_validate(args).and_then(|text| emit(&text, None)),
        Command::List => emit(&cmd_list(), None),
        Command::Accept(args) => cmd_accept(args).and_then(|(text, passed)| {
            emit(&text, None)?;
            if passed {
                Ok(())
            } else {
                Err(Failure::Runtime("acceptance suite failed".into()))
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
