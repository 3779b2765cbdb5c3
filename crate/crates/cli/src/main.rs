//! `toolcache`: generate workloads, replay them through the cache policies and
//! render reports.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error, 3 trace
//! error, 4 remote annotation failure without a fallback.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use toolcache_core::annotator::{AnnotateError, Annotator, RemoteAnnotator, ToolManifest};
use toolcache_core::sim::{
    capacity_for, compare_grouping, run_cell, run_sweep, unique_cacheable_keys, ReportFormat, SimError,
    SimulationReport, SweepSpec,
};
use toolcache_core::trace::{load_trace, write_trace, Trace, TraceHeader};
use toolcache_core::workload::{generate, DistributionKind, ToolCatalog};
use toolcache_core::{EngineError, PolicyKind};

use crate::config::CliConfig;

#[derive(Debug, Parser)]
#[command(name = "toolcache", version, about = "Value-aware caching simulator for LLM tool calls")]
struct Cli {
    /// Seed for workload generation; echoed into reports.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with [policy], [workload], [sweep] and [remote] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic trace as JSON Lines.
    Generate(GenerateArgs),
    /// Replay a trace through one policy at one cache size.
    Run(RunArgs),
    /// Replay a trace through every policy at every cache fraction.
    Sweep(SweepArgs),
    /// Compare VAAC with and without the user grouping level.
    CompareGrouping(CompareArgs),
    /// Attach semantic annotations to a raw trace.
    Annotate(AnnotateArgs),
    /// Re-render a saved JSON report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_parser = parse_distribution)]
    distribution: Option<DistributionKind>,
    #[arg(long)]
    requests: Option<usize>,
    /// Tool catalog JSON; the built-in six-tool catalog when absent.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Omit the header line.
    #[arg(long)]
    no_header: bool,
}

#[derive(Debug, Args)]
struct TraceArgs {
    /// Trace file in JSON Lines.
    #[arg(long)]
    trace: PathBuf,
    /// Manifest used for records that carry no annotation.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    input: TraceArgs,
    #[arg(long, default_value = "vaac")]
    policy: PolicyKind,
    /// Capacity as a fraction of the trace's unique cacheable keys.
    #[arg(long, default_value_t = 0.1, conflicts_with = "capacity")]
    fraction: f64,
    /// Capacity in entries.
    #[arg(long)]
    capacity: Option<usize>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    input: TraceArgs,
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,
    #[arg(long, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long)]
    threads: Option<usize>,
    /// Include per-cell wall-clock time.
    #[arg(long)]
    timings: bool,
    #[arg(long, default_value = "json", value_parser = parse_format)]
    format: ReportFormat,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    input: TraceArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3])]
    fractions: Vec<f64>,
}

#[derive(Debug, Args)]
struct AnnotateArgs {
    /// Raw trace in JSON Lines.
    #[arg(long)]
    trace: PathBuf,
    /// Annotate from a static manifest instead of the remote endpoint.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Manifest consulted when the remote endpoint fails.
    #[arg(long, conflicts_with = "manifest")]
    fallback: Option<PathBuf>,
    /// Overrides `[remote].base_url`.
    #[arg(long)]
    base_url: Option<String>,
    /// Overrides `[remote].model`.
    #[arg(long)]
    model: Option<String>,
    /// Replace annotations already present in the trace.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON report written by `sweep`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: ReportFormat,
}

fn parse_distribution(s: &str) -> Result<DistributionKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|_| format!("unknown distribution `{s}` (expected zipf, hotspot, uniform or multiuser)"))
}

fn parse_format(s: &str) -> Result<ReportFormat, String> {
    s.parse().map_err(|e: SimError| e.to_string())
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Trace(String),
    #[error("{0}")]
    Remote(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Trace(_) => 3,
            CliError::Remote(_) => 4,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match &e {
            SimError::Config(_) | SimError::UnsupportedFormat(_) => CliError::Config(e.to_string()),
            SimError::Cell { source, .. } | SimError::Request { source, .. } => match source {
                EngineError::Config(_) => CliError::Config(e.to_string()),
                _ => CliError::Trace(e.to_string()),
            },
            _ => CliError::Trace(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("toolcache: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.config {
        Some(path) => CliConfig::load(path).map_err(CliError::Config)?,
        None => CliConfig::default(),
    };
    let out = Output(cli.out.clone());
    match cli.command {
        Command::Generate(args) => cmd_generate(args, &cfg, cli.seed, &out),
        Command::Run(args) => cmd_run(args, &cfg, &out),
        Command::Sweep(args) => cmd_sweep(args, &cfg, cli.seed, &out),
        Command::CompareGrouping(args) => cmd_compare(args, &cfg, &out),
        Command::Annotate(args) => cmd_annotate(args, &cfg, &out),
        Command::Report(args) => cmd_report(args, &out),
    }
}

struct Output(Option<PathBuf>);

impl Output {
    fn write(&self, bytes: &[u8]) -> Result<(), CliError> {
        match &self.0 {
            Some(path) => std::fs::write(path, bytes)?,
            None => std::io::stdout().lock().write_all(bytes)?,
        }
        Ok(())
    }

    fn json<T: serde::Serialize>(&self, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Trace(e.to_string()))?;
        text.push('\n');
        self.write(text.as_bytes())
    }
}

fn load_catalog(path: Option<&Path>) -> Result<ToolCatalog, CliError> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            ToolCatalog::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))
        }
        None => Ok(ToolCatalog::default_catalog()),
    }
}

fn read_trace_file(path: &Path) -> Result<Trace, CliError> {
    load_trace(path).map_err(|e| CliError::Trace(format!("{}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> Result<ToolManifest, CliError> {
    ToolManifest::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn cmd_generate(args: GenerateArgs, cfg: &CliConfig, seed: Option<u64>, out: &Output) -> Result<(), CliError> {
    let catalog = load_catalog(args.catalog.as_deref().or(cfg.catalog.as_deref()))?;
    let mut workload = cfg.workload.clone();
    if let Some(d) = args.distribution {
        workload.distribution = d;
    }
    if let Some(n) = args.requests {
        workload.n_requests = n;
    }
    if let Some(s) = seed {
        workload.seed = s;
    }
    let requests = generate(&catalog, &workload).map_err(|e| CliError::Config(e.to_string()))?;
    let header = (!args.no_header).then(|| TraceHeader::new(Some(workload), Some(catalog)));
    let mut buf = Vec::new();
    write_trace(&mut buf, header.as_ref(), &requests)?;
    out.write(&buf)
}

/// Loads a trace and fills in missing annotations from the manifest given on
/// the command line, in the config, or derived from the header's catalog.
fn load_annotated(input: &TraceArgs, cfg: &CliConfig) -> Result<Trace, CliError> {
    let mut trace = read_trace_file(&input.trace)?;
    if trace.requests.iter().all(|r| r.annotation.is_some()) {
        return Ok(trace);
    }
    let manifest = match input.manifest.as_deref().or(cfg.manifest.as_deref()) {
        Some(path) => load_manifest(path)?,
        None => match trace.header.as_ref().and_then(|h| h.catalog.as_ref()) {
            Some(catalog) => catalog.manifest(),
            None => {
                return Err(CliError::Trace(format!(
                    "{}: records lack annotations and no manifest was given; run `toolcache annotate` first",
                    input.trace.display()
                )))
            }
        },
    };
    for r in trace.requests.iter_mut().filter(|r| r.annotation.is_none()) {
        let f = manifest
            .annotate(r)
            .map_err(|e| CliError::Trace(format!("request {}: {e}", r.seq)))?;
        r.annotation = Some(f);
    }
    Ok(trace)
}

fn cmd_run(args: RunArgs, cfg: &CliConfig, out: &Output) -> Result<(), CliError> {
    let trace = load_annotated(&args.input, cfg)?;
    if !(args.fraction > 0.0 && args.fraction <= 1.0) {
        return Err(CliError::Config(format!("fraction {} must lie in (0, 1]", args.fraction)));
    }
    let unique = unique_cacheable_keys(&trace.requests)?;
    let capacity = match args.capacity {
        Some(0) => return Err(CliError::Config("capacity must be at least 1".into())),
        Some(c) => c,
        None => capacity_for(args.fraction, unique),
    };
    let fraction = match args.capacity {
        Some(c) if unique > 0 => c as f64 / unique as f64,
        _ => args.fraction,
    };
    let cell = run_cell(&trace.requests, args.policy, fraction, capacity, &cfg.policy, false)?;
    out.json(&cell)
}

fn cmd_sweep(args: SweepArgs, cfg: &CliConfig, seed: Option<u64>, out: &Output) -> Result<(), CliError> {
    let trace = load_annotated(&args.input, cfg)?;
    let spec = SweepSpec {
        policies: args.policies.unwrap_or_else(|| cfg.sweep.policies.clone()),
        cache_fractions: args.fractions.unwrap_or_else(|| cfg.sweep.cache_fractions.clone()),
        config: cfg.policy.clone(),
        seed: seed.or_else(|| trace.header.as_ref().and_then(|h| h.workload.as_ref()).map(|w| w.seed)),
        threads: args.threads.or(cfg.sweep.threads),
        timings: args.timings || cfg.sweep.timings,
    };
    spec.validate()?;
    let report = run_sweep(&trace.requests, &spec)?;
    out.write(report.render(args.format)?.as_bytes())
}

fn cmd_compare(args: CompareArgs, cfg: &CliConfig, out: &Output) -> Result<(), CliError> {
    if args.fractions.is_empty() || args.fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(CliError::Config("fractions must lie in (0, 1]".into()));
    }
    let trace = load_annotated(&args.input, cfg)?;
    let rows = compare_grouping(&trace.requests, &args.fractions, &cfg.policy)?;
    out.json(&rows)
}

fn cmd_annotate(args: AnnotateArgs, cfg: &CliConfig, out: &Output) -> Result<(), CliError> {
    let mut trace = read_trace_file(&args.trace)?;
    let annotator: Arc<dyn Annotator> = match &args.manifest {
        Some(path) => Arc::new(load_manifest(path)?),
        None => {
            let mut remote = cfg.remote.clone();
            if let Some(url) = args.base_url {
                remote.base_url = url;
            }
            if let Some(model) = args.model {
                remote.model = model;
            }
            let fallback = args.fallback.as_deref().map(load_manifest).transpose()?;
            Arc::new(RemoteAnnotator::new(remote, fallback).map_err(|e| CliError::Config(e.to_string()))?)
        }
    };
    for r in trace.requests.iter_mut() {
        if r.annotation.is_some() && !args.force {
            continue;
        }
        let f = annotator.annotate(r).map_err(|e| match e {
            AnnotateError::EndpointUnavailable(_) | AnnotateError::MalformedLlmResponse(_) => {
                CliError::Remote(format!("request {}: {e}", r.seq))
            }
            AnnotateError::UnknownTool(_) => CliError::Trace(format!("request {}: {e}", r.seq)),
            other => CliError::Config(other.to_string()),
        })?;
        r.annotation = Some(f);
    }
    let mut buf = Vec::new();
    write_trace(&mut buf, trace.header.as_ref(), &trace.requests)?;
    out.write(&buf)
}

fn cmd_report(args: ReportArgs, out: &Output) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input)?;
    let report = SimulationReport::from_json(&text).map_err(|e| CliError::Trace(format!("{}: {e}", args.input.display())))?;
    out.write(report.render(args.format)?.as_bytes())
}
