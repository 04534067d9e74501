// `!(x > 0.0)` style checks reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use gaitkit::evaluate::{self, AggregateSummary, KindEvaluation};
use gaitkit::factors::simulate::{self, SimulationConfig};
use gaitkit::factors::{self, PriorConfig, SamplerConfig};
use gaitkit::pipeline::{self, PipelineConfig};
use gaitkit::synth::{self, SynthConfig};
use gaitkit::{ingest, EventKind, GaitEvent};

#[derive(Parser)]
#[command(name = "gaitkit", version, about = "Gait event detection from smartphone IMU recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Detect gait events in one recording.
    Process {
        recording: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for events.json, segments.json, and bouts.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare detected events with a reference.
    Evaluate {
        events: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Total width of the matching window (s); overrides the config.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize metrics files across tests and participants.
    Aggregate {
        /// Metrics files, optionally prefixed with a participant id as `ID=PATH`.
        #[arg(required = true)]
        metrics: Vec<String>,
        /// Take per-participant medians first, then summarize across participants.
        #[arg(long)]
        two_stage: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic recording with ground truth.
    Synth {
        /// Synthetic signal configuration (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for recording.csv, reference.csv, and truth.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate a factor table from the Bayesian model's prior.
    SimulateFactors {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the generating parameters.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Fit the factor model to an F1 table and report posterior contrasts.
    Factors {
        table: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Post-warmup draws per chain.
        #[arg(long)]
        draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Where to write sampler diagnostics.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// Inspect configuration.
    Config {
        /// Print the full default configuration.
        #[arg(long)]
        print_defaults: bool,
        /// Print the synthetic signal configuration instead.
        #[arg(long)]
        synth: bool,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct AppConfig {
    pipeline: PipelineConfig,
    prior: PriorConfig,
    sampler: SamplerConfig,
    simulation: SimulationConfig,
}

/// Raised for problems with how the tool was invoked rather than with the data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn read_toml<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<AppConfig> {
    let cfg: AppConfig = read_toml(path)?;
    cfg.pipeline.validate()?;
    cfg.prior.validate()?;
    cfg.sampler.validate()?;
    Ok(cfg)
}

/// Writes through a temporary sibling file and renames it into place.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_process(recording: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let meta = fs::metadata(recording).with_context(|| format!("reading {}", recording.display()))?;
    if meta.len() == 0 {
        return Err(UsageError(format!("{} is empty; expected a CSV recording", recording.display())).into());
    }
    let rec = ingest::load_recording_path(recording).with_context(|| format!("loading {}", recording.display()))?;
    let result = pipeline::process(&rec, &cfg.pipeline)?;
    write_json(&out.join("events.json"), &result.events)?;
    write_json(&out.join("segments.json"), &result.segments)?;
    write_json(&out.join("bouts.json"), &serde_json::json!({ "bouts": result.bouts, "turns": result.turns }))?;
    eprintln!("{} bouts, {} events", result.bouts.len(), result.events.len());
    Ok(())
}

fn cmd_evaluate(events: &Path, reference: &Path, config: Option<&Path>, window: Option<f64>, out: &Path) -> Result<()> {
    let cfg = load_config(config)?;
    let window = window.unwrap_or(cfg.pipeline.window_s);
    if !(window > 0.0) {
        return Err(UsageError(format!("--window must be positive, got {window}")).into());
    }
    let detected: Vec<GaitEvent> = read_json(events)?;
    let truth = ingest::load_reference_events_path(reference).with_context(|| format!("loading {}", reference.display()))?;
    let metrics = [EventKind::InitialContact, EventKind::FinalContact]
        .into_iter()
        .map(|kind| {
            let mut det = gaitkit::events::times_of(&detected, kind);
            let mut reff = gaitkit::events::times_of(&truth, kind);
            det.sort_by(f64::total_cmp);
            reff.sort_by(f64::total_cmp);
            evaluate::evaluate_kind(&det, &reff, window, kind)
        })
        .collect::<gaitkit::Result<Vec<_>>>()?;
    write_json(out, &metrics)
}

#[derive(Serialize)]
struct MetricSummary {
    kind: EventKind,
    metric: &'static str,
    #[serde(flatten)]
    summary: AggregateSummary,
}

fn cmd_aggregate(inputs: &[String], two_stage: bool, out: &Path) -> Result<()> {
    // participant -> per-test evaluations
    let mut by_participant: BTreeMap<String, Vec<KindEvaluation>> = BTreeMap::new();
    for spec in inputs {
        let (id, path) = match spec.split_once('=') {
            Some((id, path)) => (id.to_string(), PathBuf::from(path)),
            None => (spec.clone(), PathBuf::from(spec)),
        };
        let evals: Vec<KindEvaluation> = read_json(&path)?;
        by_participant.entry(id).or_default().extend(evals);
    }
    type Getter = fn(&KindEvaluation) -> Option<f64>;
    let metrics: [(&str, Getter); 3] =
        [("precision", |e| e.precision), ("recall", |e| e.recall), ("f1", |e| e.f1)];
    let mut summaries = Vec::new();
    for kind in [EventKind::InitialContact, EventKind::FinalContact] {
        for (metric, get) in metrics {
            let per_participant: Vec<Vec<f64>> = by_participant
                .values()
                .map(|evals| evals.iter().filter(|e| e.kind == kind).filter_map(get).collect::<Vec<_>>())
                .filter(|v| !v.is_empty())
                .collect();
            if per_participant.is_empty() {
                continue;
            }
            let summary = if two_stage {
                evaluate::aggregate_two_stage(&per_participant)?
            } else {
                evaluate::aggregate_across(&per_participant.concat(), None)?
            };
            summaries.push(MetricSummary { kind, metric, summary });
        }
    }
    if summaries.is_empty() {
        bail!("no defined metrics in the inputs");
    }
    write_json(out, &summaries)
}

fn cmd_synth(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg: SynthConfig = read_toml(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let output = synth::generate(&cfg)?;
    let mut csv = Vec::new();
    output.recording.write_csv(&mut csv)?;
    write_atomic(&out.join("recording.csv"), &csv)?;
    let mut reference = Vec::new();
    ingest::write_reference_events(&output.events, &mut reference)?;
    write_atomic(&out.join("reference.csv"), &reference)?;
    let truth = output.truth();
    write_json(&out.join("truth.json"), &truth)
}

fn cmd_simulate_factors(config: Option<&Path>, seed: Option<u64>, out: &Path, truth: Option<&Path>) -> Result<()> {
    let cfg = load_config(config)?;
    let mut sim_cfg = cfg.simulation;
    if let Some(seed) = seed {
        sim_cfg.seed = seed;
    }
    let sim = simulate::simulate(&sim_cfg)?;
    let mut table = Vec::new();
    factors::data::write_factor_table(&sim.rows, &mut table)?;
    write_atomic(out, &table)?;
    if let Some(path) = truth {
        let contrasts: BTreeMap<&str, f64> = factors::summary::CONTRAST_NAMES
            .into_iter()
            .zip(factors::summary::contrast_values(&sim.truth))
            .collect();
        write_json(path, &serde_json::json!({ "params": sim.truth, "contrasts": contrasts }))?;
    }
    Ok(())
}

fn cmd_factors(
    table: &Path,
    config: Option<&Path>,
    draws: Option<usize>,
    seed: Option<u64>,
    out: &Path,
    diagnostics: Option<&Path>,
) -> Result<()> {
    let cfg = load_config(config)?;
    let mut sampler = cfg.sampler;
    if let Some(n) = draws {
        sampler.n_draws = n;
    }
    if let Some(s) = seed {
        sampler.seed = s;
    }
    sampler.validate()?;
    let rows = factors::data::load_factor_table_path(table).with_context(|| format!("loading {}", table.display()))?;
    let posterior = factors::fit(&rows, &cfg.prior, &sampler)?;
    let d = &posterior.diagnostics;
    eprintln!(
        "acceptance {:.3}, divergences {}, max R-hat {:.4}",
        d.accept_rate, d.divergences, d.max_rhat
    );
    if d.max_rhat >= 1.05 {
        eprintln!("warning: R-hat above 1.05; increase --draws or the warmup length");
    }
    write_json(out, &posterior.contrasts())?;
    if let Some(path) = diagnostics {
        write_json(path, d)?;
    }
    Ok(())
}

fn cmd_config(print_defaults: bool, synth: bool) -> Result<()> {
    if !print_defaults {
        return Err(UsageError("nothing to do; pass --print-defaults".into()).into());
    }
    let text = if synth {
        toml::to_string_pretty(&SynthConfig::default())?
    } else {
        toml::to_string_pretty(&AppConfig::default())?
    };
    print!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Process { recording, config, out } => cmd_process(&recording, config.as_deref(), &out),
        Command::Evaluate { events, reference, config, window, out } => {
            cmd_evaluate(&events, &reference, config.as_deref(), window, &out)
        }
        Command::Aggregate { metrics, two_stage, out } => cmd_aggregate(&metrics, two_stage, &out),
        Command::Synth { config, seed, out } => cmd_synth(config.as_deref(), seed, &out),
        Command::SimulateFactors { config, seed, out, truth } => {
            cmd_simulate_factors(config.as_deref(), seed, &out, truth.as_deref())
        }
        Command::Factors { table, config, draws, seed, out, diagnostics } => {
            cmd_factors(&table, config.as_deref(), draws, seed, &out, diagnostics.as_deref())
        }
        Command::Config { print_defaults, synth } => cmd_config(print_defaults, synth),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
