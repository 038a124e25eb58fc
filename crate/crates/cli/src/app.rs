//! Command-line surface and exit-code mapping.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use raretail::mc::engine::DEFAULT_CHUNK;
use raretail::mc::Engine;
use raretail::report::to_csv;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::presets::{self, PRESETS};
use crate::run::{self, Outcome};

pub const EXIT_OK: u8 = 0;
pub const EXIT_SCHEMA: u8 = 1;
pub const EXIT_PRECONDITION: u8 = 2;
pub const EXIT_ZERO_HIT: u8 = 3;

pub const GIT_REV: &str = env!("RARETAIL_GIT_REV");
pub const DEFAULT_OUT: &str = "raretail-out";

#[derive(Debug, Parser)]
#[command(
    name = "raretail",
    version,
    about = "Run heavy-tail and ruin experiments from JSON configs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a config file (or a bundled preset) and write report.json and data.csv.
    Run(RunArgs),
    /// List the bundled presets.
    ListPresets,
    /// Print a preset as a config file.
    ShowPreset { name: String },
    /// Check a config without simulating.
    Validate { config: PathBuf },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file.
    #[arg(required_unless_present = "preset", conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Run a bundled preset instead of a file.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, env = "RARETAIL_WORKERS")]
    pub workers: Option<usize>,
    /// Multiply every simulation budget.
    #[arg(long, default_value_t = 1.0)]
    pub budget_scale: f64,
    /// Output directory (overrides the config's out_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report<'a> {
    tool: &'static str,
    version: &'static str,
    git_rev: &'static str,
    config_source: String,
    config_sha256: String,
    seed: u64,
    workers: usize,
    chunk: u64,
    budget_scale: f64,
    zero_hit_dominated: bool,
    experiments: &'a [Outcome],
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Writes a line to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) {
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

/// Reads and parses a config; the error carries its exit code.
fn load(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), ExitCode> {
    let bytes = fs::read(path).map_err(|e| {
        fail(
            EXIT_PRECONDITION,
            format!("cannot read {}: {e}", path.display()),
        )
    })?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|e| fail(EXIT_SCHEMA, format!("{}: not UTF-8: {e}", path.display())))?;
    let cfg = ExperimentConfig::parse(text)
        .map_err(|e| fail(EXIT_SCHEMA, format!("{}: {e}", path.display())))?;
    Ok((cfg, bytes))
}

pub fn execute(cli: Cli) -> ExitCode {
    match cli.command {
        Command::ListPresets => {
            for p in PRESETS {
                emit(&format!(
                    "{:<22} {:>4}s  {}",
                    p.name, p.time_limit_s, p.description
                ));
            }
            ExitCode::from(EXIT_OK)
        }
        Command::ShowPreset { name } => match presets::find(&name) {
            Some(p) => {
                emit(&p.config().to_json());
                ExitCode::from(EXIT_OK)
            }
            None => fail(EXIT_SCHEMA, format!("unknown preset `{name}`")),
        },
        Command::Validate { config } => {
            let (cfg, _) = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            for e in &cfg.experiments {
                let budget = e.budget.as_ref().unwrap_or(&cfg.budget);
                if let Err(err) = budget.validate().and_then(|_| run::validate(&e.experiment)) {
                    return fail(EXIT_PRECONDITION, format!("experiment `{}`: {err}", e.name));
                }
            }
            emit(&format!(
                "{}: ok ({} experiments)",
                config.display(),
                cfg.experiments.len()
            ));
            ExitCode::from(EXIT_OK)
        }
        Command::Run(args) => run_command(args),
    }
}

fn run_command(args: RunArgs) -> ExitCode {
    let (mut cfg, source, hash) = match (&args.config, &args.preset) {
        (Some(path), _) => match load(path) {
            Ok((cfg, bytes)) => (cfg, path.display().to_string(), sha256_hex(&bytes)),
            Err(code) => return code,
        },
        (None, Some(name)) => match presets::find(name) {
            Some(p) => {
                let cfg = p.config();
                let hash = sha256_hex(cfg.to_json().as_bytes());
                (cfg, format!("preset:{name}"), hash)
            }
            None => return fail(EXIT_SCHEMA, format!("unknown preset `{name}`")),
        },
        (None, None) => return fail(EXIT_SCHEMA, "give a config path or --preset"),
    };
    if !(args.budget_scale > 0.0 && args.budget_scale.is_finite()) {
        return fail(
            EXIT_PRECONDITION,
            format!("--budget-scale must be positive, got {}", args.budget_scale),
        );
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let workers = args.workers.or(cfg.workers).unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let chunk = cfg.chunk.unwrap_or(DEFAULT_CHUNK);
    let engine = match Engine::with_chunk(cfg.seed, workers, chunk) {
        Ok(e) => e,
        Err(e) => return fail(EXIT_PRECONDITION, e),
    };
    let mut outcomes = Vec::with_capacity(cfg.experiments.len());
    for entry in &cfg.experiments {
        let budget = entry
            .budget
            .as_ref()
            .unwrap_or(&cfg.budget)
            .scaled(args.budget_scale);
        let start = Instant::now();
        match run::run_entry(entry, &engine, &budget, args.budget_scale) {
            Ok(o) => {
                eprintln!(
                    "{} ({}): {:?} [{:.1}s]{}",
                    o.name,
                    o.kind,
                    o.verdicts,
                    start.elapsed().as_secs_f64(),
                    if o.zero_hit_dominated {
                        " zero-hit dominated"
                    } else {
                        ""
                    }
                );
                outcomes.push(o);
            }
            Err(e) => {
                return fail(
                    EXIT_PRECONDITION,
                    format!("experiment `{}`: {e}", entry.name),
                )
            }
        }
    }
    let zero_hit_dominated = outcomes.iter().any(|o| o.zero_hit_dominated);
    let report = Report {
        tool: "raretail",
        version: env!("CARGO_PKG_VERSION"),
        git_rev: GIT_REV,
        config_source: source,
        config_sha256: hash,
        seed: cfg.seed,
        workers,
        chunk,
        budget_scale: args.budget_scale,
        zero_hit_dominated,
        experiments: &outcomes,
    };
    let out = args
        .out
        .or(cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let rows: Vec<_> = outcomes
        .iter()
        .flat_map(|o| o.rows.iter().cloned())
        .collect();
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    let written = fs::create_dir_all(&out)
        .and_then(|_| fs::write(out.join("report.json"), json))
        .and_then(|_| fs::write(out.join("data.csv"), to_csv(&rows)));
    if let Err(e) = written {
        return fail(
            EXIT_PRECONDITION,
            format!("cannot write to {}: {e}", out.display()),
        );
    }
    eprintln!("wrote {}", out.display());
    if zero_hit_dominated {
        eprintln!("zero-hit estimates dominate at least one verdict; raise the budget");
        return ExitCode::from(EXIT_ZERO_HIT);
    }
    ExitCode::from(EXIT_OK)
}
