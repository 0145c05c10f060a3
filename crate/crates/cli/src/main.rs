//! `nlmp`: batch front end for the nonlocal maximum-principle toolkit.
//!
//! Every run reads a JSON config, writes a deterministic JSON (or CSV)
//! report and exits with
//! 0 success, 1 checked and false, 2 hypothesis not met, 3 undecided,
//! 4 bad config or input, 5 internal error.

mod commands;
mod config;

use clap::{Parser, Subcommand, ValueEnum};
use config::{Failure, RunConfig};
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "nlmp", version, about = "Maximum-principle checks for nonlocal operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for the report and any produced files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// With `certify`: check an existing certificate instead of building one.
    #[arg(long, global = true)]
    verify_only: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Subcommand)]
enum Command {
    /// Lévy integrability, nontriviality and asymmetry audits.
    KernelCheck,
    /// First Dirichlet eigenvalue of the configured domain.
    Lambda1,
    /// Decreasing rearrangement and eigenvalue lower bound over volumes.
    LowerBound,
    /// Volume below which the weak maximum principle holds for a given `c⁺`.
    WmpRadius,
    /// Dirichlet solve of `Iu = cu + g`.
    Solve,
    /// Nodal supersolution check.
    VerifySupersolution,
    /// Quantitative negative-part bound for a supersolution.
    WeakMp,
    /// Per-component strong maximum principle dichotomy.
    StrongMp,
    /// Build and verify a positivity certificate.
    Certify,
    /// Confined lattice path with a search cross-check.
    LatticePath,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::KernelCheck => "kernel-check",
            Command::Lambda1 => "lambda1",
            Command::LowerBound => "lower-bound",
            Command::WmpRadius => "wmp-radius",
            Command::Solve => "solve",
            Command::VerifySupersolution => "verify-supersolution",
            Command::WeakMp => "weak-mp",
            Command::StrongMp => "strong-mp",
            Command::Certify => "certify",
            Command::LatticePath => "lattice-path",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Negative,
    HypothesisViolation,
    Undecided,
    InvalidInput,
    InternalError,
}

impl Status {
    fn code(self) -> u8 {
        match self {
            Status::Ok => 0,
            Status::Negative => 1,
            Status::HypothesisViolation => 2,
            Status::Undecided => 3,
            Status::InvalidInput => 4,
            Status::InternalError => 5,
        }
    }
}

/// Result of a command: verdict, JSON body, and extra files for `--out`.
pub struct Outcome {
    pub status: Status,
    pub result: serde_json::Value,
    /// Rows for `--format csv`; JSON reports carry the same data in `result`.
    pub table: Option<serde_json::Value>,
    pub files: Vec<(String, Vec<u8>)>,
}

#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    seed: Option<u64>,
    status: Status,
    exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    result: serde_json::Value,
}

fn failure_status(f: &Failure) -> (Status, String) {
    match f {
        Failure::Config(m) => (Status::InvalidInput, m.clone()),
        Failure::Lib(e) if e.is_hypothesis_violation() => (Status::HypothesisViolation, e.to_string()),
        Failure::Lib(e) if e.is_inconclusive() => (Status::Undecided, e.to_string()),
        Failure::Lib(nonlocal_mp::Error::Internal(m)) => (Status::InternalError, m.clone()),
        Failure::Lib(e) => (Status::InvalidInput, e.to_string()),
    }
}

/// A table when the command has one, else scalar top-level fields as `key,value` rows.
fn to_csv(result: &serde_json::Value, table: Option<&serde_json::Value>) -> String {
    let mut out = String::new();
    if let Some(rows) = table.and_then(|t| t.as_array()) {
        if let Some(first) = rows.first().and_then(|r| r.as_object()) {
            let keys: Vec<&String> = first.keys().collect();
            out.push_str(&keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","));
            out.push('\n');
            for r in rows {
                let cells: Vec<String> = keys.iter().map(|k| csv_cell(&r[k.as_str()])).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
        }
        return out;
    }
    out.push_str("key,value\n");
    if let Some(obj) = result.as_object() {
        for (k, v) in obj {
            if !v.is_array() && !v.is_object() {
                out.push_str(&format!("{k},{}\n", csv_cell(v)));
            }
        }
    }
    out
}

fn csv_cell(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(a) => a.iter().map(csv_cell).collect::<Vec<_>>().join(" "),
        other => other.to_string(),
    }
}

fn write_out(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), bytes)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 4 } else { 0 });
        }
    };
    let started = Instant::now();
    let name = cli.command.name();
    let mut seed = cli.seed;
    let mut out_dir = cli.out.clone();
    let outcome = (|| -> Result<Outcome, Failure> {
        let path = cli.config.as_ref().ok_or_else(|| Failure::Config("--config is required".into()))?;
        let mut cfg = RunConfig::load(path)?;
        if let Some(c) = &cfg.command {
            if c != name {
                return Err(Failure::Config(format!("field `command`: config is for `{c}`, invoked as `{name}`")));
            }
        }
        seed = seed.or(cfg.seed);
        let s = seed.ok_or_else(|| Failure::Config("a seed is required (field `seed` or --seed)".into()))?;
        cfg.seed = Some(s);
        if out_dir.is_none() {
            out_dir = cfg.out.as_ref().map(|p| cfg.resolve(p));
        }
        if cli.verify_only && !matches!(cli.command, Command::Certify) {
            return Err(Failure::Config("--verify-only applies to `certify` only".into()));
        }
        commands::run(name, &cfg, s, cli.verify_only)
    })();
    let (outcome, message) = match outcome {
        Ok(o) => (o, None),
        Err(f) => {
            let (status, msg) = failure_status(&f);
            (Outcome { status, result: serde_json::Value::Null, table: None, files: Vec::new() }, Some(msg))
        }
    };
    let table = outcome.table;
    let report = Report { command: name, seed, status: outcome.status, exit_code: outcome.status.code(), message, result: outcome.result };
    let body = match cli.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&report).expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = format!("command,{name}\nstatus,{}\n", report.exit_code);
            if let Some(m) = &report.message {
                s.push_str(&format!("message,\"{}\"\n", m.replace('"', "'")));
            }
            s + &to_csv(&report.result, table.as_ref())
        }
    };
    let elapsed = started.elapsed().as_secs_f64();
    match &out_dir {
        Some(dir) => {
            let ext = if cli.format == Format::Json { "json" } else { "csv" };
            let mut res = write_out(dir, &format!("report.{ext}"), body.as_bytes());
            for (file, bytes) in &outcome.files {
                res = res.and_then(|_| write_out(dir, file, bytes));
            }
            res = res.and_then(|_| write_out(dir, "run.log", format!("command {name}\nelapsed_seconds {elapsed}\n").as_bytes()));
            if let Err(e) = res {
                eprintln!("cannot write to {}: {e}", dir.display());
                return ExitCode::from(Status::InvalidInput.code());
            }
        }
        None => {
            let _ = std::io::stdout().write_all(body.as_bytes());
        }
    }
    if let Some(m) = &report.message {
        eprintln!("{name}: {m}");
    }
    ExitCode::from(report.exit_code)
}
