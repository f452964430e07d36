//! `tranche-sim`: validate and run insurance scenarios, and run sweeps.
//!
//! Exit status: 0 success, 2 usage, 3 validation, 4 runtime, 5 IO.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use tranche_core::scenario::{run, Diagnostic, Scenario};
use tranche_core::sweep::{run_sweep, SweepError, SweepSpec};

const EXIT_VALIDATION: u8 = 3;
const EXIT_RUNTIME: u8 = 4;
const EXIT_IO: u8 = 5;

#[derive(Parser)]
#[command(name = "tranche-sim", version, about = "Simulate two-tranche DeFi insurance scenarios")]
struct Cli {
    /// Replace the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print errors only.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario or sweep file and print diagnostics.
    Validate { file: PathBuf },
    /// Run a scenario and write its report.
    Run {
        file: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Report formats to write; repeat for several. Defaults to json and csv.
        #[arg(long, value_enum)]
        format: Vec<Format>,
    },
    /// Run a parameter sweep and write one CSV row per axis value.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

enum Failure {
    Validation(Vec<Diagnostic>),
    Runtime(String),
    Io(String),
}

impl Failure {
    fn io(path: &Path, e: impl std::fmt::Display) -> Failure {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { file } => validate(file, cli.quiet),
        Command::Run { file, out, format } => run_scenario(file, out, format, cli.seed, cli.quiet),
        Command::Sweep { spec, out } => sweep(spec, out, cli.seed, cli.quiet),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(diags)) => {
            for d in diags {
                eprintln!("error: {d}");
            }
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_IO)
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::io(path, e))
}

/// Sweep files are recognised by their `[axis]` table.
fn is_sweep(text: &str) -> bool {
    text.parse::<toml::Table>().map(|t| t.contains_key("axis")).unwrap_or(false)
}

fn validate(file: &Path, quiet: bool) -> Result<(), Failure> {
    let text = read(file)?;
    if is_sweep(&text) {
        SweepSpec::from_toml_str(&text).map_err(Failure::Validation)?;
    } else {
        Scenario::from_toml_str(&text).map_err(Failure::Validation)?;
    }
    if !quiet {
        println!("{}: ok", file.display());
    }
    Ok(())
}

fn load_scenario(file: &Path, seed: Option<u64>) -> Result<Scenario, Failure> {
    let mut scenario = Scenario::from_toml_str(&read(file)?).map_err(Failure::Validation)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    Ok(scenario)
}

fn run_scenario(file: &Path, out: &Path, formats: &[Format], seed: Option<u64>, quiet: bool) -> Result<(), Failure> {
    let scenario = load_scenario(file, seed)?;
    let report = run(&scenario).map_err(Failure::Validation)?;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let all = formats.is_empty();
    let mut written = Vec::new();
    if all || formats.contains(&Format::Json) {
        let path = out.join("report.json");
        fs::write(&path, report.to_json()).map_err(|e| Failure::io(&path, e))?;
        written.push(path);
    }
    if all || formats.contains(&Format::Csv) {
        written.push(write_rows(&out.join("payouts.csv"), &report.payout_rows())?);
        written.push(write_rows(&out.join("states.csv"), &report.state_rows())?);
        written.push(write_rows(&out.join("prices.csv"), &report.price_rows())?);
    }
    if !quiet {
        println!(
            "{}: final state {}, {} log entries, {} failed actions",
            file.display(),
            report.policy.final_state,
            report.log.len(),
            report.failures().count()
        );
        for path in &written {
            println!("wrote {}", path.display());
        }
    }
    if !report.conservation.holds() {
        return Err(Failure::Runtime(format!("C conservation violated: {:?}", report.conservation)));
    }
    Ok(())
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<PathBuf, Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::io(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| Failure::io(path, e))?;
    }
    w.flush().map_err(|e| Failure::io(path, e))?;
    Ok(path.to_path_buf())
}

fn sweep(spec_path: &Path, out: &Path, seed: Option<u64>, quiet: bool) -> Result<(), Failure> {
    let spec = SweepSpec::from_toml_str(&read(spec_path)?).map_err(Failure::Validation)?;
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let table = run_sweep(&spec, base, seed).map_err(|e| match e {
        SweepError::Invalid(d) => Failure::Validation(d),
        SweepError::Io { path, source } => Failure::io(&path, source),
        e @ SweepError::Runtime { .. } => Failure::Runtime(e.to_string()),
    })?;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let stem = spec_path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let path = out.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| Failure::io(&path, e))?;
    w.write_record(&table.columns).map_err(|e| Failure::io(&path, e))?;
    for row in &table.rows {
        w.write_record(row).map_err(|e| Failure::io(&path, e))?;
    }
    w.flush().map_err(|e| Failure::io(&path, e))?;
    if !quiet {
        println!("{}: {} rows", spec_path.display(), table.rows.len());
        println!("wrote {}", path.display());
    }
    Ok(())
}
