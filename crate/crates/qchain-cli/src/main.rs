//! `qchain`: run measurement-chain scenarios, check history families, and
//! regression-run a scenario corpus.
//!
//! Exit status: 0 on success, 2 on validation errors, 3 when a composite
//! dimension exceeds the cap, 4 when an internal numerical invariant fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use qchain_core::scenario::{
    check_histories, emit, parse_scenario, run_builtin, run_with, ErrorCode, OutputFormat, Report,
    ReportResult, ScenarioError,
};

#[derive(Parser)]
#[command(
    name = "qchain",
    version,
    about = "Simulate sequences of quantum measurements with probes and memories"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EngineArg {
    Feynman,
    Evolution,
    Both,
}

impl From<EngineArg> for qchain_core::scenario::EngineDecl {
    fn from(value: EngineArg) -> Self {
        match value {
            EngineArg::Feynman => Self::Feynman,
            EngineArg::Evolution => Self::Evolution,
            EngineArg::Both => Self::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Table,
    Json,
    Csv,
}

impl From<FormatArg> for OutputFormat {
    fn from(value: FormatArg) -> Self {
        match value {
            FormatArg::Table => Self::Table,
            FormatArg::Json => Self::Json,
            FormatArg::Csv => Self::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file, or a named built-in experiment with --builtin
    Run {
        /// Scenario JSON file (not needed with --builtin)
        #[arg(conflicts_with = "builtin", required_unless_present = "builtin")]
        file: Option<PathBuf>,

        /// Probability engine to use (overrides the document option)
        #[arg(long, value_enum)]
        engine: Option<EngineArg>,

        /// Output format
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,

        /// Numeric tolerance for internal invariants
        #[arg(long)]
        tol: Option<f64>,

        /// Built-in experiment: scenario-a, scenario-b, scenario-c,
        /// wigner-friend, interference, or reduced
        #[arg(long)]
        builtin: Option<String>,

        /// Draw built-in parameters from this seed instead of the defaults
        #[arg(long)]
        seed: Option<u64>,
    },

    /// Check the consistency of the projector families in a scenario
    CheckHistories {
        /// Scenario JSON file with a projector_families section
        file: PathBuf,

        /// Consistency tolerance on off-diagonal magnitudes
        #[arg(long)]
        tol: Option<f64>,

        /// Output format
        #[arg(long, value_enum, default_value = "table")]
        format: FormatArg,
    },

    /// Run every scenario in a directory with both engines and summarize
    Corpus {
        /// Directory of scenario JSON files
        dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code.exit_code() as u8)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Run {
            file,
            engine,
            format,
            tol,
            builtin,
            seed,
        } => {
            let report = match builtin {
                Some(name) => run_builtin(&name, seed)?,
                None => {
                    let path = file.expect("clap enforces file xor builtin");
                    let doc = parse_scenario(&read_file(&path)?)?;
                    run_with(&doc, engine.map(Into::into), tol)?
                }
            };
            print!("{}", emit(&report, format.into()));
            Ok(())
        }
        Command::CheckHistories { file, tol, format } => {
            let doc = parse_scenario(&read_file(&file)?)?;
            let report = check_histories(&doc, tol)?;
            print!("{}", emit(&report, format.into()));
            Ok(())
        }
        Command::Corpus { dir } => corpus(&dir),
    }
}

fn read_file(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|e| {
        ScenarioError::new(ErrorCode::Io, path.display().to_string(), e.to_string())
    })
}

struct CorpusRow {
    name: String,
    outcome: Result<(usize, f64, f64), ScenarioError>,
}

fn corpus(dir: &Path) -> Result<(), ScenarioError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| ScenarioError::new(ErrorCode::Io, dir.display().to_string(), e.to_string()))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ScenarioError::new(
            ErrorCode::Io,
            dir.display().to_string(),
            "no scenario files (*.json) found",
        ));
    }

    let mut rows: Vec<CorpusRow> = paths
        .par_iter()
        .map(|path| {
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            let outcome = run_corpus_entry(path);
            CorpusRow { name, outcome }
        })
        .collect();
    rows.sort_by(|a, b| a.name.cmp(&b.name));

    let width = rows
        .iter()
        .map(|r| r.name.len())
        .chain(std::iter::once(4))
        .max()
        .unwrap();
    println!(
        "{:width$}  {:>6}  {:>8}  {:>13}  {:>13}",
        "file", "status", "outcomes", "sum_deviation", "engine_diff"
    );
    let mut failure: Option<ErrorCode> = None;
    for row in &rows {
        match &row.outcome {
            Ok((outcomes, sum_dev, engine_diff)) => println!(
                "{:width$}  {:>6}  {:>8}  {:>13.3e}  {:>13.3e}",
                row.name, "ok", outcomes, sum_dev, engine_diff
            ),
            Err(e) => {
                println!("{:width$}  {:>6}  {}", row.name, "FAIL", e);
                failure.get_or_insert(e.code);
            }
        }
    }
    match failure {
        None => Ok(()),
        Some(code) => Err(ScenarioError::new(
            code,
            dir.display().to_string(),
            "one or more corpus scenarios failed",
        )),
    }
}

fn run_corpus_entry(path: &Path) -> Result<(usize, f64, f64), ScenarioError> {
    let doc = parse_scenario(&read_file(path)?)?;
    let report = run_with(
        &doc,
        Some(qchain_core::scenario::EngineDecl::Both),
        None,
    )?;
    summarize(&report)
}

fn summarize(report: &Report) -> Result<(usize, f64, f64), ScenarioError> {
    match &report.result {
        ReportResult::Distribution {
            rows,
            total_probability,
            max_engine_difference,
        } => Ok((
            rows.len(),
            (total_probability - 1.0).abs(),
            max_engine_difference.unwrap_or(0.0),
        )),
        ReportResult::Probability { difference, .. } => {
            Ok((1, 0.0, difference.unwrap_or(0.0)))
        }
        ReportResult::Histories { families } => Ok((
            families.iter().map(|f| f.probabilities.len()).sum(),
            0.0,
            0.0,
        )),
        ReportResult::Builtin { rows, .. } => Ok((
            rows.len(),
            0.0,
            rows.iter().map(|r| r.difference).fold(0.0, f64::max),
        )),
    }
}
