//! `loadkit`: loadability analysis from the command line.
//!
//! Every subcommand prints an [`report::AnalysisReport`] as JSON (or its main
//! table as CSV with `--format csv`) and writes plot tables to
//! `<out><name>.csv` when `--out` is given.

mod commands;
mod input;
mod report;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use loadkit::Error;

use input::QLimitArg;
use report::{AnalysisReport, CommandEcho, Timing};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ON_BOUNDARY: u8 = 10;
pub const EXIT_ALARM: u8 = 11;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "loadkit", version, about = "Loadability boundary, margin and Pareto-front analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// What to print on stdout.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,

    /// Prefix for CSV output files (`<out>region.csv`, …); nothing is written
    /// without it.
    #[arg(long, global = true)]
    out: Option<String>,

    /// Jitters oracle grids by a seeded sub-step offset; grids are exact
    /// without it.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    PowerTransfer,
    ImpedanceRatio,
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    /// Operating state (`{"buses": [{"id", "v_re", "v_im"}]}`); defaults to
    /// the state stored in the case, else a solved power flow.
    #[arg(long)]
    pub state: Option<PathBuf>,

    /// Enforce the generator reactive limits from the case.
    #[arg(long)]
    pub q_limits: bool,

    /// Reactive generation limit `bus=<id>,min=<MVAr>,max=<MVAr>`
    /// (repeatable).
    #[arg(long = "q-limit", value_name = "SPEC")]
    pub q_limit: Vec<QLimitArg>,

    /// LP feasibility tolerance.
    #[arg(long, default_value_t = loadkit::boundary::FEASIBILITY_TOL)]
    pub tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Is the operating point on the loadability boundary?
    Check {
        case: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Early-warning mode: alarm when no direction raises every load by
        /// at least this much.
        #[arg(long)]
        epsilon: Option<f64>,
    },
    /// Distance of the operating point from the boundary.
    Margin {
        case: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Boundary points maximizing weighted load growth.
    Pareto {
        case: PathBuf,
        /// Growth weights per PQ bus, comma separated (default: all ones).
        #[arg(long)]
        z: Option<String>,
        /// Number of evenly spread directions (two-load networks).
        #[arg(long)]
        sweep: Option<usize>,
        /// Margin trace from the operating state to the boundary point, in
        /// this many steps.
        #[arg(long)]
        trace: Option<usize>,
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Active and reactive power circles at the operating state.
    Circles {
        case: PathBuf,
        /// Bus id (default: every PQ bus).
        #[arg(long)]
        bus: Option<usize>,
        #[arg(long, default_value_t = 360)]
        samples: usize,
        #[arg(long)]
        state: Option<PathBuf>,
    },
    /// Brute-force region sample, its front and the singular locus.
    Region {
        case: PathBuf,
        /// `lo:hi:step` for every axis, or one triple per axis separated by
        /// commas.
        #[arg(long, default_value = "0:1.2:0.01")]
        grid: String,
        /// Sample real and imaginary parts (default: real voltages only).
        #[arg(long)]
        complex: bool,
        /// Front distance up to which a singular point counts as boundary.
        #[arg(long, default_value_t = 3e-3)]
        locus_tol: f64,
    },
    /// Thevenin margin against the proposed margin along a load ramp.
    Thevenin {
        case: PathBuf,
        /// Observed bus id (default: first PQ bus).
        #[arg(long)]
        bus: Option<usize>,
        /// Number of states along the ramp.
        #[arg(long, default_value_t = 101)]
        sweep: usize,
        /// Growth weights defining the ramp (default: all ones).
        #[arg(long)]
        z: Option<String>,
        #[arg(long, value_enum, default_value_t = Metric::PowerTransfer)]
        metric: Metric,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Check { .. } => "check",
            Command::Margin { .. } => "margin",
            Command::Pareto { .. } => "pareto",
            Command::Circles { .. } => "circles",
            Command::Region { .. } => "region",
            Command::Thevenin { .. } => "thevenin",
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MalformedCase { .. }
        | Error::Schema(_)
        | Error::InvariantViolation(_)
        | Error::UnsupportedFeature(_)
        | Error::InvalidInput(_)
        | Error::GridTooLarge { .. }
        | Error::Io(_) => EXIT_INPUT,
        _ => EXIT_SOLVER,
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("LOADKIT_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| format!("LOADKIT_THREADS={raw:?} is not a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let start = Instant::now();
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("loadkit: {msg}");
        return ExitCode::from(EXIT_INPUT);
    }
    let echo = CommandEcho {
        name: cli.command.name().into(),
        args: std::env::args().skip(2).collect(),
    };
    let run = commands::run(&cli.command, &commands::Globals { out: cli.out.clone(), seed: cli.seed });
    let (mut report, table, code) = match run {
        Ok(done) => (
            AnalysisReport {
                command: echo,
                input: Some(done.input),
                results: done.results,
                files: done.files,
                warnings: done.warnings,
                error: None,
                timing: Timing { elapsed_s: 0.0 },
            },
            Some(done.table),
            done.exit,
        ),
        Err(fail) => {
            eprintln!("loadkit: {}", fail.error);
            (
                AnalysisReport {
                    command: echo,
                    input: fail.input,
                    results: serde_json::Value::Null,
                    files: Vec::new(),
                    warnings: fail.warnings,
                    error: Some(fail.error.to_string()),
                    timing: Timing { elapsed_s: 0.0 },
                },
                None,
                exit_code(&fail.error),
            )
        }
    };
    report.timing.elapsed_s = start.elapsed().as_secs_f64();
    let printed = match (cli.format, table) {
        (Format::Csv, Some(t)) => t.write_to(std::io::stdout().lock()),
        (Format::Csv, None) => Ok(()),
        (Format::Json, _) => {
            let text = serde_json::to_string_pretty(&report).expect("reports serialize");
            writeln!(std::io::stdout().lock(), "{text}").map_err(Error::from)
        }
    };
    match printed {
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        Err(e) => {
            eprintln!("loadkit: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
        Ok(()) => {}
    }
    ExitCode::from(code)
}
