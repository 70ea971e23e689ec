use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use memlearn::harness::config::{load_config, resolve_seed, ReportFormat, SimConfig};
use memlearn::harness::report::{diff_reports, emit_report, MetricsReport};
use memlearn::harness::sim::{paired_run, SimError, Simulation};
use memlearn::trace::{generate, write_trace, SyntheticSpec};

const EXIT_CONFIG: u8 = 2;
const EXIT_TRACE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "memlearn",
    about = "Trace-driven memory-hierarchy simulator with learning prefetch and off-chip prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and emit a metrics report.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override the trace file from the config.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Override the seed (MEMLEARN_SEED also overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Report output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-epoch coordination log as CSV.
        #[arg(long)]
        athena_log: Option<PathBuf>,
        /// Report format override (json or csv).
        #[arg(long)]
        format: Option<String>,
    },
    /// Run the baseline/with-mechanisms pair and emit the derived metrics.
    Paired {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic trace file.
    GenTrace {
        /// Inline spec, e.g. "generator=stride,stride_lines=3,pages=1,length=1000,seed=7".
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare two report files field by field.
    ReportDiff { a: PathBuf, b: PathBuf },
}

fn sim_error_code(err: &SimError) -> u8 {
    match err {
        SimError::Config(_) => EXIT_CONFIG,
        SimError::Trace(_) => EXIT_TRACE,
    }
}

fn load_and_override(
    config: &PathBuf,
    trace: Option<PathBuf>,
    seed: Option<u64>,
) -> Result<SimConfig, u8> {
    let mut cfg = load_config(config).map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    if let Some(path) = trace {
        cfg.trace.path = Some(path);
        cfg.trace.synthetic = None;
    }
    cfg.seed = resolve_seed(cfg.seed, seed);
    cfg.validate().map_err(|e| {
        eprintln!("error: {e}");
        EXIT_CONFIG
    })?;
    Ok(cfg)
}

fn parse_format(s: &str) -> Result<ReportFormat, u8> {
    match s.to_ascii_lowercase().as_str() {
        "json" => Ok(ReportFormat::Json),
        "csv" => Ok(ReportFormat::Csv),
        other => {
            eprintln!("error: unknown report format '{other}'");
            Err(EXIT_CONFIG)
        }
    }
}

fn write_out(bytes: &str, out: Option<&PathBuf>) -> Result<(), u8> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| {
            eprintln!("error: {}: {e}", path.display());
            1
        }),
        None => {
            print!("{bytes}");
            Ok(())
        }
    }
}

fn load_report(path: &PathBuf) -> Result<MetricsReport, u8> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        1u8
    })?;
    let parsed = if path.extension().is_some_and(|e| e == "csv") {
        MetricsReport::from_csv(&text)
    } else {
        MetricsReport::from_json(&text)
    };
    parsed.map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        1u8
    })
}

fn run() -> Result<(), u8> {
    match Cli::parse().command {
        Command::Simulate {
            config,
            trace,
            seed,
            out,
            athena_log,
            format,
        } => {
            let cfg = load_and_override(&config, trace, seed)?;
            let fmt = match format {
                Some(f) => parse_format(&f)?,
                None => cfg.report_format,
            };
            let started = Instant::now();
            let mut sim = Simulation::new(cfg).map_err(|e| {
                eprintln!("error: {e}");
                sim_error_code(&e)
            })?;
            let report = sim.run().map_err(|e| {
                eprintln!("error: {e}");
                sim_error_code(&e)
            })?;
            eprintln!(
                "simulated {} instructions in {:.3} s",
                report.instructions,
                started.elapsed().as_secs_f64()
            );
            if let Some(path) = athena_log {
                match sim.athena_log_csv() {
                    Some(csv) => std::fs::write(&path, csv).map_err(|e| {
                        eprintln!("error: {}: {e}", path.display());
                        1u8
                    })?,
                    None => eprintln!("note: athena disabled; no action log written"),
                }
            }
            match (out, fmt) {
                (Some(path), fmt) => emit_report(&report, fmt, &path).map_err(|e| {
                    eprintln!("error: {}: {e}", path.display());
                    1u8
                })?,
                (None, ReportFormat::Json) => print!("{}", report.to_canonical_json()),
                (None, ReportFormat::Csv) => print!("{}", report.to_csv()),
            }
            Ok(())
        }
        Command::Paired {
            config,
            trace,
            seed,
            out,
        } => {
            let cfg = load_and_override(&config, trace, seed)?;
            let started = Instant::now();
            let paired = paired_run(cfg).map_err(|e| {
                eprintln!("error: {e}");
                sim_error_code(&e)
            })?;
            eprintln!(
                "paired run: speedup {:.4}, coverage {:.4}, overprediction {:.4} ({:.3} s)",
                paired.speedup,
                paired.coverage,
                paired.overprediction,
                started.elapsed().as_secs_f64()
            );
            write_out(&paired.to_canonical_json(), out.as_ref())
        }
        Command::GenTrace { spec, out } => {
            let spec = SyntheticSpec::parse_inline(&spec).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_TRACE
            })?;
            let records = generate(&spec).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_TRACE
            })?;
            let n = write_trace(&out, records).map_err(|e| {
                eprintln!("error: {e}");
                EXIT_TRACE
            })?;
            eprintln!("wrote {n} records to {}", out.display());
            Ok(())
        }
        Command::ReportDiff { a, b } => {
            let ra = load_report(&a)?;
            let rb = load_report(&b)?;
            let diffs = diff_reports(&ra, &rb);
            if diffs.is_empty() {
                println!("reports are identical");
                Ok(())
            } else {
                for d in &diffs {
                    println!("{d}");
                }
                Err(1)
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
