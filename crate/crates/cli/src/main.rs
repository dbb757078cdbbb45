use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use battopf_core::results::{report_table, TableFormat};
use battopf_core::{
    load_case, monte_carlo_validate, run_cutting_plane, DriverOptions, ResultsFile, RunStatus,
};
use clap::{Parser, Subcommand, ValueEnum};

const EXIT_OK: u8 = 0;
const EXIT_VALIDATION_FAILED: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_STALLED: u8 = 3;
const EXIT_USAGE: u8 = 64;
const EXIT_DATA: u8 = 65;

/// Robust multi-period DC dispatch with battery control.
#[derive(Debug, Parser)]
#[command(name = "battopf", version)]
struct Cli {
    /// Worker threads for separation and validation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the cutting-plane solver.
    Solve {
        case: PathBuf,
        scenario: PathBuf,
        /// Results JSON path.
        #[arg(long, default_value = "results.json")]
        out: PathBuf,
        /// Iteration log CSV path.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_iter: usize,
        /// Violation tolerance for separation, MW or MWh.
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Accepted for symmetry with `validate`; the solver is deterministic.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Replay sampled deviations against a results file.
    Validate {
        case: PathBuf,
        scenario: PathBuf,
        results: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Validation report JSON path; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summary table of one or more results files.
    Report {
        #[arg(required = true)]
        results: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Md)]
        format: Format,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Md,
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn data_error(error: anyhow::Error) -> Failure {
    Failure {
        code: EXIT_DATA,
        error,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<u8, Failure> {
    match command {
        Command::Solve {
            case,
            scenario,
            out,
            log,
            max_iter,
            tol,
            seed: _,
        } => solve(&case, &scenario, &out, log.as_deref(), max_iter, tol),
        Command::Validate {
            case,
            scenario,
            results,
            samples,
            seed,
            out,
        } => validate(&case, &scenario, &results, samples, seed, out.as_deref()),
        Command::Report { results, format } => report(&results, format),
    }
}

fn read_case(case: &Path, scenario: &Path) -> Result<battopf_core::GridCase, Failure> {
    load_case(case, scenario)
        .with_context(|| format!("reading {} with {}", case.display(), scenario.display()))
        .map_err(data_error)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(data_error)
}

fn solve(
    case_path: &Path,
    scenario: &Path,
    out: &Path,
    log: Option<&Path>,
    max_iter: usize,
    tol: f64,
) -> Result<u8, Failure> {
    if max_iter == 0 || tol.is_nan() || tol <= 0.0 {
        return Err(Failure {
            code: EXIT_USAGE,
            error: anyhow::anyhow!("--max-iter must be positive and --tol must be > 0"),
        });
    }
    let case = read_case(case_path, scenario)?;
    let options = DriverOptions {
        max_iter,
        tol,
        ..DriverOptions::default()
    };
    let report = run_cutting_plane(&case, &options)
        .context("solver failed")
        .map_err(data_error)?;
    let results = ResultsFile::from_report(&case, &report);
    write(out, &results.to_json().map_err(|e| data_error(e.into()))?)?;
    if let Some(path) = log {
        write(path, &report.log_csv())?;
    }

    let objective = results
        .objective
        .map_or("-".to_string(), |v| format!("{v:.2}"));
    println!(
        "status {}  objective {}  iterations {}  cuts {}  time {:.2} s",
        results.status,
        objective,
        report.iterations,
        report.cuts.total(),
        report.time_s
    );
    if let Some(msg) = &report.message {
        eprintln!("{msg}");
    }
    Ok(match report.status {
        RunStatus::Optimal => EXIT_OK,
        RunStatus::Infeasible => EXIT_INFEASIBLE,
        RunStatus::IterationLimit | RunStatus::Stalled => EXIT_STALLED,
    })
}

fn read_results(path: &Path) -> Result<ResultsFile, Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(data_error)?;
    ResultsFile::from_json(&text)
        .with_context(|| format!("parsing {}", path.display()))
        .map_err(data_error)
}

fn validate(
    case_path: &Path,
    scenario: &Path,
    results_path: &Path,
    samples: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    if samples == 0 {
        return Err(Failure {
            code: EXIT_USAGE,
            error: anyhow::anyhow!("--samples must be at least 1"),
        });
    }
    let case = read_case(case_path, scenario)?;
    let results = read_results(results_path)?;
    if results.objective.is_none() {
        return Err(data_error(anyhow::anyhow!(
            "{} holds no solution (status {})",
            results_path.display(),
            results.status
        )));
    }
    let report = monte_carlo_validate(&case, &results.pg_mw, &results.policy(), samples, seed)
        .context("validation rejected the results")
        .map_err(data_error)?;
    let json = serde_json::to_string_pretty(&report)
        .context("encoding the report")
        .map_err(data_error)?;
    match out {
        Some(path) => {
            write(path, &json)?;
            println!(
                "{}  samples {}  violations {}  max {:e}",
                if report.pass { "pass" } else { "fail" },
                report.samples,
                report.violation_count,
                report.max_violation.overall()
            );
        }
        None => println!("{json}"),
    }
    Ok(if report.pass {
        EXIT_OK
    } else {
        EXIT_VALIDATION_FAILED
    })
}

fn report(paths: &[PathBuf], format: Format) -> Result<u8, Failure> {
    let results = paths
        .iter()
        .map(|p| read_results(p))
        .collect::<Result<Vec<_>, _>>()?;
    let format = match format {
        Format::Csv => TableFormat::Csv,
        Format::Md => TableFormat::Markdown,
    };
    print!("{}", report_table(&results, format));
    Ok(EXIT_OK)
}
