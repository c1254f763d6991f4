use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use frugal_splitting::engine::{Form, RunOptions, Termination};
use frugal_splitting::experiment::{build_method, compare, run_experiment, BenchSuite, CompareConfig, ExperimentMethod};
use frugal_splitting::ops::ProblemSpec;
use frugal_splitting::params::{validate_params, ParamsDocument, Tolerances};
use frugal_splitting::presets::MethodName;
use frugal_splitting::problems::{PortfolioInstance, PortfolioProblemConfig, ToyInstance, ToyProblemConfig};
use frugal_splitting::Error;
use serde_json::json;

const EXIT_INVALID: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "frugal-bench", version, about = "Run and compare frugal splitting methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a parameter file against the convergence conditions.
    Validate {
        #[arg(long)]
        params: PathBuf,
    },
    /// Run one method on one problem and write the iteration log.
    Run(RunArgs),
    /// Compare methods over repeated random instances.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ProblemKind {
    Toy,
    Portfolio,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    problem: ProblemKind,
    /// Preset id (dy, drs, graph-drs, gfb, rfb, sdy, agfb, sfb+) or a params JSON file.
    #[arg(long)]
    method: String,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Absolute stop on the fixed-point residual.
    #[arg(long, default_value_t = 0.0)]
    stop: f64,
    /// Leave elapsed_ms empty so output is byte-reproducible.
    #[arg(long)]
    no_timing: bool,

    #[arg(long, default_value_t = 5)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 30)]
    p: usize,
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long, default_value_t = 0.1)]
    delta1: f64,
    #[arg(long, default_value_t = 1.0)]
    delta2: f64,
    #[arg(long)]
    hetero: bool,

    #[arg(long, default_value_t = 6)]
    assets: usize,
    #[arg(long, default_value_t = 123)]
    days: usize,
    #[arg(long, default_value_t = 4)]
    chunks: usize,
    /// Returns CSV (days x assets) replacing the synthetic generator.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    suite: String,
    /// Comma-separated preset ids.
    #[arg(long, default_value = "gfb,rfb,sdy,agfb,sfb+")]
    methods: String,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Objective-residual threshold for iterations-to-threshold.
    #[arg(long, default_value_t = 1e-6)]
    threshold: f64,
    #[arg(long, default_value_t = 20_000)]
    reference_iters: usize,
    #[arg(long)]
    no_timing: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Ingestion { .. } => EXIT_IO,
        Error::Divergence { .. } => EXIT_DIVERGED,
        _ => EXIT_INVALID,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_code(&err))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { params } => validate(&params),
        Command::Run(args) => run(&args).unwrap_or_else(fail),
        Command::Bench(args) => bench(&args).unwrap_or_else(fail),
    }
}

fn read_params(path: &Path) -> Result<ParamsDocument, Error> {
    ParamsDocument::from_json(&fs::read_to_string(path)?)
}

fn validate(path: &Path) -> ExitCode {
    let doc = match read_params(path) {
        Ok(doc) => doc,
        Err(e) => return fail(e),
    };
    match doc.to_params() {
        Ok(params) => {
            let report = validate_params(&params, &Tolerances::default());
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            if report.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_INVALID)
            }
        }
        // Structurally invalid bundles cannot be assembled at all.
        Err(e) => {
            println!("{}", json!({ "passed": false, "error": e.to_string() }));
            ExitCode::from(EXIT_INVALID)
        }
    }
}

fn build_problem(args: &RunArgs) -> Result<(ProblemSpec, serde_json::Value), Error> {
    match args.problem {
        ProblemKind::Toy => {
            let config = ToyProblemConfig {
                n: args.n,
                d: args.d,
                p: args.p,
                m: args.m,
                delta1: args.delta1,
                delta2: args.delta2,
                seed: args.seed,
                hetero: args.hetero,
            };
            let echo = json!({ "problem": "toy", "toy": config });
            Ok((ToyInstance::generate(&config)?.problem()?, echo))
        }
        ProblemKind::Portfolio => {
            let config = PortfolioProblemConfig {
                assets: args.assets,
                days: args.days,
                chunks: args.chunks,
                seed: args.seed,
                data: args.data.clone(),
                ..Default::default()
            };
            let echo = json!({ "problem": "portfolio", "portfolio": config });
            Ok((PortfolioInstance::generate(&config)?.problem()?, echo))
        }
    }
}

fn resolve_method(spec: &str, problem: &ProblemSpec, seed: u64) -> Result<ExperimentMethod, Error> {
    if let Ok(name) = spec.parse::<MethodName>() {
        return Ok(build_method(name, problem, seed)?.into());
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::InvalidParameters(format!(
            "'{spec}' is neither a preset id nor an existing params file"
        )));
    }
    let params = read_params(path)?.to_params()?;
    Ok(ExperimentMethod {
        label: path.file_stem().map_or_else(|| spec.to_owned(), |s| s.to_string_lossy().into_owned()),
        params,
        form: Form::Minimal,
        notes: format!("loaded from {spec}"),
    })
}

fn run(args: &RunArgs) -> Result<ExitCode, Error> {
    let (problem, mut echo) = build_problem(args)?;
    let method = resolve_method(&args.method, &problem, args.seed)?;
    let report = validate_params(&method.params, &Tolerances::default());
    if !report.passed() {
        println!("{}", serde_json::to_string_pretty(&report)?);
        eprintln!("error: {} fails validation", method.label);
        return Ok(ExitCode::from(EXIT_INVALID));
    }
    echo["iters"] = json!(args.iters);
    echo["stop"] = json!(args.stop);
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let opts = RunOptions::new(args.iters)
        .with_stop(args.stop)
        .with_relative_stop(0.0)
        .with_timing(!args.no_timing);
    let result = run_experiment(&method, &problem, &opts, args.seed, echo, &args.out)?;
    let last = result.records.last().expect("nonempty run");
    let reason = match result.termination {
        Termination::Converged => "converged",
        Termination::MaxIterations => "max iterations",
    };
    println!(
        "{}: {} iterations ({reason}), fp_residual {:e}, variance {:e}{}",
        method.label,
        result.iterations(),
        last.fp_residual,
        last.variance,
        last.objective.map(|f| format!(", objective {f}")).unwrap_or_default()
    );
    Ok(ExitCode::SUCCESS)
}

fn bench(args: &BenchArgs) -> Result<ExitCode, Error> {
    let suite: BenchSuite = args.suite.parse()?;
    let methods = args
        .methods
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<Vec<MethodName>, _>>()?;
    let mut config = CompareConfig::new(suite, methods);
    config.repeats = args.repeats;
    config.seed = args.seed;
    config.iters = args.iters;
    config.threshold = args.threshold;
    config.reference_iters = args.reference_iters;
    config.timing = !args.no_timing;
    let summary = compare(&config, Some(&args.out))?;
    println!("{:<10} {:>8} {:>14} {:>14}", "method", "reached", "median iters", "median fp res");
    for m in &summary.methods {
        let iters = m.median_iters_to_threshold.map_or_else(|| "-".to_owned(), |v| format!("{v}"));
        println!(
            "{:<10} {:>5}/{:<2} {:>14} {:>14.3e}",
            m.method,
            m.reached,
            m.runs.len(),
            iters,
            m.median_final_fp_residual
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let diverged = Error::Divergence { iteration: 3, residual: 1e9, limit: 1e6 };
        assert_eq!(exit_code(&diverged), EXIT_DIVERGED);
        let io = Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "x"));
        assert_eq!(exit_code(&io), EXIT_IO);
        let bad_row = Error::Ingestion { row: 2, column: 1, message: "x".into() };
        assert_eq!(exit_code(&bad_row), EXIT_IO);
        assert_eq!(exit_code(&Error::InvalidParameters("x".into())), EXIT_INVALID);
    }
}
