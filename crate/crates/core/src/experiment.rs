//! Experiment runner: builds presets for a problem, persists runs as CSV with
//! a JSON sidecar, and compares methods over seeded repeats.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::{run_operator, Form, RunOptions, RunReport, SplittingOperator, Termination, DEFAULT_THETA};
use crate::error::{Error, Result};
use crate::ops::ProblemSpec;
use crate::params::{
    validate_params, GraphKind, GraphSpec, NondecreasingVector, ParamsDocument, SplittingParams, Tolerances,
    ValidationReport,
};
use crate::presets::{
    agfb_spread, davis_yin_params, gfb_params, graph_drs_params, rfb_params, sdy_params, sfb_plus,
    MethodDescriptor, MethodName,
};
use crate::problems::{PortfolioInstance, PortfolioProblemConfig, ToyInstance, ToyProblemConfig};

/// A parameter choice ready to run, preset or user supplied.
#[derive(Debug, Clone)]
pub struct ExperimentMethod {
    pub label: String,
    pub params: SplittingParams,
    pub form: Form,
    pub notes: String,
}

impl From<MethodDescriptor> for ExperimentMethod {
    fn from(d: MethodDescriptor) -> Self {
        Self {
            label: d.name.display_name().to_string(),
            params: d.params,
            form: d.form,
            notes: d.notes,
        }
    }
}

/// Instantiates a preset for `problem`, drawing any random design choice
/// (the schedule `F` of SFB+) from `seed`.
pub fn build_method(name: MethodName, problem: &ProblemSpec, seed: u64) -> Result<MethodDescriptor> {
    let (n, m) = (problem.n(), problem.m());
    let beta = problem.beta();
    let need = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameters(format!(
                "{name} needs {what}, problem has n = {n}, m = {m}"
            )))
        }
    };
    match name {
        MethodName::Dy => {
            need(n == 2, "n = 2")?;
            let total: f64 = beta.iter().sum();
            let gamma = if total > 0.0 { 1.0 / total } else { 1.0 };
            davis_yin_params(gamma, 1.0, &beta)
        }
        MethodName::Drs => {
            need(n == 2 && m == 0, "n = 2 and m = 0")?;
            davis_yin_params(1.0, 1.0, &[])
        }
        MethodName::GraphDrs => {
            need(m == 0, "m = 0")?;
            let kind = if n > 2 { GraphKind::Ring } else { GraphKind::Path };
            graph_drs_params(&GraphSpec::build(kind, n)?, &GraphSpec::build(GraphKind::Complete, n)?)
        }
        MethodName::Gfb => {
            need(m > 0, "m >= 1")?;
            let complete = GraphSpec::build(GraphKind::Complete, n)?;
            gfb_params(&complete, &complete, &GraphSpec::build(GraphKind::Path, n)?, &beta)
        }
        MethodName::Rfb => {
            need(m > 0, "m >= 1")?;
            rfb_params(n, &beta)
        }
        MethodName::Sdy => {
            need(m > 0, "m >= 1")?;
            sdy_params(n, &beta)
        }
        MethodName::Agfb => agfb_spread(&GraphSpec::build(GraphKind::Complete, n)?, &beta, DEFAULT_THETA),
        MethodName::SfbPlus => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = NondecreasingVector::random(n, m, &mut rng);
            sfb_plus(&f, &beta, DEFAULT_THETA)
        }
    }
}

/// Everything persisted next to a run's CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub method: String,
    pub notes: String,
    pub form: Form,
    pub seed: u64,
    pub config: Value,
    pub iterations: usize,
    pub termination: Termination,
    pub final_metrics: FinalMetrics,
    pub validation: ValidationReport,
    pub params: ParamsDocument,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub fp_residual: f64,
    pub variance: f64,
    pub objective: Option<f64>,
    pub consensus_error: f64,
    pub inclusion_residual: f64,
    pub solution: Vec<f64>,
}

impl FinalMetrics {
    fn of(report: &RunReport) -> Self {
        let last = report.records.last().expect("nonempty run");
        Self {
            fp_residual: last.fp_residual,
            variance: last.variance,
            objective: last.objective,
            consensus_error: report.consensus_error(),
            inclusion_residual: report.inclusion_residual(),
            solution: report.solution.to_vec(),
        }
    }
}

/// Path of the JSON sidecar for a CSV path.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Runs `iters` evaluations from the zero state and writes the CSV to `out`
/// plus a JSON sidecar with the config echo, final metrics, validation report
/// and parameters.
pub fn run_experiment(
    method: &ExperimentMethod,
    problem: &ProblemSpec,
    opts: &RunOptions,
    seed: u64,
    config: Value,
    out: &Path,
) -> Result<RunReport> {
    let validation = validate_params(&method.params, &Tolerances::default());
    if !validation.passed() {
        return Err(Error::InvalidParameters(format!(
            "{} fails validation: {}",
            method.label,
            serde_json::to_string(&validation)?
        )));
    }
    let op = SplittingOperator::new(&method.params, problem, method.form)?;
    let report = run_operator(&op, op.zero_state(), opts)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut csv = BufWriter::new(File::create(out)?);
    report.write_csv(&mut csv)?;
    let sidecar = Sidecar {
        method: method.label.clone(),
        notes: method.notes.clone(),
        form: method.form,
        seed,
        config,
        iterations: report.iterations(),
        termination: report.termination,
        final_metrics: FinalMetrics::of(&report),
        validation,
        params: ParamsDocument::from_params(&method.params)?,
    };
    fs::write(sidecar_path(out), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchSuite {
    ToyHomo,
    ToyHetero,
    Portfolio,
}

impl std::str::FromStr for BenchSuite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy-homo" => Ok(Self::ToyHomo),
            "toy-hetero" => Ok(Self::ToyHetero),
            "portfolio" => Ok(Self::Portfolio),
            _ => Err(Error::InvalidParameters(format!("unknown suite '{s}'"))),
        }
    }
}

impl BenchSuite {
    /// Problem instance for one repeat.
    pub fn instance(self, seed: u64) -> Result<ProblemSpec> {
        match self {
            BenchSuite::ToyHomo | BenchSuite::ToyHetero => ToyInstance::generate(&ToyProblemConfig {
                seed,
                hetero: self == BenchSuite::ToyHetero,
                ..Default::default()
            })?
            .problem(),
            BenchSuite::Portfolio => PortfolioInstance::generate(&PortfolioProblemConfig {
                seed,
                ..Default::default()
            })?
            .problem(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareConfig {
    pub suite: BenchSuite,
    pub methods: Vec<MethodName>,
    pub repeats: usize,
    pub seed: u64,
    pub iters: usize,
    /// Threshold on `|f(x̄) - f*|`.
    pub threshold: f64,
    /// Length of the SFB+ run giving the reference value `f*`.
    pub reference_iters: usize,
    pub timing: bool,
}

impl CompareConfig {
    pub fn new(suite: BenchSuite, methods: Vec<MethodName>) -> Self {
        Self {
            suite,
            methods,
            repeats: 5,
            seed: 0,
            iters: 1000,
            threshold: 1e-6,
            reference_iters: 20_000,
            timing: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub repeat: usize,
    pub seed: u64,
    pub iterations: usize,
    pub iters_to_threshold: Option<usize>,
    pub final_fp_residual: f64,
    pub final_objective_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// `None` when the median run never reached the threshold.
    pub median_iters_to_threshold: Option<f64>,
    pub reached: usize,
    pub median_final_fp_residual: f64,
    pub median_final_objective_residual: Option<f64>,
    pub runs: Vec<RunSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareSummary {
    pub config: CompareConfig,
    pub reference_objectives: Vec<Option<f64>>,
    pub methods: Vec<MethodSummary>,
}

/// Median with `None` ordered after every value.
fn median_opt(values: &[Option<f64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().map(|x| x.unwrap_or(f64::INFINITY)).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let med = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    med.is_finite().then_some(med)
}

/// Reference value `f*` from a long SFB+ run with the first forward schedule.
pub fn reference_objective(problem: &ProblemSpec, iters: usize) -> Result<Option<f64>> {
    if !problem.has_objective() {
        return Ok(None);
    }
    let method = build_method(MethodName::SfbPlus, problem, 0)?;
    let op = SplittingOperator::new(&method.params, problem, method.form)?;
    let opts = RunOptions::new(iters).with_relative_stop(1e-14).with_timing(false);
    let report = run_operator(&op, op.zero_state(), &opts)?;
    Ok(report.records.last().and_then(|r| r.objective))
}

struct RepeatOutcome {
    reference: Option<f64>,
    runs: Vec<RunSummary>,
}

/// Runs every method on a shared instance per repeat. Each repeat draws a
/// fresh instance, a random order of the forward terms and, for SFB+, a
/// random schedule. Writes per-run CSVs and `summary.json` when `out_dir` is
/// given.
pub fn compare(config: &CompareConfig, out_dir: Option<&Path>) -> Result<CompareSummary> {
    if config.methods.is_empty() {
        return Err(Error::InvalidParameters("no methods to compare".into()));
    }
    if config.repeats == 0 || config.iters == 0 {
        return Err(Error::InvalidParameters("repeats and iters must be positive".into()));
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let outcomes: Vec<RepeatOutcome> = (0..config.repeats)
        .into_par_iter()
        .map(|r| run_repeat(config, r, out_dir))
        .collect::<Result<_>>()?;

    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let runs: Vec<RunSummary> = outcomes.iter().map(|o| o.runs[k].clone()).collect();
            let iters: Vec<Option<f64>> = runs.iter().map(|r| r.iters_to_threshold.map(|i| i as f64)).collect();
            let fp: Vec<Option<f64>> = runs.iter().map(|r| Some(r.final_fp_residual)).collect();
            let obj: Vec<Option<f64>> = runs.iter().map(|r| r.final_objective_residual).collect();
            MethodSummary {
                method: name.display_name().to_string(),
                median_iters_to_threshold: median_opt(&iters),
                reached: runs.iter().filter(|r| r.iters_to_threshold.is_some()).count(),
                median_final_fp_residual: median_opt(&fp).unwrap_or(f64::NAN),
                median_final_objective_residual: if obj.iter().all(Option::is_some) {
                    median_opt(&obj)
                } else {
                    None
                },
                runs,
            }
        })
        .collect();
    let summary = CompareSummary {
        config: config.clone(),
        reference_objectives: outcomes.iter().map(|o| o.reference).collect(),
        methods,
    };
    if let Some(dir) = out_dir {
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(summary)
}

fn run_repeat(config: &CompareConfig, r: usize, out_dir: Option<&Path>) -> Result<RepeatOutcome> {
    let seed = config.seed.wrapping_add(r as u64);
    let base = config.suite.instance(seed)?;
    let mut order: Vec<usize> = (0..base.m()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    let problem = base.with_forward_order(&order)?;
    let reference = reference_objective(&problem, config.reference_iters)?;
    let opts = RunOptions::new(config.iters)
        .with_relative_stop(0.0)
        .with_timing(config.timing);
    let mut runs = Vec::with_capacity(config.methods.len());
    for &name in &config.methods {
        let method: ExperimentMethod = build_method(name, &problem, seed)?.into();
        let echo = json!({ "suite": config.suite, "repeat": r, "forward_order": order });
        let report = match out_dir {
            Some(dir) => {
                let path = dir.join(format!("{}_r{r}.csv", name.id().replace('+', "plus")));
                run_experiment(&method, &problem, &opts, seed, echo, &path)?
            }
            None => {
                let op = SplittingOperator::new(&method.params, &problem, method.form)?;
                run_operator(&op, op.zero_state(), &opts)?
            }
        };
        let gap = |f: Option<f64>| match (f, reference) {
            (Some(f), Some(star)) => Some((f - star).abs()),
            _ => None,
        };
        let iters_to_threshold = match reference {
            Some(_) => report.first_iter_where(|rec| gap(rec.objective).is_some_and(|g| g <= config.threshold)),
            None => report.first_iter_where(|rec| rec.fp_residual <= config.threshold),
        };
        let last = report.records.last().expect("nonempty");
        runs.push(RunSummary {
            repeat: r,
            seed,
            iterations: report.iterations(),
            iters_to_threshold,
            final_fp_residual: last.fp_residual,
            final_objective_residual: gap(last.objective),
        });
    }
    Ok(RepeatOutcome { reference, runs })
}
