//! Evaluation of the splitting operator and the relaxed fixed-point loop.
//!
//! Blocks are stored as matrix rows: `z` is `(n-1) x d`, the lifted `w`,
//! `x` and the diagnostic `a` are `n x d`, `u` is `m x d`.

use std::io::Write;
use std::time::Instant;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, OracleKind, Result};
use crate::linalg::frobenius;
use crate::ops::{Point, ProblemSpec};
use crate::params::{forward_coupling, laplacian_factor, CausalPair, SplittingParams, NULL_TOL};

/// Relaxation used when none is given.
pub const DEFAULT_THETA: f64 = 0.9;
/// Residual growth (relative to the first residual) treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Default stopping threshold relative to the first residual.
pub const DEFAULT_RELATIVE_STOP: f64 = 1e-10;

/// Header of the per-iteration CSV.
pub const CSV_HEADER: &str = "iter,fp_residual,variance,objective,elapsed_ms";

/// How the state carried between iterations couples into the sweep.
#[derive(Debug, Clone)]
enum Coupling {
    /// `z ∈ H^(n-1)`, input `M z`, update `z - θ M^T x`.
    Minimal(Array2<f64>),
    /// `w ∈ H^n` with `Σ w_i = 0`, input `w`, update `w - θ 𝓛 x`.
    Lifted(Array2<f64>),
}

/// Which state space the iteration runs in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Form {
    Minimal,
    Lifted,
}

/// The operator `T` bound to a problem, with sparse coefficient lists.
#[derive(Debug, Clone)]
pub struct SplittingOperator {
    problem: ProblemSpec,
    coupling: Coupling,
    theta: f64,
    gamma: Array1<f64>,
    /// `(h, L[i, h])` for `h < i`.
    lower: Vec<Vec<(usize, f64)>>,
    /// `(j, H[i, j])`.
    feed: Vec<Vec<(usize, f64)>>,
    /// `(h, K[j, h])`.
    read: Vec<Vec<(usize, f64)>>,
    /// Forwards evaluated right before resolvent `i`.
    schedule: Vec<Vec<usize>>,
}

/// Output of one evaluation of `T`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// `T(z)` (or the lifted `w⁺`).
    pub next: Array2<f64>,
    pub x: Array2<f64>,
    pub u: Array2<f64>,
    /// `a_i = (input_i - x_i) / γ_i`, an element of `A_i(x_i)`.
    pub a: Array2<f64>,
}

impl Evaluation {
    /// `max_i ||x_i - x̄||`.
    pub fn consensus_error(&self) -> f64 {
        let mean = self.x.mean_axis(Axis(0)).expect("n >= 2");
        self.x
            .rows()
            .into_iter()
            .map(|r| {
                let d = &r - &mean;
                d.dot(&d).sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `||Σ a_i + Σ u_j||`, zero at fixed points.
    pub fn inclusion_residual(&self) -> f64 {
        let total = self.a.sum_axis(Axis(0)) + self.u.sum_axis(Axis(0));
        total.dot(&total).sqrt()
    }

    pub fn variance(&self) -> f64 {
        row_variance(self.x.view())
    }

    pub fn solution(&self) -> Point {
        self.x.mean_axis(Axis(0)).expect("n >= 2")
    }
}

fn row_variance(x: ArrayView2<f64>) -> f64 {
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    x.rows()
        .into_iter()
        .map(|r| {
            let d = &r - &mean;
            d.dot(&d)
        })
        .sum::<f64>()
        / x.nrows() as f64
}

fn nonzeros<'a>(row: impl IntoIterator<Item = &'a f64>) -> Vec<(usize, f64)> {
    row.into_iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(i, v)| (i, *v))
        .collect()
}

impl SplittingOperator {
    /// The minimal-lifting iteration in `z ∈ H^(n-1)`.
    pub fn minimal(params: &SplittingParams, problem: &ProblemSpec) -> Result<Self> {
        Self::build(Coupling::Minimal(params.m().clone()), params, problem)
    }

    /// The lifted iteration in `w = M z` using `𝓛 = M M^T`.
    pub fn lifted(params: &SplittingParams, problem: &ProblemSpec) -> Result<Self> {
        Self::build(Coupling::Lifted(params.laplacian()), params, problem)
    }

    pub fn new(params: &SplittingParams, problem: &ProblemSpec, form: Form) -> Result<Self> {
        match form {
            Form::Minimal => Self::minimal(params, problem),
            Form::Lifted => Self::lifted(params, problem),
        }
    }

    /// Lifted iteration from `𝓛` directly, with `P = 0` so that
    /// `S = 𝓛 + W`.
    pub fn from_laplacian(
        laplacian: &Array2<f64>,
        causal: &CausalPair,
        beta: &[f64],
        theta: f64,
        problem: &ProblemSpec,
    ) -> Result<Self> {
        let n = laplacian.nrows();
        if laplacian.dim() != (n, n) || causal.n() != n {
            return Err(Error::Shape("laplacian and causal pair disagree on n".into()));
        }
        laplacian_factor(laplacian)?;
        if beta.len() != causal.m() {
            return Err(Error::Shape(format!(
                "beta has length {} but the causal pair has m = {}",
                beta.len(),
                causal.m()
            )));
        }
        let s = laplacian + &forward_coupling(causal, beta);
        let mut gamma = Array1::zeros(n);
        for i in 0..n {
            if s[[i, i]] <= 1e-12 {
                return Err(Error::DegenerateRow { index: i, value: s[[i, i]] });
            }
            gamma[i] = 2.0 / s[[i, i]];
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameters(format!("theta = {theta} is not in (0, 1)")));
        }
        let l = Array2::from_shape_fn((n, n), |(i, h)| if h < i { -s[[i, h]] } else { 0.0 });
        Self::from_parts(
            Coupling::Lifted(laplacian.clone()),
            gamma,
            &l,
            causal,
            beta,
            theta,
            problem,
        )
    }

    fn build(coupling: Coupling, params: &SplittingParams, problem: &ProblemSpec) -> Result<Self> {
        Self::from_parts(
            coupling,
            params.gamma().clone(),
            params.l(),
            params.causal(),
            params.beta().as_slice().expect("contiguous"),
            params.theta(),
            problem,
        )
    }

    fn from_parts(
        coupling: Coupling,
        gamma: Array1<f64>,
        l: &Array2<f64>,
        causal: &CausalPair,
        beta: &[f64],
        theta: f64,
        problem: &ProblemSpec,
    ) -> Result<Self> {
        let n = gamma.len();
        let m = causal.m();
        if problem.n() != n {
            return Err(Error::Shape(format!(
                "method has {n} resolvent slots, problem has {}",
                problem.n()
            )));
        }
        if problem.m() != m {
            return Err(Error::Shape(format!(
                "method has {m} forward slots, problem has {}",
                problem.m()
            )));
        }
        for (j, c) in problem.forwards().iter().enumerate() {
            if c.beta() > beta[j] * (1.0 + 1e-12) {
                return Err(Error::InvalidParameters(format!(
                    "forward {} has cocoercivity constant {} above the design value {}",
                    j + 1,
                    c.beta(),
                    beta[j]
                )));
            }
        }
        let lower = (0..n).map(|i| nonzeros(l.slice(s![i, ..i]))).collect();
        let feed = causal.h().rows().into_iter().map(nonzeros).collect();
        let read = causal.k().rows().into_iter().map(nonzeros).collect();
        let f = causal.f().entries();
        let schedule = (0..n)
            .map(|i| {
                let start = if i == 0 { 0 } else { f[i - 1] };
                (start..f[i]).collect()
            })
            .collect();
        Ok(Self {
            problem: problem.clone(),
            coupling,
            theta,
            gamma,
            lower,
            feed,
            read,
            schedule,
        })
    }

    pub fn form(&self) -> Form {
        match self.coupling {
            Coupling::Minimal(_) => Form::Minimal,
            Coupling::Lifted(_) => Form::Lifted,
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn gamma(&self) -> &Array1<f64> {
        &self.gamma
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    /// Shape of the carried state.
    pub fn state_dim(&self) -> (usize, usize) {
        let n = self.gamma.len();
        let rows = match self.coupling {
            Coupling::Minimal(_) => n - 1,
            Coupling::Lifted(_) => n,
        };
        (rows, self.problem.dimension())
    }

    pub fn zero_state(&self) -> Array2<f64> {
        Array2::zeros(self.state_dim())
    }

    /// One evaluation of `T`: every resolvent and every forward oracle is
    /// called exactly once.
    pub fn evaluate(&self, state: ArrayView2<f64>) -> Result<Evaluation> {
        if state.dim() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state has shape {:?}, expected {:?}",
                state.dim(),
                self.state_dim()
            )));
        }
        let n = self.gamma.len();
        let d = self.problem.dimension();
        let m = self.problem.m();
        let w = match &self.coupling {
            Coupling::Minimal(mm) => mm.dot(&state),
            Coupling::Lifted(_) => state.to_owned(),
        };
        let mut x = Array2::<f64>::zeros((n, d));
        let mut u = Array2::<f64>::zeros((m, d));
        let mut a = Array2::<f64>::zeros((n, d));
        let resolvents = self.problem.resolvents();
        let forwards = self.problem.forwards();
        let mut forward_calls = 0;

        for i in 0..n {
            for &j in &self.schedule[i] {
                let mut arg = Array1::<f64>::zeros(d);
                for &(h, k) in &self.read[j] {
                    arg.scaled_add(k, &x.row(h));
                }
                let out = forwards[j].evaluate(arg.view());
                if out.len() != d || !out.iter().all(|v| v.is_finite()) {
                    return Err(Error::Oracle { kind: OracleKind::Forward, index: j });
                }
                u.row_mut(j).assign(&out);
                forward_calls += 1;
            }
            let mut input = w.row(i).to_owned();
            for &(h, l) in &self.lower[i] {
                input.scaled_add(l, &x.row(h));
            }
            for &(j, hij) in &self.feed[i] {
                input.scaled_add(-hij, &u.row(j));
            }
            input *= self.gamma[i];
            let xi = resolvents[i].evaluate(self.gamma[i], input.view());
            if xi.len() != d || !xi.iter().all(|v| v.is_finite()) {
                return Err(Error::Oracle { kind: OracleKind::Resolvent, index: i });
            }
            let ai = (&input - &xi) / self.gamma[i];
            x.row_mut(i).assign(&xi);
            a.row_mut(i).assign(&ai);
        }
        debug_assert_eq!(forward_calls, m);

        let next = match &self.coupling {
            Coupling::Minimal(mm) => &state - &(mm.t().dot(&x) * self.theta),
            Coupling::Lifted(lap) => &state - &(lap.dot(&x) * self.theta),
        };
        Ok(Evaluation { next, x, u, a })
    }

    /// `||z⁺ - z|| / θ = ||M^T x||`, computed as `sqrt(<x, 𝓛 x>)` in the
    /// lifted form so both forms report the same number.
    fn residual(&self, state: ArrayView2<f64>, eval: &Evaluation) -> f64 {
        match &self.coupling {
            Coupling::Minimal(_) => frobenius((&eval.next - &state).view()) / self.theta,
            Coupling::Lifted(lap) => {
                // Edge form of <x, 𝓛 x>; stable near consensus.
                let n = eval.x.nrows();
                let mut total = 0.0;
                for i in 0..n {
                    for j in i + 1..n {
                        let wij = -lap[[i, j]];
                        if wij != 0.0 {
                            let diff = &eval.x.row(i) - &eval.x.row(j);
                            total += wij * diff.dot(&diff);
                        }
                    }
                }
                total.max(0.0).sqrt()
            }
        }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
}

/// Controls for [`run_operator`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RunOptions {
    pub max_iters: usize,
    /// Absolute threshold on the fixed-point residual.
    pub stop: f64,
    /// Threshold relative to the first residual.
    pub relative_stop: f64,
    /// Record wall time; off for byte-reproducible output.
    pub timing: bool,
}

impl RunOptions {
    pub fn new(max_iters: usize) -> Self {
        Self {
            max_iters,
            stop: 0.0,
            relative_stop: DEFAULT_RELATIVE_STOP,
            timing: true,
        }
    }

    pub fn with_stop(mut self, stop: f64) -> Self {
        self.stop = stop;
        self
    }

    pub fn with_relative_stop(mut self, relative_stop: f64) -> Self {
        self.relative_stop = relative_stop;
        self
    }

    pub fn with_timing(mut self, timing: bool) -> Self {
        self.timing = timing;
        self
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based count of evaluations of `T`.
    pub iter: usize,
    pub fp_residual: f64,
    /// Variance of the blocks of `x^(k+1)`.
    pub variance: f64,
    /// Objective at the consensus point, when the problem has one.
    pub objective: Option<f64>,
    pub elapsed_ms: Option<f64>,
}

/// Per-iteration history plus the final iterate.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub form: Form,
    /// `x̄` of the last evaluation.
    pub solution: Point,
    /// Last state (`z` or `w`).
    pub state: Array2<f64>,
    pub last: Evaluation,
}

impl RunReport {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn final_residual(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.fp_residual)
    }

    pub fn consensus_error(&self) -> f64 {
        self.last.consensus_error()
    }

    pub fn inclusion_residual(&self) -> f64 {
        self.last.inclusion_residual()
    }

    /// First iteration whose record satisfies `pred`.
    pub fn first_iter_where(&self, pred: impl Fn(&IterationRecord) -> bool) -> Option<usize> {
        self.records.iter().find(|r| pred(r)).map(|r| r.iter)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in &self.records {
            write!(out, "{},{},{},", r.iter, r.fp_residual, r.variance)?;
            if let Some(f) = r.objective {
                write!(out, "{f}")?;
            }
            out.write_all(b",")?;
            if let Some(t) = r.elapsed_ms {
                write!(out, "{t:.3}")?;
            }
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Iterates `state ← T(state)` until the residual drops below
/// `max(stop, relative_stop · r_1)` or `max_iters` evaluations are spent.
pub fn run_operator(op: &SplittingOperator, state0: Array2<f64>, opts: &RunOptions) -> Result<RunReport> {
    run_operator_with(op, state0, opts, |_, _| {})
}

/// As [`run_operator`], calling `observe(k, evaluation)` after every
/// evaluation.
pub fn run_operator_with(
    op: &SplittingOperator,
    state0: Array2<f64>,
    opts: &RunOptions,
    mut observe: impl FnMut(usize, &Evaluation),
) -> Result<RunReport> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidParameters("max_iters must be positive".into()));
    }
    let start = Instant::now();
    let mut state = state0;
    let mut records = Vec::with_capacity(opts.max_iters.min(1 << 16));
    let mut first = None;
    let mut termination = Termination::MaxIterations;
    let mut last = None;

    for k in 1..=opts.max_iters {
        let eval = op.evaluate(state.view())?;
        let residual = op.residual(state.view(), &eval);
        if !residual.is_finite() {
            return Err(Error::Divergence {
                iteration: k,
                residual,
                limit: f64::INFINITY,
            });
        }
        let r0 = *first.get_or_insert(residual);
        let limit = DIVERGENCE_FACTOR * r0;
        if r0 > 0.0 && residual > limit {
            return Err(Error::Divergence { iteration: k, residual, limit });
        }
        let objective = if op.problem.has_objective() {
            op.problem.objective(eval.solution().view())
        } else {
            None
        };
        records.push(IterationRecord {
            iter: k,
            fp_residual: residual,
            variance: eval.variance(),
            objective,
            elapsed_ms: opts.timing.then(|| start.elapsed().as_secs_f64() * 1e3),
        });
        observe(k, &eval);
        state = eval.next.clone();
        let done = residual <= opts.stop || residual <= opts.relative_stop * r0;
        last = Some(eval);
        if done {
            termination = Termination::Converged;
            break;
        }
    }

    let last = last.expect("at least one iteration");
    Ok(RunReport {
        records,
        termination,
        form: op.form(),
        solution: last.solution(),
        state,
        last,
    })
}

/// Runs the minimal-lifting iteration from `z0` (zero when `None`).
pub fn run(
    params: &SplittingParams,
    problem: &ProblemSpec,
    z0: Option<Array2<f64>>,
    opts: &RunOptions,
) -> Result<RunReport> {
    let op = SplittingOperator::minimal(params, problem)?;
    let z0 = z0.unwrap_or_else(|| op.zero_state());
    run_operator(&op, z0, opts)
}

/// Runs the lifted iteration `w⁺ = w - θ 𝓛 x` with `S = 𝓛 + W`, from `w0`
/// (zero when `None`), which must satisfy `Σ w0_i = 0`.
pub fn run_lifted(
    laplacian: &Array2<f64>,
    causal: &CausalPair,
    beta: &[f64],
    theta: f64,
    problem: &ProblemSpec,
    w0: Option<Array2<f64>>,
    opts: &RunOptions,
) -> Result<RunReport> {
    let op = SplittingOperator::from_laplacian(laplacian, causal, beta, theta, problem)?;
    let w0 = match w0 {
        Some(w) => {
            check_lifted_start(w.view())?;
            w
        }
        None => op.zero_state(),
    };
    run_operator(&op, w0, opts)
}

/// Checks `Σ_i w_i = 0` relative to the largest block.
pub fn check_lifted_start(w: ArrayView2<f64>) -> Result<()> {
    let total = w.sum_axis(Axis(0));
    let total = total.dot(&total).sqrt();
    let largest = w
        .rows()
        .into_iter()
        .map(|r| r.dot(&r).sqrt())
        .fold(0.0, f64::max);
    if total > NULL_TOL * largest.max(1.0) {
        return Err(Error::Initialization(format!(
            "lifted start must sum to zero, |Σ w_i| = {total:e}"
        )));
    }
    Ok(())
}

/// Consensus representative `x̄` of the blocks.
pub fn extract_solution(x: &[Point]) -> Point {
    crate::ops::mean_point(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{ForwardOracle, ResolventOracle};
    use crate::params::{assemble, full_laplacian, laplacian_factor, NondecreasingVector};
    use ndarray::array;

    fn zero_problem(n: usize, m: usize, d: usize) -> ProblemSpec {
        let resolvents = (0..n).map(|_| ResolventOracle::identity()).collect();
        let forwards = (0..m)
            .map(|_| ForwardOracle::constant("zero", Array1::zeros(d)))
            .collect();
        ProblemSpec::new(d, resolvents, forwards).unwrap()
    }

    fn sfb_like(n: usize, m: usize) -> SplittingParams {
        let f = NondecreasingVector::new(
            (0..n).map(|i| if i == 0 { 0 } else { m }).collect(),
            m,
        )
        .unwrap();
        let mut h = Array2::zeros((n, m));
        let mut k = Array2::zeros((m, n));
        for j in 0..m {
            h[[1, j]] = 1.0;
            k[[j, 0]] = 1.0;
        }
        let causal = CausalPair::new(h, k, f).unwrap();
        let mm = laplacian_factor(&full_laplacian(n)).unwrap();
        assemble(mm, Array2::zeros((n, 0)), Some(causal), vec![1.0; m], 0.5).unwrap()
    }

    #[test]
    fn zero_problem_fixed_point() {
        let params = sfb_like(3, 2);
        let problem = zero_problem(3, 2, 4);
        let op = SplittingOperator::minimal(&params, &problem).unwrap();
        let eval = op.evaluate(op.zero_state().view()).unwrap();
        assert!(eval.x.iter().all(|v| *v == 0.0));
        assert!(eval.next.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_operators_back_substitute_to_zero() {
        // A_i = Id has resolvent v / (1 + γ)
        let n = 4;
        let params = sfb_like(n, 0);
        let resolvents = (0..n)
            .map(|_| ResolventOracle::new("id", |g, v| v.to_owned() / (1.0 + g)))
            .collect();
        let problem = ProblemSpec::new(2, resolvents, vec![]).unwrap();
        let op = SplittingOperator::minimal(&params, &problem).unwrap();
        let eval = op.evaluate(op.zero_state().view()).unwrap();
        assert!(eval.x.iter().all(|v| *v == 0.0));
        assert!(eval.next.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_start_converges_immediately() {
        let params = sfb_like(3, 1);
        let problem = zero_problem(3, 1, 2);
        let report = run(&params, &problem, None, &RunOptions::new(50)).unwrap();
        assert_eq!(report.iterations(), 1);
        assert_eq!(report.termination, Termination::Converged);
    }

    #[test]
    fn extract_solution_examples() {
        let x = vec![array![0.0], array![2.0]];
        assert_eq!(extract_solution(&x), array![1.0]);
        let c = array![1.5, -2.0];
        assert_eq!(extract_solution(&[c.clone(), c.clone(), c.clone()]), c);
    }

    #[test]
    fn lifted_start_must_sum_to_zero() {
        let n = 3;
        let problem = zero_problem(n, 0, 2);
        let causal = CausalPair::empty(n);
        let w0 = Array2::from_elem((n, 2), 1.0);
        let err = run_lifted(&full_laplacian(n), &causal, &[], 0.5, &problem, Some(w0), &RunOptions::new(5));
        assert!(matches!(err, Err(Error::Initialization(_))));
    }

    #[test]
    fn mismatched_problem_rejected() {
        let params = sfb_like(3, 2);
        assert!(matches!(
            SplittingOperator::minimal(&params, &zero_problem(3, 1, 2)),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            SplittingOperator::minimal(&params, &zero_problem(4, 2, 2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn csv_layout() {
        let params = sfb_like(2, 0);
        let problem = zero_problem(2, 0, 1).with_objective(|_| 0.5);
        let z0 = Array2::from_elem((1, 1), 1.0);
        let report = run(&params, &problem, Some(z0), &RunOptions::new(3).with_timing(false)).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), report.iterations() + 1);
        assert!(lines[1].ends_with(",0.5,"));
    }
}
