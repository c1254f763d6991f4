//! Problem model and closed-form proximal building blocks.
//!
//! A problem is the inclusion `0 ∈ Σ A_i(x) + Σ C_j(x)` over `R^d`, where each
//! maximal monotone `A_i` is available only through its resolvent
//! `J_{γA_i} = (Id + γA_i)^{-1}` and each `C_j` is `1/β_j`-cocoercive and
//! evaluated directly.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Element of the Hilbert space `R^d`.
pub type Point = Array1<f64>;

type ResolventFn = dyn Fn(f64, ArrayView1<f64>) -> Point + Send + Sync;
type ForwardFn = dyn Fn(ArrayView1<f64>) -> Point + Send + Sync;
type ObjectiveFn = dyn Fn(ArrayView1<f64>) -> f64 + Send + Sync;

/// Resolvent `(step, v) ↦ J_{step·A}(v)` of a maximal monotone operator.
#[derive(Clone)]
pub struct ResolventOracle {
    label: String,
    eval: Arc<ResolventFn>,
}

impl ResolventOracle {
    pub fn new<F>(label: impl Into<String>, eval: F) -> Self
    where
        F: Fn(f64, ArrayView1<f64>) -> Point + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            eval: Arc::new(eval),
        }
    }

    /// The resolvent of the zero operator.
    pub fn identity() -> Self {
        Self::new("zero", |_, v| v.to_owned())
    }

    #[inline]
    pub fn evaluate(&self, step: f64, input: ArrayView1<f64>) -> Point {
        (self.eval)(step, input)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for ResolventOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ResolventOracle").field("label", &self.label).finish()
    }
}

/// A `1/β`-cocoercive operator evaluated directly.
///
/// `β = 0` is admitted only for constant operators.
#[derive(Clone)]
pub struct ForwardOracle {
    label: String,
    beta: f64,
    eval: Arc<ForwardFn>,
}

impl ForwardOracle {
    pub fn new<F>(label: impl Into<String>, beta: f64, eval: F) -> Result<Self>
    where
        F: Fn(ArrayView1<f64>) -> Point + Send + Sync + 'static,
    {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "cocoercivity constant must be finite and nonnegative, got {beta}"
            )));
        }
        Ok(Self {
            label: label.into(),
            beta,
            eval: Arc::new(eval),
        })
    }

    /// Constant operator `x ↦ c` (the only kind allowed with `β = 0`).
    pub fn constant(label: impl Into<String>, value: Point) -> Self {
        Self {
            label: label.into(),
            beta: 0.0,
            eval: Arc::new(move |_| value.clone()),
        }
    }

    #[inline]
    pub fn evaluate(&self, input: ArrayView1<f64>) -> Point {
        (self.eval)(input)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Same operator declared with a different cocoercivity constant.
    /// Only ever valid for a larger `beta`.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        if beta < self.beta {
            return Err(Error::InvalidParameters(format!(
                "cannot lower cocoercivity constant from {} to {beta}",
                self.beta
            )));
        }
        Ok(Self {
            label: self.label.clone(),
            beta,
            eval: Arc::clone(&self.eval),
        })
    }
}

impl fmt::Debug for ForwardOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ForwardOracle")
            .field("label", &self.label)
            .field("beta", &self.beta)
            .finish()
    }
}

/// An inclusion problem instance.
#[derive(Clone)]
pub struct ProblemSpec {
    dimension: usize,
    resolvents: Vec<ResolventOracle>,
    forwards: Vec<ForwardOracle>,
    objective: Option<Arc<ObjectiveFn>>,
}

impl ProblemSpec {
    pub fn new(
        dimension: usize,
        resolvents: Vec<ResolventOracle>,
        forwards: Vec<ForwardOracle>,
    ) -> Result<Self> {
        if resolvents.len() < 2 {
            return Err(Error::InvalidParameters(format!(
                "need at least two resolvent oracles, got {}",
                resolvents.len()
            )));
        }
        if dimension == 0 {
            return Err(Error::InvalidParameters("dimension must be positive".into()));
        }
        Ok(Self {
            dimension,
            resolvents,
            forwards,
            objective: None,
        })
    }

    pub fn with_objective<F>(mut self, objective: F) -> Self
    where
        F: Fn(ArrayView1<f64>) -> f64 + Send + Sync + 'static,
    {
        self.objective = Some(Arc::new(objective));
        self
    }

    /// Replaces every cocoercivity constant by `beta` (must not decrease any).
    pub fn with_uniform_beta(&self, beta: f64) -> Result<Self> {
        let forwards = self
            .forwards
            .iter()
            .map(|c| c.with_beta(beta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            forwards,
            ..self.clone()
        })
    }

    /// Same problem with the forward oracles reordered: forward `j` of the
    /// result is forward `order[j]` of `self`.
    pub fn with_forward_order(&self, order: &[usize]) -> Result<Self> {
        let m = self.forwards.len();
        let mut seen = vec![false; m];
        if order.len() != m || order.iter().any(|&j| j >= m || std::mem::replace(&mut seen[j], true)) {
            return Err(Error::InvalidParameters(format!("{order:?} is not a permutation of 0..{m}")));
        }
        Ok(Self {
            forwards: order.iter().map(|&j| self.forwards[j].clone()).collect(),
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.resolvents.len()
    }

    pub fn m(&self) -> usize {
        self.forwards.len()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn resolvents(&self) -> &[ResolventOracle] {
        &self.resolvents
    }

    pub fn forwards(&self) -> &[ForwardOracle] {
        &self.forwards
    }

    pub fn beta(&self) -> Vec<f64> {
        self.forwards.iter().map(|c| c.beta()).collect()
    }

    pub fn objective(&self, x: ArrayView1<f64>) -> Option<f64> {
        self.objective.as_ref().map(|f| f(x))
    }

    pub fn has_objective(&self) -> bool {
        self.objective.is_some()
    }
}

impl fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("dimension", &self.dimension)
            .field("resolvents", &self.resolvents)
            .field("forwards", &self.forwards)
            .field("objective", &self.objective.is_some())
            .finish()
    }
}

fn norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

/// Proximity operator of `x ↦ τ‖x − ξ‖`.
pub fn prox_norm_offset(xi: ArrayView1<f64>, tau: f64, v: ArrayView1<f64>) -> Point {
    let diff = &v - &xi;
    let r = norm(diff.view());
    if r <= tau {
        xi.to_owned()
    } else {
        &v - &(diff * (tau / r))
    }
}

/// Value and derivative of the scalar Huber-like function `h_{δ1,δ2}`.
///
/// Zero on `|z| ≤ δ1`, quadratic `½(|z|−δ1)²` up to `δ2`, linear beyond.
pub fn huber_value_grad(delta1: f64, delta2: f64, z: f64) -> Result<(f64, f64)> {
    if !(0.0 <= delta1 && delta1 <= delta2) {
        return Err(Error::InvalidParameters(format!(
            "huber knees must satisfy 0 <= delta1 <= delta2, got ({delta1}, {delta2})"
        )));
    }
    Ok(huber_unchecked(delta1, delta2, z))
}

#[inline]
pub(crate) fn huber_unchecked(delta1: f64, delta2: f64, z: f64) -> (f64, f64) {
    let a = z.abs();
    if a <= delta1 {
        (0.0, 0.0)
    } else if a <= delta2 {
        let t = a - delta1;
        (0.5 * t * t, z.signum() * t)
    } else {
        (
            (delta2 - delta1) * a - 0.5 * (delta2 * delta2 - delta1 * delta1),
            z.signum() * (delta2 - delta1),
        )
    }
}

/// Euclidean projection onto the unit simplex (sort-then-threshold).
pub fn project_simplex(v: ArrayView1<f64>) -> Point {
    let mut sorted: Vec<f64> = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            threshold = t;
        }
    }
    v.mapv(|x| (x - threshold).max(0.0))
}

/// Projection onto the halfspace `{x : ⟨c, x⟩ ≤ b}`.
pub fn project_halfspace(c: ArrayView1<f64>, b: f64, v: ArrayView1<f64>) -> Result<Point> {
    let cc = c.dot(&c);
    if cc == 0.0 {
        return Err(Error::InvalidParameters("halfspace normal must be nonzero".into()));
    }
    Ok(halfspace_unchecked(c, cc, b, v))
}

#[inline]
pub(crate) fn halfspace_unchecked(c: ArrayView1<f64>, cc: f64, b: f64, v: ArrayView1<f64>) -> Point {
    let excess = c.dot(&v) - b;
    if excess <= 0.0 {
        v.to_owned()
    } else {
        &v - &(&c * (excess / cc))
    }
}

/// Proximity operator of `x ↦ τ‖x − x0‖₁`.
pub fn soft_threshold_offset(x0: ArrayView1<f64>, tau: f64, v: ArrayView1<f64>) -> Point {
    ndarray::Zip::from(&x0).and(&v).map_collect(|&c, &x| {
        let d = x - c;
        c + d.signum() * (d.abs() - tau).max(0.0)
    })
}

/// Mean squared deviation of the blocks from their average.
pub fn variance(x: &[Point]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let mean = mean_point(x);
    x.iter()
        .map(|xi| {
            let d = xi - &mean;
            d.dot(&d)
        })
        .sum::<f64>()
        / x.len() as f64
}

pub(crate) fn mean_point(x: &[Point]) -> Point {
    let mut mean = Array1::zeros(x[0].len());
    for xi in x {
        mean += xi;
    }
    mean / x.len() as f64
}
