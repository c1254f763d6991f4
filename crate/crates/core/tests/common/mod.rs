#![allow(dead_code)]

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use frugal_splitting::linalg::{solve, spectral_norm};
use frugal_splitting::ops::{ForwardOracle, Point, ProblemSpec, ResolventOracle};
use frugal_splitting::params::{
    assemble, random_causal_pair_with, random_m, random_p, Interval, NondecreasingVector, SplittingParams,
};
use ndarray::{Array1, Array2};
use rand::Rng;

pub fn uniform_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

pub fn uniform_vector(len: usize, rng: &mut impl Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.random_range(-1.0..1.0))
}

/// `A x = B x + c` with `B` = PSD + skew; resolvent by a linear solve.
pub fn affine_resolvent(d: usize, rng: &mut impl Rng) -> ResolventOracle {
    let g = uniform_matrix(d, d, rng);
    let s = uniform_matrix(d, d, rng);
    let b = g.t().dot(&g) + &s - &s.t();
    let c = uniform_vector(d, rng);
    ResolventOracle::new("affine", move |step, v| {
        let lhs = Array2::<f64>::eye(d) + &(&b * step);
        let rhs = &v - &(&c * step);
        solve(lhs.view(), &rhs).expect("I + γB is nonsingular")
    })
}

/// `C x = Q^T Q x + q` with `||Q^T Q|| = beta`, hence `1/beta`-cocoercive.
pub fn affine_forward(d: usize, beta: f64, rng: &mut impl Rng) -> ForwardOracle {
    let q = uniform_matrix(d, d, rng);
    let mut qtq = q.t().dot(&q);
    qtq *= beta / spectral_norm(qtq.view());
    let offset = uniform_vector(d, rng);
    ForwardOracle::new("affine", beta, move |x| qtq.dot(&x) + &offset).unwrap()
}

pub fn affine_problem(n: usize, beta: &[f64], d: usize, rng: &mut impl Rng) -> ProblemSpec {
    let resolvents = (0..n).map(|_| affine_resolvent(d, rng)).collect();
    let forwards = beta.iter().map(|&b| affine_forward(d, b, rng)).collect();
    ProblemSpec::new(d, resolvents, forwards).unwrap()
}

/// Random valid parameters with a random `P` (possibly empty).
pub fn random_params(n: usize, m: usize, rng: &mut impl Rng) -> SplittingParams {
    let mm = random_m(n, Interval::new(-1.0, 1.0), rng.random()).unwrap();
    let cols = rng.random_range(0..=2);
    let p = random_p(n, cols, Interval::new(-1.0, 1.0), rng.random_range(0.1..2.0), rng.random());
    let f = NondecreasingVector::random(n, m, rng);
    let causal = random_causal_pair_with(&f, Interval::new(0.1, 1.0), Interval::new(0.1, 1.0), rng).unwrap();
    let beta = (0..m).map(|_| rng.random_range(0.2..3.0)).collect();
    let theta = rng.random_range(0.05..0.99);
    assemble(mm, p, Some(causal), beta, theta).unwrap()
}

/// Wraps every oracle with a shared call counter.
pub struct Counted {
    pub problem: ProblemSpec,
    pub resolvent_calls: Arc<AtomicUsize>,
    pub forward_calls: Arc<AtomicUsize>,
}

impl Counted {
    pub fn new(problem: &ProblemSpec) -> Self {
        let resolvent_calls = Arc::new(AtomicUsize::new(0));
        let forward_calls = Arc::new(AtomicUsize::new(0));
        let resolvents = problem
            .resolvents()
            .iter()
            .map(|r| {
                let (r, calls) = (r.clone(), resolvent_calls.clone());
                ResolventOracle::new(r.label().to_owned(), move |step, v| -> Point {
                    calls.fetch_add(1, Ordering::SeqCst);
                    r.evaluate(step, v)
                })
            })
            .collect();
        let forwards = problem
            .forwards()
            .iter()
            .map(|c| {
                let (c, calls) = (c.clone(), forward_calls.clone());
                ForwardOracle::new(c.label().to_owned(), c.beta(), move |x| -> Point {
                    calls.fetch_add(1, Ordering::SeqCst);
                    c.evaluate(x)
                })
                .unwrap()
            })
            .collect();
        Self {
            problem: ProblemSpec::new(problem.dimension(), resolvents, forwards).unwrap(),
            resolvent_calls,
            forward_calls,
        }
    }

    pub fn counts(&self) -> (usize, usize) {
        (
            self.resolvent_calls.load(Ordering::SeqCst),
            self.forward_calls.load(Ordering::SeqCst),
        )
    }
}
