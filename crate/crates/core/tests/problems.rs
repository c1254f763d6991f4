mod common;

use frugal_splitting::ops::{Point, ProblemSpec};
use frugal_splitting::problems::{PortfolioInstance, PortfolioProblemConfig, ToyInstance, ToyProblemConfig};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_point(d: usize, scale: f64, rng: &mut ChaCha8Rng) -> Point {
    Array1::from_shape_simple_fn(d, || scale * rng.random_range(-1.0..1.0))
}

/// Monte Carlo check of `β <Cx - Cy, x - y> >= ||Cx - Cy||²` and of firm
/// nonexpansiveness of every resolvent.
fn check_oracles(problem: &ProblemSpec, scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = problem.dimension();
    for (j, c) in problem.forwards().iter().enumerate() {
        for _ in 0..1000 {
            let (x, y) = (random_point(d, scale, &mut rng), random_point(d, scale, &mut rng));
            let dc = c.evaluate(x.view()) - c.evaluate(y.view());
            let lhs = c.beta() * dc.dot(&(&x - &y));
            assert!(lhs + 1e-9 * (1.0 + lhs.abs()) >= dc.dot(&dc), "forward {j}");
        }
    }
    for (i, r) in problem.resolvents().iter().enumerate() {
        for _ in 0..1000 {
            let step = rng.random_range(0.01..3.0);
            let (v, w) = (random_point(d, scale, &mut rng), random_point(d, scale, &mut rng));
            let dp = r.evaluate(step, v.view()) - r.evaluate(step, w.view());
            assert!(dp.dot(&dp) <= dp.dot(&(&v - &w)) + 1e-9, "resolvent {i}");
        }
    }
}

#[test]
fn toy_oracles_respect_their_constants() {
    for hetero in [false, true] {
        let inst = ToyInstance::generate(&ToyProblemConfig { seed: 2, hetero, ..Default::default() }).unwrap();
        check_oracles(&inst.problem().unwrap(), 3.0, 1);
    }
}

#[test]
fn portfolio_oracles_respect_their_constants() {
    let inst = PortfolioInstance::generate(&PortfolioProblemConfig::default()).unwrap();
    check_oracles(&inst.problem().unwrap(), 1.0, 2);
}

#[test]
fn toy_objective_matches_the_problem_evaluator() {
    let inst = ToyInstance::generate(&ToyProblemConfig::default()).unwrap();
    let problem = inst.problem().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random_point(20, 2.0, &mut rng);
    assert_eq!(problem.objective(x.view()), Some(inst.objective(&x)));
}

#[test]
fn portfolio_gradients_match_finite_differences() {
    let inst = PortfolioInstance::generate(&PortfolioProblemConfig::default()).unwrap();
    let problem = inst.problem().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = problem.dimension();
    let x = random_point(d, 1.0, &mut rng);
    // The forwards sum to the gradient of x ↦ x^T Σ x - r^T x.
    let total = inst.sigma.iter().fold(ndarray::Array2::<f64>::zeros((d, d)), |acc, s| acc + s);
    let smooth = |x: &Point| x.dot(&total.dot(x)) - inst.mean_return.dot(x);
    let mut grad = Array1::<f64>::zeros(d);
    for c in problem.forwards() {
        grad += &c.evaluate(x.view());
    }
    let h = 1e-6;
    for k in 0..d {
        let mut up = x.clone();
        up[k] += h;
        let mut down = x.clone();
        down[k] -= h;
        let fd = (smooth(&up) - smooth(&down)) / (2.0 * h);
        assert!((fd - grad[k]).abs() <= 1e-5 * (1.0 + fd.abs()), "coordinate {k}: {fd} vs {}", grad[k]);
    }
}
