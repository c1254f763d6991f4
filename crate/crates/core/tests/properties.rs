mod common;

use frugal_splitting::engine::{run_operator, RunOptions, SplittingOperator};
use frugal_splitting::heuristics::optimize_hk;
use frugal_splitting::linalg::{gram, min_eigenvalue, spectral_norm};
use frugal_splitting::ops::{
    huber_value_grad, project_halfspace, project_simplex, prox_norm_offset, soft_threshold_offset, Point,
};
use frugal_splitting::params::{
    factor_p, forward_coupling, infer_f, laplacian_factor, random_causal_pair_with, validate_params, Interval,
    NondecreasingVector, ParamsDocument, Tolerances,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vector(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0..10.0f64, d)
}

fn firmly_nonexpansive(p: &Point, q: &Point, v: &Point, w: &Point) -> bool {
    let dp = p - q;
    let dv = v - w;
    dp.dot(&dp) <= dp.dot(&dv) + 1e-9 * (1.0 + dv.dot(&dv))
}

fn random_pair(n: usize, m: usize, rng: &mut ChaCha8Rng) -> frugal_splitting::params::CausalPair {
    let f = NondecreasingVector::random(n, m, rng);
    random_causal_pair_with(&f, Interval::new(0.1, 2.0), Interval::new(0.1, 2.0), rng).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prox_norm_offset_is_firmly_nonexpansive(
        xi in vector(4), v in vector(4), w in vector(4), tau in 0.01..5.0f64,
    ) {
        let (xi, v, w) = (Array1::from(xi), Array1::from(v), Array1::from(w));
        let p = prox_norm_offset(xi.view(), tau, v.view());
        let q = prox_norm_offset(xi.view(), tau, w.view());
        prop_assert!(firmly_nonexpansive(&p, &q, &v, &w));
    }

    #[test]
    fn prox_norm_offset_optimality(xi in vector(3), v in vector(3), tau in 0.01..5.0f64) {
        let (xi, v) = (Array1::from(xi), Array1::from(v));
        let p = prox_norm_offset(xi.view(), tau, v.view());
        let off = &p - &xi;
        let r = off.dot(&off).sqrt();
        let dv = &v - &xi;
        if r > 1e-12 {
            // v - p = τ (p - ξ)/‖p - ξ‖
            let g = &v - &p - &(&off * (tau / r));
            prop_assert!(g.dot(&g).sqrt() <= 1e-9 * (1.0 + tau));
        } else {
            prop_assert!(dv.dot(&dv).sqrt() <= tau + 1e-12);
        }
    }

    #[test]
    fn soft_threshold_is_firmly_nonexpansive(
        x0 in vector(5), v in vector(5), w in vector(5), tau in 0.01..5.0f64,
    ) {
        let (x0, v, w) = (Array1::from(x0), Array1::from(v), Array1::from(w));
        let p = soft_threshold_offset(x0.view(), tau, v.view());
        let q = soft_threshold_offset(x0.view(), tau, w.view());
        prop_assert!(firmly_nonexpansive(&p, &q, &v, &w));
    }

    #[test]
    fn simplex_projection_is_feasible_and_idempotent(v in vector(6), w in vector(6)) {
        let (v, w) = (Array1::from(v), Array1::from(w));
        let p = project_simplex(v.view());
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        let again = project_simplex(p.view());
        prop_assert!((&again - &p).iter().all(|d| d.abs() <= 1e-12));
        // Variational inequality against a random simplex point.
        let y = project_simplex(w.view());
        prop_assert!((&v - &p).dot(&(&y - &p)) <= 1e-9);
        let q = project_simplex(w.view());
        prop_assert!(firmly_nonexpansive(&p, &q, &v, &w));
    }

    #[test]
    fn halfspace_projection(c in vector(4), b in -5.0..5.0f64, v in vector(4), w in vector(4)) {
        let (c, v, w) = (Array1::from(c), Array1::from(v), Array1::from(w));
        prop_assume!(c.dot(&c) > 1e-6);
        let p = project_halfspace(c.view(), b, v.view()).unwrap();
        let q = project_halfspace(c.view(), b, w.view()).unwrap();
        prop_assert!(c.dot(&p) <= b + 1e-9);
        prop_assert!(firmly_nonexpansive(&p, &q, &v, &w));
        if c.dot(&v) <= b {
            prop_assert_eq!(p, v);
        }
    }

    #[test]
    fn huber_gradient_matches_finite_differences(
        d1 in 0.0..2.0f64, width in 0.0..3.0f64, z in -8.0..8.0f64,
    ) {
        let d2 = d1 + width;
        let h = 1e-6;
        // Away from the knees, where the value is not twice differentiable.
        prop_assume!([d1, d2].iter().all(|k| (z.abs() - k).abs() > 2.0 * h));
        let (_, g) = huber_value_grad(d1, d2, z).unwrap();
        let (up, _) = huber_value_grad(d1, d2, z + h).unwrap();
        let (down, _) = huber_value_grad(d1, d2, z - h).unwrap();
        prop_assert!(((up - down) / (2.0 * h) - g).abs() <= 1e-6);
        prop_assert!(g.abs() <= d2 - d1 + 1e-15);
    }

    #[test]
    fn huber_is_continuous_at_the_knees(d1 in 0.0..2.0f64, width in 0.0..3.0f64) {
        let d2 = d1 + width;
        for k in [d1, d2, -d1, -d2] {
            let (a, ga) = huber_value_grad(d1, d2, k - 1e-9).unwrap();
            let (b, gb) = huber_value_grad(d1, d2, k + 1e-9).unwrap();
            prop_assert!((a - b).abs() <= 1e-7);
            prop_assert!((ga - gb).abs() <= 1e-7);
        }
    }

    #[test]
    fn hdk_is_strictly_lower(seed in any::<u64>(), n in 2usize..=8, m in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(n, m, &mut rng);
        let d = Array1::from_shape_simple_fn(m, || rng.random_range(0.0..3.0));
        let hdk = (pair.h() * &d).dot(pair.k());
        for i in 0..n {
            for h in i..n {
                prop_assert_eq!(hdk[[i, h]], 0.0);
            }
        }
    }

    #[test]
    fn inferred_schedule_is_minimal(seed in any::<u64>(), n in 2usize..=8, m in 0usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pair = random_pair(n, m, &mut rng);
        let inferred = infer_f(pair.h(), pair.k()).unwrap();
        for (a, b) in inferred.entries().iter().zip(pair.f().entries()) {
            prop_assert!(a <= b);
        }
        prop_assert!(frugal_splitting::params::is_causal_pair(pair.h(), pair.k(), &inferred).unwrap());
    }

    #[test]
    fn random_parameters_validate(seed in any::<u64>(), n in 2usize..=8, m in 0usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = common::random_params(n, m, &mut rng);
        let report = validate_params(&params, &Tolerances::default());
        prop_assert!(report.passed(), "{report:?}");
        // S 1 = 0 and L strictly lower.
        let ones = Array1::<f64>::ones(n);
        prop_assert!(params.s().dot(&ones).iter().all(|v| v.abs() <= 1e-9));
        for i in 0..n {
            for h in i..n {
                prop_assert_eq!(params.l()[[i, h]], 0.0);
            }
        }
    }

    #[test]
    fn params_json_round_trip_is_exact(seed in any::<u64>(), n in 2usize..=6, m in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = common::random_params(n, m, &mut rng);
        let doc = ParamsDocument::from_params(&params).unwrap();
        let back = ParamsDocument::from_json(&doc.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &doc);
        let rebuilt = back.to_params().unwrap();
        prop_assert_eq!(rebuilt.m(), params.m());
        prop_assert_eq!(rebuilt.h(), params.h());
        prop_assert_eq!(rebuilt.k(), params.k());
        prop_assert_eq!(rebuilt.theta(), params.theta());
    }

    #[test]
    fn factor_p_round_trip(seed in any::<u64>(), n in 2usize..=7, m in 0usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = common::random_params(n, m, &mut rng);
        let extra = weighted_laplacian(n, &mut rng);
        let target = gram(base.m().view()) + base.w() + &extra;
        let p = factor_p(&target, base.m(), base.w()).unwrap();
        let back = gram(base.m().view()) + gram(p.view()) + base.w();
        prop_assert!((&back - &target).iter().all(|d| d.abs() <= 1e-9));
        prop_assert!(p.sum_axis(ndarray::Axis(0)).iter().all(|v| v.abs() <= 1e-9));
    }

    #[test]
    fn laplacian_factor_round_trip(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lap = weighted_laplacian(n, &mut rng);
        // Add a spanning path so the graph is connected.
        let mut lap = lap;
        for i in 0..n - 1 {
            lap[[i, i]] += 1.0;
            lap[[i + 1, i + 1]] += 1.0;
            lap[[i, i + 1]] -= 1.0;
            lap[[i + 1, i]] -= 1.0;
        }
        let m = laplacian_factor(&lap).unwrap();
        prop_assert_eq!(m.dim(), (n, n - 1));
        prop_assert!((&gram(m.view()) - &lap).iter().all(|d| d.abs() <= 1e-9));
    }

    #[test]
    fn optimize_hk_is_feasible_and_beats_the_start(seed in any::<u64>(), n in 2usize..=6, m in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = NondecreasingVector::random(n, m, &mut rng);
        let beta: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..4.0)).collect();
        let result = optimize_hk(&f, &beta, 200).unwrap();
        for j in 0..m {
            let col: f64 = result.h.column(j).sum();
            let row: f64 = result.k.row(j).sum();
            prop_assert!((col - 1.0).abs() <= 1e-12 && (row - 1.0).abs() <= 1e-12);
            for i in 0..n {
                if !f.h_allowed(i, j) {
                    prop_assert_eq!(result.h[[i, j]], 0.0);
                }
                if !f.k_allowed(j, i) {
                    prop_assert_eq!(result.k[[j, i]], 0.0);
                }
            }
        }
        let objective = hk_objective(&result.h, &result.k, &beta);
        prop_assert!((objective - result.objective).abs() <= 1e-9 * (1.0 + objective));
        let (h0, k0) = uniform_start(&f);
        prop_assert!(result.objective <= hk_objective(&h0, &k0, &beta) + 1e-12);
        // The coupling it induces is positive semidefinite.
        let pair = result.causal_pair(&f).unwrap();
        prop_assert!(min_eigenvalue(forward_coupling(&pair, &beta).view()) >= -1e-9);
    }

    #[test]
    fn km_residual_is_nonincreasing(seed in any::<u64>(), n in 2usize..=5, m in 0usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = common::random_params(n, m, &mut rng);
        let problem = common::affine_problem(n, params.beta().as_slice().unwrap(), 3, &mut rng);
        let op = SplittingOperator::minimal(&params, &problem).unwrap();
        let z0 = common::uniform_matrix(n - 1, 3, &mut rng) * 10.0;
        let opts = RunOptions::new(200).with_relative_stop(0.0).with_timing(false);
        let report = run_operator(&op, z0, &opts).unwrap();
        let r0 = report.records[0].fp_residual;
        for w in report.records.windows(2) {
            prop_assert!(w[1].fp_residual <= w[0].fp_residual + 1e-9 * r0.max(1.0));
        }
    }
}

fn weighted_laplacian(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut lap = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(0.5) {
                let w = rng.random_range(0.1..2.0);
                lap[[i, i]] += w;
                lap[[j, j]] += w;
                lap[[i, j]] -= w;
                lap[[j, i]] -= w;
            }
        }
    }
    lap
}

fn hk_objective(h: &Array2<f64>, k: &Array2<f64>, beta: &[f64]) -> f64 {
    let mut x = k - &h.t();
    for (j, b) in beta.iter().enumerate() {
        x.row_mut(j).mapv_inplace(|v| v * b.sqrt());
    }
    spectral_norm(x.view())
}

fn uniform_start(f: &NondecreasingVector) -> (Array2<f64>, Array2<f64>) {
    let (n, m) = (f.n(), f.m());
    let mut h = Array2::zeros((n, m));
    let mut k = Array2::zeros((m, n));
    for j in 0..m {
        let hs: Vec<usize> = (0..n).filter(|&i| f.h_allowed(i, j)).collect();
        let ks: Vec<usize> = (0..n).filter(|&i| f.k_allowed(j, i)).collect();
        for &i in &hs {
            h[[i, j]] = 1.0 / hs.len() as f64;
        }
        for &i in &ks {
            k[[j, i]] = 1.0 / ks.len() as f64;
        }
    }
    (h, k)
}
