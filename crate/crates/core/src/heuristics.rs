//! Design heuristics: complete-graph coupling, `P = 0`, and causal `(H, K)`
//! minimizing the spectral norm of the forward coupling.

use ndarray::{Array2, Axis};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, top_singular_triplet};
use crate::params::{assemble, full_laplacian, laplacian_factor, CausalPair, NondecreasingVector, SplittingParams};

/// Default iteration budget of [`optimize_hk`].
pub const DEFAULT_HK_BUDGET: usize = 500;

/// Coupling `M M^T` of the complete graph.
pub fn heuristic_laplacian(n: usize) -> Array2<f64> {
    full_laplacian(n)
}

#[derive(Debug, Clone, Serialize)]
pub struct HkOptimizationResult {
    pub h: Array2<f64>,
    pub k: Array2<f64>,
    /// `||sqrt(diag β) (K - H^T)||_2`.
    pub objective: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

impl HkOptimizationResult {
    pub fn causal_pair(&self, f: &NondecreasingVector) -> Result<CausalPair> {
        CausalPair::new(self.h.clone(), self.k.clone(), f.clone())
    }
}

/// Row-wise supports of `X = K - H^T`: `true` where `K[j, i]` lives,
/// `false` where `-H[i, j]` lives.
struct Supports {
    k_side: Array2<bool>,
    k_count: Vec<usize>,
    h_count: Vec<usize>,
}

impl Supports {
    fn new(f: &NondecreasingVector) -> Self {
        let (n, m) = (f.n(), f.m());
        let k_side = Array2::from_shape_fn((m, n), |(j, i)| f.k_allowed(j, i));
        let k_count: Vec<usize> = k_side.rows().into_iter().map(|r| r.iter().filter(|b| **b).count()).collect();
        let h_count = k_count.iter().map(|c| n - c).collect();
        Self { k_side, k_count, h_count }
    }

    /// Euclidean projection onto `{row sums over K-side = 1, over H-side = -1}`.
    fn project(&self, x: &mut Array2<f64>) {
        for (j, mut row) in x.axis_iter_mut(Axis(0)).enumerate() {
            let (mut ks, mut hs) = (0.0, 0.0);
            for (i, v) in row.iter().enumerate() {
                if self.k_side[[j, i]] {
                    ks += v;
                } else {
                    hs += v;
                }
            }
            let kshift = (ks - 1.0) / self.k_count[j] as f64;
            let hshift = if self.h_count[j] > 0 { (hs + 1.0) / self.h_count[j] as f64 } else { 0.0 };
            for (i, v) in row.iter_mut().enumerate() {
                *v -= if self.k_side[[j, i]] { kshift } else { hshift };
            }
        }
    }

    /// Projection onto the tangent space (zero row sums per side).
    fn project_direction(&self, g: &mut Array2<f64>) {
        for (j, mut row) in g.axis_iter_mut(Axis(0)).enumerate() {
            let (mut ks, mut hs) = (0.0, 0.0);
            for (i, v) in row.iter().enumerate() {
                if self.k_side[[j, i]] {
                    ks += v;
                } else {
                    hs += v;
                }
            }
            let kshift = ks / self.k_count[j] as f64;
            let hshift = if self.h_count[j] > 0 { hs / self.h_count[j] as f64 } else { 0.0 };
            for (i, v) in row.iter_mut().enumerate() {
                *v -= if self.k_side[[j, i]] { kshift } else { hshift };
            }
        }
    }

    fn uniform(&self) -> Array2<f64> {
        Array2::from_shape_fn(self.k_side.dim(), |(j, i)| {
            if self.k_side[[j, i]] {
                1.0 / self.k_count[j] as f64
            } else {
                -1.0 / self.h_count[j] as f64
            }
        })
    }

    fn split(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let (m, n) = x.dim();
        let mut h = Array2::zeros((n, m));
        let mut k = Array2::zeros((m, n));
        for ((j, i), &v) in x.indexed_iter() {
            if self.k_side[[j, i]] {
                k[[j, i]] = v;
            } else {
                h[[i, j]] = -v;
            }
        }
        (h, k)
    }
}

fn scaled(x: &Array2<f64>, sqrt_beta: &[f64]) -> Array2<f64> {
    let mut d = x.clone();
    for (j, mut row) in d.axis_iter_mut(Axis(0)).enumerate() {
        row *= sqrt_beta[j];
    }
    d
}

/// Minimizes `||sqrt(diag β)(K - H^T)||_2` over causal pairs with schedule `f`
/// and unit row/column sums, by projected subgradient with a Polyak step
/// towards an adaptively lowered target level.
pub fn optimize_hk(f: &NondecreasingVector, beta: &[f64], budget: usize) -> Result<HkOptimizationResult> {
    let (n, m) = (f.n(), f.m());
    if beta.len() != m {
        return Err(Error::Shape(format!("beta has length {} but m = {m}", beta.len())));
    }
    if beta.iter().any(|b| !(*b >= 0.0)) {
        return Err(Error::InvalidParameters("beta entries must be nonnegative".into()));
    }
    if m == 0 {
        return Ok(HkOptimizationResult {
            h: Array2::zeros((n, 0)),
            k: Array2::zeros((0, n)),
            objective: 0.0,
            iterations_used: 0,
            converged: true,
        });
    }
    let supports = Supports::new(f);
    if let Some(j) = (0..m).find(|&j| supports.k_count[j] == 0 || supports.h_count[j] == 0) {
        return Err(Error::NotCausal(format!("forward {} has empty allowed support", j + 1)));
    }
    let sqrt_beta: Vec<f64> = beta.iter().map(|b| b.sqrt()).collect();

    let mut x = supports.uniform();
    let mut best = x.clone();
    let mut best_val = spectral_norm(scaled(&x, &sqrt_beta).view());
    let mut delta = 0.5 * best_val;
    let mut stall = 0;
    let mut iterations_used = 0;
    let mut converged = best_val == 0.0;

    while iterations_used < budget && !converged {
        iterations_used += 1;
        let d = scaled(&x, &sqrt_beta);
        let top = top_singular_triplet(d.view());
        let val = top.sigma;
        if val < best_val {
            best_val = val;
            best.assign(&x);
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= 10 {
            delta *= 0.5;
            stall = 0;
        }
        if delta <= 1e-12 * best_val.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
        // subgradient of the scaled spectral norm: diag(sqrt β) u v^T
        let mut g = Array2::from_shape_fn((m, n), |(j, i)| sqrt_beta[j] * top.left[j] * top.right[i]);
        supports.project_direction(&mut g);
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg <= f64::EPSILON * f64::EPSILON {
            converged = true;
            break;
        }
        let level = best_val - delta;
        let step = (val - level).max(0.0) / gg;
        x.scaled_add(-step, &g);
        supports.project(&mut x);
    }

    let (h, k) = supports.split(&best);
    let objective = spectral_norm(scaled(&best, &sqrt_beta).view());
    Ok(HkOptimizationResult {
        h,
        k,
        objective,
        iterations_used,
        converged,
    })
}

/// All three heuristics: `M M^T = n I - 1 1^T`, `P = 0`, and `(H, K)` from
/// [`optimize_hk`].
pub fn sfb_plus_params(f: &NondecreasingVector, beta: &[f64], theta: f64) -> Result<SplittingParams> {
    sfb_plus_with_budget(f, beta, theta, DEFAULT_HK_BUDGET)
}

pub fn sfb_plus_with_budget(
    f: &NondecreasingVector,
    beta: &[f64],
    theta: f64,
    budget: usize,
) -> Result<SplittingParams> {
    let n = f.n();
    let hk = optimize_hk(f, beta, budget)?;
    let causal = hk.causal_pair(f)?;
    let m = laplacian_factor(&heuristic_laplacian(n))?;
    assemble(m, Array2::zeros((n, 0)), Some(causal), beta.to_vec(), theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, symmetric_eigen};
    use crate::params::{validate_params, Tolerances};

    #[test]
    fn laplacian_spectrum() {
        for n in 2..7 {
            let eig = symmetric_eigen(heuristic_laplacian(n).view());
            assert!((eig.values[1] - n as f64).abs() < 1e-10);
            assert!((eig.values[n - 1] - n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn two_nodes_forced() {
        let beta = [0.5, 1.0, 2.5];
        let f = NondecreasingVector::new(vec![0, 3], 3).unwrap();
        let res = optimize_hk(&f, &beta, 50).unwrap();
        let forced = CausalPair::two_node(3);
        assert_eq!(&res.h, forced.h());
        assert_eq!(&res.k, forced.k());
        // W = (Σβ)[[1,-1],[-1,1]] / 2 has norm Σβ; ||sqrt(β)(K - H^T)||² = 2Σβ
        assert!((res.objective - (2.0 * 4.0_f64).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn three_nodes_single_forward() {
        // 1-D grid over H[1,0] = a, H[2,0] = 1 - a
        let beta = 1.0;
        let grid_best = (0..=10_000)
            .map(|k| {
                let a = k as f64 * 1e-4;
                (beta * (1.0 + a * a + (1.0 - a) * (1.0 - a))).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        let f = NondecreasingVector::new(vec![0, 1, 1], 1).unwrap();
        let res = optimize_hk(&f, &[beta], DEFAULT_HK_BUDGET).unwrap();
        assert!((res.objective - grid_best).abs() <= 1e-3 * grid_best);
        assert!((res.h[[1, 0]] - 0.5).abs() < 1e-2);
        assert_eq!(res.k.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_forward_set() {
        let f = NondecreasingVector::last(4, 0);
        let res = optimize_hk(&f, &[], 10).unwrap();
        assert_eq!(res.objective, 0.0);
        assert_eq!(res.h.dim(), (4, 0));
    }

    #[test]
    fn sfb_plus_examples() {
        let beta = 1.2;
        let f = NondecreasingVector::new(vec![0, 1], 1).unwrap();
        let p = sfb_plus_params(&f, &[beta], 0.5).unwrap();
        let g = 2.0 / (1.0 + beta / 2.0);
        assert!(p.gamma().iter().all(|v| (v - g).abs() < 1e-12));

        let p = sfb_plus_params(&NondecreasingVector::last(3, 0), &[], 0.5).unwrap();
        assert!(frobenius((p.s() - &full_laplacian(3)).view()) < 1e-12);
        assert!(p.gamma().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(validate_params(&p, &Tolerances::default()).passed());
    }
}
