use std::ops::Range;
use std::sync::Arc;

use ndarray::{s, Array1, Array2};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::even_partition;
use crate::error::{Error, Result};
use crate::linalg::{gram, spectral_norm};
use crate::ops::{huber_unchecked, prox_norm_offset, ForwardOracle, ProblemSpec, ResolventOracle};

/// `min Σ_i ||x - ξ_i|| + H_{δ1,δ2}(Ψ x - y)` with the smooth part split into
/// `m` row blocks of `Ψ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyProblemConfig {
    pub n: usize,
    pub d: usize,
    pub p: usize,
    pub m: usize,
    pub delta1: f64,
    pub delta2: f64,
    pub seed: u64,
    /// Scale two random rows of `Ψ` by 5.
    pub hetero: bool,
}

impl Default for ToyProblemConfig {
    fn default() -> Self {
        Self {
            n: 5,
            d: 20,
            p: 30,
            m: 5,
            delta1: 0.1,
            delta2: 1.0,
            seed: 0,
            hetero: false,
        }
    }
}

/// Sampled data of a toy instance.
#[derive(Debug, Clone)]
pub struct ToyInstance {
    pub config: ToyProblemConfig,
    pub psi: Array2<f64>,
    pub y: Array1<f64>,
    /// Centers `ξ_i` as rows.
    pub xi: Array2<f64>,
    pub blocks: Vec<Range<usize>>,
    /// `||Ψ_I Ψ_I^T||_2` per block.
    pub beta: Vec<f64>,
    /// Rows scaled for heterogeneity.
    pub scaled_rows: Vec<usize>,
}

/// Heterogeneity scaling applied to the selected rows.
const HETERO_FACTOR: f64 = 5.0;

impl ToyInstance {
    /// `Ψ ~ U(-1, 1)`, `y = Ψ x* + N(0, 0.5²)` with `x* ~ N(0, I)`, and
    /// `ξ_i = x* + N(0, I)`. The heterogeneous variant shares all draws and
    /// only rescales two rows of `Ψ` afterwards.
    pub fn generate(config: &ToyProblemConfig) -> Result<Self> {
        let c = config;
        if c.n < 2 || c.d == 0 || c.p == 0 {
            return Err(Error::InvalidParameters(format!(
                "need n >= 2, d >= 1, p >= 1 (got n = {}, d = {}, p = {})",
                c.n, c.d, c.p
            )));
        }
        if c.m > c.p {
            return Err(Error::InvalidParameters(format!("m = {} exceeds p = {}", c.m, c.p)));
        }
        if !(0.0 <= c.delta1 && c.delta1 <= c.delta2) {
            return Err(Error::InvalidParameters(format!(
                "huber knees must satisfy 0 <= delta1 <= delta2, got ({}, {})",
                c.delta1, c.delta2
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let noise = Normal::new(0.0, 0.5).expect("noise");
        let mut psi = Array2::from_shape_simple_fn((c.p, c.d), || rng.random_range(-1.0..1.0));
        let x_true = Array1::from_shape_simple_fn(c.d, || normal.sample(&mut rng));
        let y = psi.dot(&x_true) + Array1::from_shape_simple_fn(c.p, || noise.sample(&mut rng));
        let xi = Array2::from_shape_fn((c.n, c.d), |(_, k)| x_true[k] + normal.sample(&mut rng));
        let scaled_rows = if c.p >= 2 {
            let mut rows = sample(&mut rng, c.p, 2).into_vec();
            rows.sort_unstable();
            rows
        } else {
            vec![0]
        };
        let scaled_rows = if c.hetero {
            for &r in &scaled_rows {
                psi.row_mut(r).mapv_inplace(|v| v * HETERO_FACTOR);
            }
            scaled_rows
        } else {
            Vec::new()
        };
        let blocks = if c.m == 0 { Vec::new() } else { even_partition(c.p, c.m) };
        let beta = blocks
            .iter()
            .map(|b| spectral_norm(gram(psi.slice(s![b.clone(), ..])).view()))
            .collect();
        Ok(Self {
            config: c.clone(),
            psi,
            y,
            xi,
            blocks,
            beta,
            scaled_rows,
        })
    }

    /// Objective value.
    pub fn objective(&self, x: &Array1<f64>) -> f64 {
        toy_objective(&self.psi, &self.y, &self.xi, self.config.delta1, self.config.delta2, x)
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let c = &self.config;
        let (d1, d2) = (c.delta1, c.delta2);
        let resolvents = self
            .xi
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, center)| {
                let center = center.to_owned();
                ResolventOracle::new(format!("prox ||x - xi_{}||", i + 1), move |step, v| {
                    prox_norm_offset(center.view(), step, v)
                })
            })
            .collect();
        let forwards = self
            .blocks
            .iter()
            .zip(&self.beta)
            .enumerate()
            .map(|(j, (rows, &beta))| {
                let block = self.psi.slice(s![rows.clone(), ..]).to_owned();
                let target = self.y.slice(s![rows.clone()]).to_owned();
                ForwardOracle::new(format!("huber block {}", j + 1), beta, move |x| {
                    let r = block.dot(&x) - &target;
                    let g = r.mapv(|z| huber_unchecked(d1, d2, z).1);
                    block.t().dot(&g)
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let data = Arc::new((self.psi.clone(), self.y.clone(), self.xi.clone()));
        Ok(ProblemSpec::new(c.d, resolvents, forwards)?.with_objective(move |x| {
            let (psi, y, xi) = &*data;
            toy_objective(psi, y, xi, d1, d2, &x.to_owned())
        }))
    }
}

fn toy_objective(psi: &Array2<f64>, y: &Array1<f64>, xi: &Array2<f64>, d1: f64, d2: f64, x: &Array1<f64>) -> f64 {
    let dist: f64 = xi
        .rows()
        .into_iter()
        .map(|c| {
            let diff = x - &c;
            diff.dot(&diff).sqrt()
        })
        .sum();
    let fit: f64 = (psi.dot(x) - y).iter().map(|&z| huber_unchecked(d1, d2, z).0).sum();
    dist + fit
}

pub fn gen_toy_problem(config: &ToyProblemConfig) -> Result<ProblemSpec> {
    ToyInstance::generate(config)?.problem()
}
