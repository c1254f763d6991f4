use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{s, Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::even_partition;
use crate::error::{Error, Result};
use crate::linalg::spectral_norm;
use crate::ops::{
    halfspace_unchecked, project_simplex, soft_threshold_offset, ForwardOracle, ProblemSpec, ResolventOracle,
};

/// Markowitz portfolio with one-way turnover penalty and three per-scope
/// carbon constraints `C^j · x ≤ (1 - ζ_j) C^j · x0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PortfolioProblemConfig {
    /// Ignored when `data` is given.
    pub assets: usize,
    /// Ignored when `data` is given.
    pub days: usize,
    pub chunks: usize,
    pub zeta: [f64; 3],
    pub turnover: f64,
    /// Seeds the synthetic returns and the carbon indexes.
    pub seed: u64,
    /// Returns matrix (days x assets) to use instead of synthetic data.
    pub data: Option<PathBuf>,
}

impl Default for PortfolioProblemConfig {
    fn default() -> Self {
        Self {
            assets: 6,
            days: 123,
            chunks: 4,
            zeta: [0.07; 3],
            turnover: 1.0,
            seed: 0,
            data: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PortfolioInstance {
    pub config: PortfolioProblemConfig,
    /// Daily returns in percent, days x assets.
    pub returns: Array2<f64>,
    /// Chunk covariances, each divided by the chunk count.
    pub sigma: Vec<Array2<f64>>,
    pub mean_return: Array1<f64>,
    /// Carbon indexes per scope (rows) and asset (columns).
    pub carbon: Array2<f64>,
    pub bounds: [f64; 3],
    pub x0: Array1<f64>,
    /// `2 ||Σ_i||_2` per chunk.
    pub beta: Vec<f64>,
}

/// Gaussian one-factor returns in percent; the market factor turns volatile
/// and negative over the second quarter of the window.
fn synthetic_returns(assets: usize, days: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let drift: Vec<f64> = (0..assets).map(|_| rng.random_range(0.0..0.1)).collect();
    let vol: Vec<f64> = (0..assets).map(|_| rng.random_range(1.0..3.0)).collect();
    let load: Vec<f64> = (0..assets).map(|_| rng.random_range(0.5..1.5)).collect();
    let shock = days / 4..days / 2;
    let mut r = Array2::zeros((days, assets));
    for t in 0..days {
        let (mu, sd) = if shock.contains(&t) { (-0.5, 3.0) } else { (0.05, 1.0) };
        let factor = mu + sd * unit.sample(rng);
        for a in 0..assets {
            r[[t, a]] = drift[a] + load[a] * factor + vol[a] * unit.sample(rng);
        }
    }
    r
}

/// Positive carbon indexes with asset 0 at half the cleanest other asset in
/// every scope, so that moving weight to it meets any `ζ ≤ 0.25`.
fn synthetic_carbon(assets: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut c = Array2::from_shape_simple_fn((3, assets), || rng.random_range(0.5..2.0));
    if assets > 1 {
        for mut scope in c.rows_mut() {
            let min = scope.slice(s![1..]).iter().copied().fold(f64::INFINITY, f64::min);
            scope[0] = 0.5 * min;
        }
    }
    c
}

fn covariance(chunk: ndarray::ArrayView2<f64>) -> Array2<f64> {
    let rows = chunk.nrows();
    let mean = chunk.mean_axis(Axis(0)).expect("nonempty chunk");
    let centered = &chunk - &mean;
    centered.t().dot(&centered) / (rows as f64 - 1.0)
}

impl PortfolioInstance {
    pub fn generate(config: &PortfolioProblemConfig) -> Result<Self> {
        let c = config;
        if c.chunks == 0 {
            return Err(Error::InvalidParameters("chunk count must be at least 1".into()));
        }
        if c.zeta.iter().any(|z| !(0.0..=1.0).contains(z)) {
            return Err(Error::InvalidParameters(format!("ζ = {:?} must lie in [0, 1]", c.zeta)));
        }
        if !(c.turnover > 0.0 && c.turnover.is_finite()) {
            return Err(Error::InvalidParameters("turnover weight must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let returns = match &c.data {
            Some(path) => load_returns_csv(path)?,
            None => {
                if c.assets == 0 {
                    return Err(Error::InvalidParameters("need at least one asset".into()));
                }
                synthetic_returns(c.assets, c.days, &mut rng)
            }
        };
        let (days, assets) = returns.dim();
        if days < 2 * c.chunks {
            return Err(Error::InvalidParameters(format!(
                "{days} days cannot form {} chunks of at least two days",
                c.chunks
            )));
        }
        let carbon = synthetic_carbon(assets, &mut rng);
        let scale = c.chunks as f64;
        let sigma: Vec<Array2<f64>> = even_partition(days, c.chunks)
            .into_iter()
            .map(|rows| covariance(returns.slice(s![rows, ..])) / scale)
            .collect();
        let beta = sigma.iter().map(|s| 2.0 * spectral_norm(s.view())).collect();
        let mean_return = returns.mean_axis(Axis(0)).expect("days > 0");
        let x0 = Array1::from_elem(assets, 1.0 / assets as f64);
        let mut bounds = [0.0; 3];
        for (j, b) in bounds.iter_mut().enumerate() {
            *b = (1.0 - c.zeta[j]) * carbon.row(j).dot(&x0);
        }
        Ok(Self {
            config: c.clone(),
            returns,
            sigma,
            mean_return,
            carbon,
            bounds,
            x0,
            beta,
        })
    }

    /// `Σ_i (x^T Σ_i x - r̂^T x / chunks) + τ ||x - x0||_1`; constraints are
    /// not included.
    pub fn objective(&self, x: &Array1<f64>) -> f64 {
        portfolio_objective(&self.sigma, &self.mean_return, &self.x0, self.config.turnover, x)
    }

    /// Largest violation of the simplex and carbon constraints.
    pub fn infeasibility(&self, x: &Array1<f64>) -> f64 {
        let mut worst = (x.sum() - 1.0).abs();
        worst = x.iter().fold(worst, |w, v| w.max(-v));
        for j in 0..3 {
            worst = worst.max(self.carbon.row(j).dot(x) - self.bounds[j]);
        }
        worst.max(0.0)
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let d = self.x0.len();
        let turnover = self.config.turnover;
        let x0 = self.x0.clone();
        let mut resolvents = vec![
            ResolventOracle::new("turnover", move |step, v| soft_threshold_offset(x0.view(), step * turnover, v)),
            ResolventOracle::new("simplex", |_, v| project_simplex(v)),
        ];
        for j in 0..3 {
            let c = self.carbon.row(j).to_owned();
            let cc = c.dot(&c);
            let b = self.bounds[j];
            resolvents.push(ResolventOracle::new(format!("carbon scope {}", j + 1), move |_, v| {
                halfspace_unchecked(c.view(), cc, b, v)
            }));
        }
        let chunks = self.sigma.len() as f64;
        let forwards = self
            .sigma
            .iter()
            .zip(&self.beta)
            .enumerate()
            .map(|(i, (sigma, &beta))| {
                let sigma = sigma.clone();
                let lin = &self.mean_return / chunks;
                ForwardOracle::new(format!("risk chunk {}", i + 1), beta, move |x| {
                    sigma.dot(&x) * 2.0 - &lin
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let data = Arc::new((self.sigma.clone(), self.mean_return.clone(), self.x0.clone()));
        Ok(ProblemSpec::new(d, resolvents, forwards)?.with_objective(move |x| {
            let (sigma, r, x0) = &*data;
            portfolio_objective(sigma, r, x0, turnover, &x.to_owned())
        }))
    }
}

fn portfolio_objective(
    sigma: &[Array2<f64>],
    mean_return: &Array1<f64>,
    x0: &Array1<f64>,
    turnover: f64,
    x: &Array1<f64>,
) -> f64 {
    let risk: f64 = sigma.iter().map(|s| x.dot(&s.dot(x))).sum();
    let l1: f64 = (x - x0).iter().map(|v| v.abs()).sum();
    risk - mean_return.dot(x) + turnover * l1
}

pub fn gen_portfolio_problem(config: &PortfolioProblemConfig) -> Result<ProblemSpec> {
    PortfolioInstance::generate(config)?.problem()
}

/// Reads a days x assets returns matrix. A first row that does not parse is
/// taken as a header. Rows and columns in errors are 1-based.
pub fn load_returns_csv(path: &Path) -> Result<Array2<f64>> {
    let file = std::fs::File::open(path)?;
    parse_returns_csv(file)
}

pub fn parse_returns_csv<R: Read>(reader: R) -> Result<Array2<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, record) in rdr.records().enumerate() {
        let row = idx + 1;
        let record = record.map_err(|e| Error::Ingestion {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parsed: Vec<std::result::Result<f64, _>> = record.iter().map(|f| f.parse::<f64>()).collect();
        if row == 1 && parsed.iter().any(|p| p.is_err()) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Ingestion {
                    row,
                    column: record.len().min(w) + 1,
                    message: format!("expected {w} columns, found {}", record.len()),
                });
            }
            _ => {}
        }
        for (col, p) in parsed.into_iter().enumerate() {
            match p {
                Ok(v) if v.is_finite() => values.push(v),
                _ => {
                    return Err(Error::Ingestion {
                        row,
                        column: col + 1,
                        message: format!("'{}' is not a finite number", &record[col]),
                    })
                }
            }
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| Error::Ingestion {
        row: 0,
        column: 0,
        message: "no data rows".into(),
    })?;
    Ok(Array2::from_shape_vec((rows, width), values).expect("rectangular"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_portfolio_feasible_without_decarbonization() {
        let cfg = PortfolioProblemConfig { zeta: [0.0; 3], ..Default::default() };
        let inst = PortfolioInstance::generate(&cfg).unwrap();
        assert!(inst.infeasibility(&inst.x0) < 1e-12);
        let strict = PortfolioInstance::generate(&PortfolioProblemConfig::default()).unwrap();
        let mut green = Array1::zeros(6);
        green[0] = 1.0;
        assert!(strict.infeasibility(&green) == 0.0);
        assert!(strict.infeasibility(&strict.x0) > 0.0);
    }

    #[test]
    fn structure() {
        let cfg = PortfolioProblemConfig { chunks: 3, ..Default::default() };
        let p = gen_portfolio_problem(&cfg).unwrap();
        assert_eq!((p.n(), p.m(), p.dimension()), (5, 3, 6));
    }

    #[test]
    fn chunk_gradient_matches_finite_differences() {
        let inst = PortfolioInstance::generate(&PortfolioProblemConfig::default()).unwrap();
        let p = inst.problem().unwrap();
        let chunks = inst.sigma.len() as f64;
        let x = Array1::from_vec(vec![0.3, 0.1, 0.2, 0.05, 0.15, 0.2]);
        for (i, c) in p.forwards().iter().enumerate() {
            let f = |x: &Array1<f64>| x.dot(&inst.sigma[i].dot(x)) - inst.mean_return.dot(x) / chunks;
            let g = c.evaluate(x.view());
            for k in 0..6 {
                let mut e = Array1::zeros(6);
                e[k] = 1e-6;
                let fd = (f(&(&x + &e)) - f(&(&x - &e))) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-5, "chunk {i} coord {k}: {fd} vs {}", g[k]);
            }
        }
    }

    #[test]
    fn csv_with_header() {
        let text = "a,b\n0.1,0.2\n0.3,-0.4\n";
        let r = parse_returns_csv(text.as_bytes()).unwrap();
        assert_eq!(r.dim(), (2, 2));
        assert_eq!(r[[1, 1]], -0.4);
    }

    #[test]
    fn csv_errors_locate_cell() {
        match parse_returns_csv("0.1,0.2\n0.3,x\n".as_bytes()) {
            Err(Error::Ingestion { row, column, .. }) => assert_eq!((row, column), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
        match parse_returns_csv("0.1,0.2\n0.3\n".as_bytes()) {
            Err(Error::Ingestion { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_returns_csv("".as_bytes()).is_err());
    }
}
