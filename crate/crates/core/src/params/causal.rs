//! Causal routing of forward evaluations.
//!
//! A schedule vector `F` fixes how many forward operators have been evaluated
//! before each resolvent. `H` may only route `C_j` into resolvents that come
//! after it (staircase), and `K` may only feed `C_j` from resolvents that
//! come before it (complement staircase). Indices here are 0-based for nodes
//! and forwards, while the entries of `F` are counts.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Tolerance on the normalization `H^T 1 = K 1 = 1`.
pub const SUM_TOL: f64 = 1e-9;

/// `(m, n)`-nondecreasing vector: `F[0] = 0`, `F[n-1] = m`, nondecreasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NondecreasingVector {
    entries: Vec<usize>,
    m: usize,
}

/// True iff `f` is an `(m, n)`-nondecreasing vector.
pub fn check_f(f: &[usize], n: usize, m: usize) -> bool {
    f.len() == n
        && n >= 1
        && f[0] == 0
        && f[n - 1] == m
        && f.windows(2).all(|w| w[0] <= w[1])
}

impl NondecreasingVector {
    pub fn new(entries: Vec<usize>, m: usize) -> Result<Self> {
        let n = entries.len();
        if !check_f(&entries, n, m) {
            return Err(Error::InvalidParameters(format!(
                "{entries:?} is not an ({m},{n})-nondecreasing vector"
            )));
        }
        Ok(Self { entries, m })
    }

    /// `(0, …, 0, m)`: every forward runs right before the last resolvent.
    pub fn last(n: usize, m: usize) -> Self {
        let mut entries = vec![0; n];
        entries[n - 1] = m;
        Self { entries, m }
    }

    /// Uniformly drawn interior entries, sorted.
    pub fn random(n: usize, m: usize, rng: &mut impl Rng) -> Self {
        let mut inner: Vec<usize> = (0..n.saturating_sub(2)).map(|_| rng.random_range(0..=m)).collect();
        inner.sort_unstable();
        let mut entries = Vec::with_capacity(n);
        entries.push(0);
        entries.extend(inner);
        if n > 1 {
            entries.push(m);
        }
        Self { entries, m }
    }

    pub fn entries(&self) -> &[usize] {
        &self.entries
    }

    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Whether `H[i, j]` may be nonzero (forward `j` finished before resolvent `i`).
    #[inline]
    pub fn h_allowed(&self, i: usize, j: usize) -> bool {
        j < self.entries[i]
    }

    /// Whether `K[j, i]` may be nonzero (resolvent `i` finished before forward `j`).
    #[inline]
    pub fn k_allowed(&self, j: usize, i: usize) -> bool {
        j >= self.entries[i]
    }
}

fn check_shapes(h: &Array2<f64>, k: &Array2<f64>) -> Result<(usize, usize)> {
    let (n, m) = h.dim();
    if k.dim() != (m, n) {
        return Err(Error::Shape(format!(
            "H is {n}x{m} so K must be {m}x{n}, got {}x{}",
            k.nrows(),
            k.ncols()
        )));
    }
    Ok((n, m))
}

/// Support-wise causality test: `H ∈ S(F)` and `K^T ∈ S^c(F)`.
pub fn is_causal_pair(h: &Array2<f64>, k: &Array2<f64>, f: &NondecreasingVector) -> Result<bool> {
    let (n, m) = check_shapes(h, k)?;
    if f.n() != n || f.m() != m {
        return Err(Error::Shape(format!(
            "F is ({},{}) but matrices are sized for ({m},{n})",
            f.m(),
            f.n()
        )));
    }
    let h_ok = h
        .indexed_iter()
        .all(|((i, j), &v)| v == 0.0 || f.h_allowed(i, j));
    let k_ok = k
        .indexed_iter()
        .all(|((j, i), &v)| v == 0.0 || f.k_allowed(j, i));
    Ok(h_ok && k_ok)
}

/// Smallest schedule vector consistent with the supports of `H` and `K`.
pub fn infer_f(h: &Array2<f64>, k: &Array2<f64>) -> Result<NondecreasingVector> {
    let (n, m) = check_shapes(h, k)?;
    if n == 0 {
        return Err(Error::Shape("need at least one resolvent".into()));
    }
    // F[i] >= 1 + last forward feeding resolvent i
    let lower: Vec<usize> = (0..n)
        .map(|i| (0..m).rev().find(|&j| h[[i, j]] != 0.0).map_or(0, |j| j + 1))
        .collect();
    // F[i] <= first forward reading x_i
    let upper: Vec<usize> = (0..n)
        .map(|i| (0..m).find(|&j| k[[j, i]] != 0.0).unwrap_or(m))
        .collect();

    if lower[0] > 0 {
        return Err(Error::NotCausal(format!(
            "first resolvent receives forward output {}",
            lower[0]
        )));
    }
    if upper[n - 1] < m {
        return Err(Error::NotCausal(format!(
            "forward {} reads the last resolvent",
            upper[n - 1] + 1
        )));
    }
    let mut entries = Vec::with_capacity(n);
    let mut running = 0;
    for i in 0..n {
        running = running.max(lower[i]);
        let fi = if i == n - 1 { m } else { running };
        if fi > upper[i] {
            return Err(Error::NotCausal(format!(
                "resolvent {} needs F >= {fi} but forward {} reads it",
                i + 1,
                upper[i] + 1
            )));
        }
        entries.push(fi);
    }
    Ok(NondecreasingVector { entries, m })
}

/// A causal pair `(H, K)` with its schedule `F`, normalized so that
/// `H^T 1 = K 1 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalPair {
    h: Array2<f64>,
    k: Array2<f64>,
    f: NondecreasingVector,
}

impl CausalPair {
    pub fn new(h: Array2<f64>, k: Array2<f64>, f: NondecreasingVector) -> Result<Self> {
        if !is_causal_pair(&h, &k, &f)? {
            return Err(Error::NotCausal(format!(
                "supports violate schedule {:?}",
                f.entries()
            )));
        }
        let pair = Self { h, k, f };
        let worst = pair.sum_residuals().into_iter().fold(0.0, f64::max);
        if worst > SUM_TOL {
            return Err(Error::NotCausal(format!(
                "H^T 1 = K 1 = 1 violated by {worst:e}"
            )));
        }
        Ok(pair)
    }

    /// The pair with no forward operators.
    pub fn empty(n: usize) -> Self {
        Self {
            h: Array2::zeros((n, 0)),
            k: Array2::zeros((0, n)),
            f: NondecreasingVector::last(n, 0),
        }
    }

    pub fn h(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn k(&self) -> &Array2<f64> {
        &self.k
    }

    pub fn f(&self) -> &NondecreasingVector {
        &self.f
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn m(&self) -> usize {
        self.h.ncols()
    }

    /// `|H^T 1 - 1|` per column followed by `|K 1 - 1|` per row.
    pub fn sum_residuals(&self) -> Vec<f64> {
        let hs = self.h.sum_axis(ndarray::Axis(0)).mapv(|s| (s - 1.0).abs());
        let ks = self.k.sum_axis(ndarray::Axis(1)).mapv(|s| (s - 1.0).abs());
        hs.iter().chain(ks.iter()).copied().collect()
    }

    /// The forced pair for two resolvents: every forward reads `x_1` and
    /// feeds resolvent 2.
    pub fn two_node(m: usize) -> Self {
        let mut h = Array2::zeros((2, m));
        let mut k = Array2::zeros((m, 2));
        for j in 0..m {
            h[[1, j]] = 1.0;
            k[[j, 0]] = 1.0;
        }
        Self {
            h,
            k,
            f: NondecreasingVector {
                entries: vec![0, m],
                m,
            },
        }
    }
}

/// Inclusive range `[lo, hi]` with `0 < lo <= hi` for random entries.
#[derive(Debug, Clone, Copy)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub(crate) fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }
}

/// Samples entries on the allowed supports and normalizes each column of
/// `H` and each row of `K` to sum to one.
pub fn random_causal_pair(
    f: &NondecreasingVector,
    h_interval: Interval,
    k_interval: Interval,
    seed: u64,
) -> Result<CausalPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_causal_pair_with(f, h_interval, k_interval, &mut rng)
}

pub fn random_causal_pair_with(
    f: &NondecreasingVector,
    h_interval: Interval,
    k_interval: Interval,
    rng: &mut impl Rng,
) -> Result<CausalPair> {
    for iv in [h_interval, k_interval] {
        if !(iv.lo > 0.0 && iv.hi >= iv.lo && iv.hi.is_finite()) {
            return Err(Error::InvalidParameters(format!(
                "sampling interval [{}, {}] must be positive",
                iv.lo, iv.hi
            )));
        }
    }
    let (n, m) = (f.n(), f.m());
    let mut h = Array2::zeros((n, m));
    let mut k = Array2::zeros((m, n));
    for i in 0..n {
        for j in 0..m {
            let hv = h_interval.sample(rng);
            let kv = k_interval.sample(rng);
            if f.h_allowed(i, j) {
                h[[i, j]] = hv;
            }
            if f.k_allowed(j, i) {
                k[[j, i]] = kv;
            }
        }
    }
    for j in 0..m {
        let hs: f64 = h.column(j).sum();
        let ks: f64 = k.row(j).sum();
        if hs == 0.0 || ks == 0.0 {
            return Err(Error::NotCausal(format!("forward {} has empty support", j + 1)));
        }
        h.column_mut(j).mapv_inplace(|v| v / hs);
        k.row_mut(j).mapv_inplace(|v| v / ks);
    }
    Ok(CausalPair { h, k, f: f.clone() })
}
