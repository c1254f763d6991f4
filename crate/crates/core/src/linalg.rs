//! Small dense linear algebra kernels.
//!
//! Everything here targets the matrix sizes of the method family (n, m up to
//! a few dozen), so plain cyclic Jacobi and power iteration are enough and
//! keep results deterministic across platforms.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Maximum number of power iterations in [`spectral_norm`].
pub const POWER_ITERATION_CAP: usize = 10_000;
/// Relative change in successive Rayleigh quotients that stops power iteration.
pub const POWER_ITERATION_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    /// Eigenvectors stored column-wise, matching `values`.
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi eigenvalue algorithm for symmetric matrices.
///
/// The input is symmetrized as `(A + A^T)/2` first.
pub fn symmetric_eigen(a: ArrayView2<f64>) -> SymmetricEigen {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "symmetric_eigen needs a square matrix");
    let mut s = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            s[[i, j]] = 0.5 * (a[[i, j]] + a[[j, i]]);
        }
    }
    let mut v = Array2::<f64>::eye(n);

    let total: f64 = s.iter().map(|x| x * x).sum::<f64>().sqrt();
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| s[[i, j]] * s[[i, j]])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * 1e-3 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = s[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = s[[p, p]];
                let aqq = s[[q, q]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let skp = s[[k, p]];
                    let skq = s[[k, q]];
                    s[[k, p]] = c * skp - sn * skq;
                    s[[k, q]] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[[p, k]];
                    let sqk = s[[q, k]];
                    s[[p, k]] = c * spk - sn * sqk;
                    s[[q, k]] = sn * spk + c * sqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - sn * vkq;
                    v[[k, q]] = sn * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[[i, i]].total_cmp(&s[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| s[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    SymmetricEigen { values, vectors }
}

/// Smallest eigenvalue of a symmetric matrix (0 for an empty matrix).
pub fn min_eigenvalue(a: ArrayView2<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    symmetric_eigen(a).values[0]
}

fn start_vector(len: usize) -> Array1<f64> {
    // all-ones plus a small irrational ramp so the start is never orthogonal
    // to a structured top singular vector
    const PHI: f64 = 0.618_033_988_749_894_9;
    let mut v = Array1::from_iter((0..len).map(|i| 1.0 + 0.1 * ((i + 1) as f64 * PHI).fract()));
    let nrm = v.dot(&v).sqrt();
    v /= nrm;
    v
}

/// Largest singular value with its left/right singular vectors.
#[derive(Debug, Clone)]
pub struct SingularTriplet {
    pub sigma: f64,
    pub left: Array1<f64>,
    pub right: Array1<f64>,
}

/// Power iteration on `A^T A`.
pub fn top_singular_triplet(a: ArrayView2<f64>) -> SingularTriplet {
    let (rows, cols) = a.dim();
    let mut v = start_vector(cols);
    let mut rho_prev = f64::NAN;
    for _ in 0..POWER_ITERATION_CAP {
        let av = a.dot(&v);
        let w = a.t().dot(&av);
        let rho = v.dot(&w);
        let nrm = w.dot(&w).sqrt();
        if nrm == 0.0 {
            return SingularTriplet {
                sigma: 0.0,
                left: Array1::zeros(rows),
                right: v,
            };
        }
        v = w / nrm;
        if (rho - rho_prev).abs() < POWER_ITERATION_TOL * rho.abs() {
            break;
        }
        rho_prev = rho;
    }
    let av = a.dot(&v);
    let sigma = av.dot(&av).sqrt();
    let left = if sigma > 0.0 { av / sigma } else { Array1::zeros(rows) };
    SingularTriplet { sigma, left, right: v }
}

/// Largest singular value of `a`.
pub fn spectral_norm(a: ArrayView2<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    top_singular_triplet(a).sigma
}

pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Strictly lower triangular part.
pub fn strictly_lower(a: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(a.dim());
    for ((i, j), &x) in a.indexed_iter() {
        if j < i {
            out[[i, j]] = x;
        }
    }
    out
}

/// `A A^T`.
pub fn gram(a: ArrayView2<f64>) -> Array2<f64> {
    a.dot(&a.t())
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: ArrayView2<f64>, b: &Array1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::Shape(format!(
            "solve: {}x{} system with rhs of length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let mut m = a.to_owned();
    let mut x = b.clone();
    let scale = frobenius(a).max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap();
        if m[[pivot, col]].abs() <= 1e-14 * scale {
            return Err(Error::InvalidParameters("singular linear system".into()));
        }
        if pivot != col {
            for k in 0..n {
                m.swap([pivot, k], [col, k]);
            }
            x.swap(pivot, col);
        }
        for row in (col + 1)..n {
            let f = m[[row, col]] / m[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[[row, k]] -= f * m[[col, k]];
            }
            x[row] -= f * x[col];
        }
    }
    for row in (0..n).rev() {
        let mut acc = x[row];
        for k in (row + 1)..n {
            acc -= m[[row, k]] * x[k];
        }
        x[row] = acc / m[[row, row]];
    }
    Ok(x)
}

/// Factor a PSD matrix as `F F^T` keeping the `keep` largest eigenpairs.
/// Eigenvalues within tolerance below zero are clamped to zero.
pub(crate) fn psd_factor(a: ArrayView2<f64>, keep: usize) -> (Array2<f64>, SymmetricEigen) {
    let eig = symmetric_eigen(a);
    let n = a.nrows();
    let mut f = Array2::zeros((n, keep));
    for c in 0..keep {
        let idx = n - keep + c;
        let lam = eig.values[idx].max(0.0).sqrt();
        for r in 0..n {
            f[[r, c]] = eig.vectors[[r, idx]] * lam;
        }
    }
    (f, eig)
}
