use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::causal::Interval;
use crate::error::{Error, Result};
use crate::linalg::{frobenius, gram, psd_factor, spectral_norm, symmetric_eigen};

/// Relative tolerance on null-space residuals.
pub const NULL_TOL: f64 = 1e-9;
/// Relative tolerance on negative eigenvalues of matrices that must be PSD.
pub const PSD_TOL: f64 = 1e-8;
const RANK_TOL: f64 = 1e-10;

/// Laplacian of the complete graph, `n I - 1 1^T`.
pub fn full_laplacian(n: usize) -> Array2<f64> {
    let mut l = Array2::from_elem((n, n), -1.0);
    for i in 0..n {
        l[[i, i]] = n as f64 - 1.0;
    }
    l
}

/// Subtracts the column means, so that `1^T A = 0`.
pub(crate) fn center_columns(a: &mut Array2<f64>) {
    if a.nrows() == 0 {
        return;
    }
    let mean = a.mean_axis(Axis(0)).unwrap();
    for mut row in a.rows_mut() {
        row -= &mean;
    }
}

fn ones_residual(a: &Array2<f64>) -> f64 {
    let r: Array1<f64> = a.sum_axis(Axis(1));
    r.dot(&r).sqrt()
}

/// Full-rank factor `M` (n x (n-1)) with `M M^T = lap`.
pub fn laplacian_factor(lap: &Array2<f64>) -> Result<Array2<f64>> {
    let n = lap.nrows();
    if n < 2 || lap.ncols() != n {
        return Err(Error::Laplacian(format!("need a square matrix of size >= 2, got {:?}", lap.dim())));
    }
    let scale = frobenius(lap.view()).max(f64::MIN_POSITIVE);
    if ones_residual(lap) > NULL_TOL * scale {
        return Err(Error::Laplacian("matrix does not annihilate the ones vector".into()));
    }
    if frobenius((lap - &lap.t()).view()) > NULL_TOL * scale {
        return Err(Error::Laplacian("matrix is not symmetric".into()));
    }
    let (mut m, eig) = psd_factor(lap.view(), n - 1);
    if eig.values[0] < -PSD_TOL * scale {
        return Err(Error::Laplacian(format!("negative eigenvalue {:e}", eig.values[0])));
    }
    if eig.values[1] <= RANK_TOL * scale {
        return Err(Error::Laplacian(format!(
            "rank below n-1 (second smallest eigenvalue {:e})",
            eig.values[1]
        )));
    }
    center_columns(&mut m);
    Ok(m)
}

/// Centered uniform random `M`, regenerated until it has full column rank.
pub fn random_m(n: usize, interval: Interval, seed: u64) -> Result<Array2<f64>> {
    if n < 2 {
        return Err(Error::InvalidParameters(format!("need n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let m = random_centered(n, n - 1, interval, &mut rng);
        if has_full_column_rank(&m) {
            return Ok(m);
        }
    }
    Err(Error::InvalidM("could not draw a full-rank matrix".into()))
}

/// Centered uniform random `P` with `cols` columns and `||P P^T||_2` rescaled
/// to `gram_norm` (when positive).
pub fn random_p(n: usize, cols: usize, interval: Interval, gram_norm: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = random_centered(n, cols, interval, &mut rng);
    let current = spectral_norm(gram(p.view()).view());
    if gram_norm > 0.0 && current > 0.0 {
        p *= (gram_norm / current).sqrt();
    }
    p
}

fn random_centered(rows: usize, cols: usize, interval: Interval, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m = Array2::from_shape_simple_fn((rows, cols), || {
        if interval.lo == interval.hi {
            interval.lo
        } else {
            rand::Rng::random_range(rng, interval.lo..interval.hi)
        }
    });
    center_columns(&mut m);
    m
}

/// Rank test through the eigenvalues of `M^T M`.
pub(crate) fn has_full_column_rank(m: &Array2<f64>) -> bool {
    if m.ncols() == 0 {
        return true;
    }
    let mtm = m.t().dot(m);
    let eig = symmetric_eigen(mtm.view());
    let top = eig.values[eig.values.len() - 1];
    top > 0.0 && eig.values[0].max(0.0).sqrt() > NULL_TOL * top.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{GraphKind, GraphSpec};
    use ndarray::array;

    #[test]
    fn full_laplacian_examples() {
        assert_eq!(full_laplacian(3), array![[2.0, -1.0, -1.0], [-1.0, 2.0, -1.0], [-1.0, -1.0, 2.0]]);
        assert_eq!(full_laplacian(2), array![[1.0, -1.0], [-1.0, 1.0]]);
        for n in 2..=8 {
            let eig = symmetric_eigen(full_laplacian(n).view());
            assert!(eig.values[0].abs() < 1e-12);
            for k in 1..n {
                assert!((eig.values[k] - n as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn factor_two_node() {
        let lap = array![[1.0, -1.0], [-1.0, 1.0]];
        let m = laplacian_factor(&lap).unwrap();
        assert_eq!(m.dim(), (2, 1));
        assert!(frobenius((gram(m.view()) - &lap).view()) < 1e-12);
        assert!((m[[0, 0]].abs() - 1.0).abs() < 1e-12);
        assert!((m[[0, 0]] + m[[1, 0]]).abs() < 1e-15);
    }

    #[test]
    fn factor_reconstructs_laplacians() {
        for n in 2..=9 {
            let lap = full_laplacian(n);
            let m = laplacian_factor(&lap).unwrap();
            assert!(frobenius((gram(m.view()) - &lap).view()) <= 1e-10 * frobenius(lap.view()));
            assert!(ones_residual(&m.t().to_owned()) <= 1e-12);
        }
        let path = GraphSpec::build(GraphKind::Path, 6).unwrap().laplacian();
        let m = laplacian_factor(&path).unwrap();
        assert!(frobenius((gram(m.view()) - &path).view()) <= 1e-10 * frobenius(path.view()));
    }

    #[test]
    fn factor_rejects_bad_input() {
        assert!(laplacian_factor(&array![[1.0, 0.0], [0.0, 1.0]]).is_err());
        // disconnected: rank n-2
        let lap = GraphSpec::new(3, [(0, 1)]).unwrap().laplacian();
        assert!(laplacian_factor(&lap).is_err());
        assert!(laplacian_factor(&(-full_laplacian(3))).is_err());
    }

    #[test]
    fn random_m_contract() {
        let iv = Interval::new(-1.0, 1.0);
        for seed in 0..20 {
            let m = random_m(6, iv, seed).unwrap();
            assert!(ones_residual(&m.t().to_owned()) <= 1e-12 * frobenius(m.view()));
            assert!(has_full_column_rank(&m));
        }
        assert_eq!(random_m(5, iv, 7).unwrap(), random_m(5, iv, 7).unwrap());
        let m2 = random_m(2, iv, 3).unwrap();
        assert_eq!(m2[[0, 0]], -m2[[1, 0]]);
    }

    #[test]
    fn random_p_scaling() {
        let p = random_p(5, 4, Interval::new(0.0, 1.0), 0.5, 2);
        assert!((spectral_norm(gram(p.view()).view()) - 0.5).abs() < 1e-9);
        assert!(ones_residual(&p.t().to_owned()) < 1e-12);
    }
}
