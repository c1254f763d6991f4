//! Matrix parameterization of the method family.
//!
//! A method is fixed by `M` (n x (n-1), `Null(M^T) = span(1)`), a factor `P`
//! (`P^T 1 = 0`), a causal pair `(H, K)` and a relaxation `θ`. From these,
//!
//! ```text
//! W = ½ (H - K^T) diag(β) (H^T - K)
//! S = M M^T + P P^T + W,   γ = 2 / diag(S),   L = -slt(S)
//! ```
//!
//! and the method is θ-averaged with the fixed-point encoding property
//! exactly when the four conditions checked by [`validate_params`] hold.

mod causal;
mod graph;
mod laplacian;
mod serial;

pub use causal::{
    check_f, infer_f, is_causal_pair, random_causal_pair, random_causal_pair_with, CausalPair,
    Interval, NondecreasingVector, SUM_TOL,
};
pub use graph::{GraphKind, GraphSpec};
pub use laplacian::{full_laplacian, laplacian_factor, random_m, random_p, NULL_TOL, PSD_TOL};
pub use serial::ParamsDocument;

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{frobenius, gram, min_eigenvalue, psd_factor, strictly_lower, symmetric_eigen};
use laplacian::{center_columns, has_full_column_rank};

const DEGENERATE_DIAGONAL: f64 = 1e-12;

/// A point in the method family together with its derived quantities.
#[derive(Debug, Clone)]
pub struct SplittingParams {
    m: Array2<f64>,
    /// `None` when built directly from step sizes and `L`.
    p: Option<Array2<f64>>,
    causal: CausalPair,
    beta: Array1<f64>,
    theta: f64,
    s: Array2<f64>,
    l: Array2<f64>,
    gamma: Array1<f64>,
    w: Array2<f64>,
}

/// `½ (H - K^T) diag(β) (H^T - K)`.
pub fn forward_coupling(causal: &CausalPair, beta: &[f64]) -> Array2<f64> {
    let d = causal.h() - &causal.k().t();
    let mut scaled = d.clone();
    for (j, mut col) in scaled.axis_iter_mut(Axis(1)).enumerate() {
        col *= 0.5 * beta[j];
    }
    scaled.dot(&d.t())
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameters(format!("theta must lie in (0, 1), got {theta}")))
    }
}

fn check_beta(beta: &[f64], m: usize) -> Result<()> {
    if beta.len() != m {
        return Err(Error::Shape(format!("beta has length {} but m = {m}", beta.len())));
    }
    if let Some(b) = beta.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
        return Err(Error::InvalidParameters(format!("beta entries must be nonnegative, got {b}")));
    }
    Ok(())
}

fn check_m(m: &Array2<f64>) -> Result<usize> {
    let n = m.nrows();
    if n < 2 || m.ncols() != n - 1 {
        return Err(Error::InvalidM(format!("M must be n x (n-1) with n >= 2, got {:?}", m.dim())));
    }
    let scale = frobenius(m.view());
    let ones = m.sum_axis(Axis(0));
    if scale == 0.0 || ones.dot(&ones).sqrt() > NULL_TOL * scale {
        return Err(Error::InvalidM("M^T 1 != 0".into()));
    }
    if !has_full_column_rank(m) {
        return Err(Error::InvalidM("M does not have rank n-1".into()));
    }
    Ok(n)
}

impl SplittingParams {
    pub fn m(&self) -> &Array2<f64> {
        &self.m
    }

    pub fn p(&self) -> Option<&Array2<f64>> {
        self.p.as_ref()
    }

    pub fn causal(&self) -> &CausalPair {
        &self.causal
    }

    pub fn h(&self) -> &Array2<f64> {
        self.causal.h()
    }

    pub fn k(&self) -> &Array2<f64> {
        self.causal.k()
    }

    pub fn f(&self) -> &NondecreasingVector {
        self.causal.f()
    }

    pub fn beta(&self) -> &Array1<f64> {
        &self.beta
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn s(&self) -> &Array2<f64> {
        &self.s
    }

    pub fn l(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn gamma(&self) -> &Array1<f64> {
        &self.gamma
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn num_forward(&self) -> usize {
        self.beta.len()
    }

    /// `M M^T`, the coupling used by the lifted iteration.
    pub fn laplacian(&self) -> Array2<f64> {
        gram(self.m.view())
    }

    /// Same method with a different relaxation.
    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        Ok(Self {
            theta,
            ..self.clone()
        })
    }

    /// Builds the method from step sizes `γ` and a strictly lower triangular
    /// `L` without checking any of the convergence conditions; `S` is set to
    /// `2Γ⁻¹ - L - L^T`. Use [`validate_params`] to certify the result.
    pub fn from_step_sizes(
        m: Array2<f64>,
        gamma: Array1<f64>,
        l: Array2<f64>,
        causal: CausalPair,
        beta: Vec<f64>,
        theta: f64,
    ) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() + 1 != n || gamma.len() != n || l.dim() != (n, n) || causal.n() != n {
            return Err(Error::Shape("inconsistent sizes in step-size form".into()));
        }
        check_beta(&beta, causal.m())?;
        check_theta(theta)?;
        if gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidParameters("step sizes must be positive".into()));
        }
        let mut s = -(&l + &l.t());
        for i in 0..n {
            s[[i, i]] += 2.0 / gamma[i];
        }
        let w = forward_coupling(&causal, &beta);
        Ok(Self {
            m,
            p: None,
            causal,
            beta: Array1::from(beta),
            theta,
            s,
            l,
            gamma,
            w,
        })
    }
}

/// Builds a method from `(M, P, H, K, β, θ)`.
pub fn assemble(
    m: Array2<f64>,
    p: Array2<f64>,
    causal: Option<CausalPair>,
    beta: Vec<f64>,
    theta: f64,
) -> Result<SplittingParams> {
    let n = check_m(&m)?;
    check_theta(theta)?;
    if p.nrows() != n {
        return Err(Error::Shape(format!("P has {} rows, expected {n}", p.nrows())));
    }
    if p.ncols() > 0 {
        let ones = p.sum_axis(Axis(0));
        if ones.dot(&ones).sqrt() > NULL_TOL * frobenius(p.view()).max(1.0) {
            return Err(Error::InvalidParameters("P^T 1 != 0".into()));
        }
    }
    let causal = match causal {
        Some(c) => {
            if c.n() != n {
                return Err(Error::Shape(format!("causal pair is sized for n = {}", c.n())));
            }
            c
        }
        None => {
            if !beta.is_empty() {
                return Err(Error::InvalidParameters("forward operators need a causal pair".into()));
            }
            CausalPair::empty(n)
        }
    };
    check_beta(&beta, causal.m())?;

    let w = forward_coupling(&causal, &beta);
    let s = gram(m.view()) + gram(p.view()) + &w;
    let mut gamma = Array1::zeros(n);
    for i in 0..n {
        if s[[i, i]] <= DEGENERATE_DIAGONAL {
            return Err(Error::DegenerateRow {
                index: i,
                value: s[[i, i]],
            });
        }
        gamma[i] = 2.0 / s[[i, i]];
    }
    let l = -strictly_lower(s.view());

    let params = SplittingParams {
        m,
        p: Some(p),
        causal,
        beta: Array1::from(beta),
        theta,
        s,
        l,
        gamma,
        w,
    };
    let enc = encoding_residual(&params);
    if enc > 1e-10 * frobenius(params.s.view()).max(1.0) {
        return Err(Error::InvalidParameters(format!(
            "1^T (Γ⁻¹ - L) 1 = {enc:e} is not zero"
        )));
    }
    Ok(params)
}

/// `|1^T (Γ⁻¹ - L) 1|`.
fn encoding_residual(params: &SplittingParams) -> f64 {
    let inv: f64 = params.gamma.iter().map(|g| 1.0 / g).sum();
    (inv - params.l.sum()).abs()
}

/// Finds `P` with `P P^T = S_target - M M^T - W` and `P^T 1 = 0`.
pub fn factor_p(s_target: &Array2<f64>, m: &Array2<f64>, w: &Array2<f64>) -> Result<Array2<f64>> {
    let n = s_target.nrows();
    if s_target.dim() != (n, n) || w.dim() != (n, n) || m.nrows() != n {
        return Err(Error::Shape("factor_p: inconsistent sizes".into()));
    }
    let r = s_target - &gram(m.view()) - w;
    let scale = frobenius(s_target.view()).max(frobenius(r.view())).max(f64::MIN_POSITIVE);
    if frobenius((&r - &r.t()).view()) > NULL_TOL * scale {
        return Err(Error::InvalidParameters("residual S - MM^T - W is not symmetric".into()));
    }
    let ones = r.sum_axis(Axis(1));
    if ones.dot(&ones).sqrt() > NULL_TOL * scale {
        return Err(Error::InvalidParameters("residual S - MM^T - W does not annihilate 1".into()));
    }
    let r_norm = frobenius(r.view());
    if r_norm <= 1e-14 * scale {
        return Ok(Array2::zeros((n, 0)));
    }
    let eig = symmetric_eigen(r.view());
    if eig.values[0] < -PSD_TOL * r_norm.max(1.0) {
        return Err(Error::NotRepresentable {
            min_eigenvalue: eig.values[0],
        });
    }
    let rank = eig
        .values
        .iter()
        .filter(|&&v| v > 1e-12 * r_norm)
        .count()
        .min(n - 1);
    if rank == 0 {
        return Ok(Array2::zeros((n, 0)));
    }
    let (mut p, _) = psd_factor(r.view(), rank);
    center_columns(&mut p);
    Ok(p)
}

/// Tolerances used by [`validate_params`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative tolerance for `M^T 1`, `1^T(Γ⁻¹-L)1` and the rank test.
    pub null_space: f64,
    /// Absolute tolerance for `H^T 1 = K 1 = 1`.
    pub row_sum: f64,
    /// Relative tolerance for the smallest eigenvalue of the LMI residual.
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            null_space: NULL_TOL,
            row_sum: SUM_TOL,
            psd: PSD_TOL,
        }
    }
}

/// Outcome of checking the four convergence conditions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `Null(M^T) = span(1)`.
    pub null_space: bool,
    /// `L` strictly lower triangular with `1^T (Γ⁻¹ - L) 1 = 0`.
    pub lower_triangular: bool,
    /// `(H, K)` causal with unit column/row sums.
    pub causal: bool,
    /// `2Γ⁻¹ - L - L^T ⪰ M M^T + W`.
    pub lmi: bool,
    pub lmi_min_eigenvalue: f64,
    /// `||M^T 1||`, smallest singular value of `M`, `|1^T (Γ⁻¹ - L) 1|`.
    pub null_space_residuals: Vec<f64>,
    pub row_sum_residuals: Vec<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.null_space && self.lower_triangular && self.causal && self.lmi
    }
}

/// `2Γ⁻¹ - L - L^T - M M^T - W`.
pub fn lmi_residual(params: &SplittingParams) -> Array2<f64> {
    let n = params.n();
    let mut q = -(&params.l + &params.l.t());
    for i in 0..n {
        q[[i, i]] += 2.0 / params.gamma[i];
    }
    q - gram(params.m.view()) - &params.w
}

pub fn validate_params(params: &SplittingParams, tol: &Tolerances) -> ValidationReport {
    let n = params.n();
    let m_norm = frobenius(params.m.view());
    let ones = params.m.sum_axis(Axis(0));
    let ones_res = ones.dot(&ones).sqrt();
    let sigma_min = if params.m.ncols() == 0 {
        0.0
    } else {
        min_eigenvalue(params.m.t().dot(&params.m).view()).max(0.0).sqrt()
    };
    let null_space = params.m.dim() == (n, n.saturating_sub(1))
        && m_norm > 0.0
        && ones_res <= tol.null_space * m_norm
        && sigma_min > tol.null_space * m_norm;

    let enc = encoding_residual(params);
    let strictly_lower = params
        .l
        .indexed_iter()
        .all(|((i, j), &v)| j < i || v == 0.0);
    let inv_scale: f64 = params.gamma.iter().map(|g| 1.0 / g).sum::<f64>().max(1.0);
    let lower_triangular = strictly_lower
        && params.gamma.iter().all(|g| *g > 0.0)
        && enc <= tol.null_space * inv_scale;

    let c = &params.causal;
    let supports_ok = is_causal_pair(c.h(), c.k(), c.f()).unwrap_or(false);
    let row_sum_residuals = c.sum_residuals();
    let causal = supports_ok
        && row_sum_residuals.iter().all(|r| *r <= tol.row_sum)
        && params.beta.len() == c.m();

    let q = lmi_residual(params);
    let mut lhs = -(&params.l + &params.l.t());
    for i in 0..n {
        lhs[[i, i]] += 2.0 / params.gamma[i];
    }
    let lmi_min_eigenvalue = min_eigenvalue(q.view());
    let lmi = lmi_min_eigenvalue >= -tol.psd * frobenius(lhs.view()).max(1.0);

    ValidationReport {
        null_space,
        lower_triangular,
        causal,
        lmi,
        lmi_min_eigenvalue,
        null_space_residuals: vec![ones_res, sigma_min, enc],
        row_sum_residuals,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn assemble_two_node() {
        let params = assemble(
            array![[1.0], [-1.0]],
            Array2::zeros((2, 0)),
            Some(CausalPair::two_node(1)),
            vec![2.0],
            0.5,
        )
        .unwrap();
        assert_eq!(params.s(), &array![[2.0, -2.0], [-2.0, 2.0]]);
        assert_eq!(params.gamma(), &array![1.0, 1.0]);
        assert_eq!(params.l(), &array![[0.0, 0.0], [2.0, 0.0]]);
        let rep = validate_params(&params, &Tolerances::default());
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn assemble_full_laplacian() {
        let m = laplacian_factor(&full_laplacian(3)).unwrap();
        let params = assemble(m, Array2::zeros((3, 0)), None, vec![], 0.5).unwrap();
        assert!(frobenius((params.s() - &full_laplacian(3)).view()) < 1e-12);
        assert!(params.gamma().iter().all(|g| (g - 1.0).abs() < 1e-12));
    }

    #[test]
    fn assemble_rejects_bad_input() {
        let zero = Array2::zeros((3, 2));
        assert!(matches!(
            assemble(zero, Array2::zeros((3, 0)), None, vec![], 0.5),
            Err(Error::InvalidM(_))
        ));
        // M^T 1 != 0
        let m = array![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert!(assemble(m, Array2::zeros((3, 0)), None, vec![], 0.5).is_err());
        let m = laplacian_factor(&full_laplacian(3)).unwrap();
        assert!(assemble(m.clone(), Array2::zeros((3, 0)), None, vec![], 1.0).is_err());
        assert!(assemble(m, Array2::zeros((3, 0)), None, vec![1.0], 0.5).is_err());
    }

    #[test]
    fn factor_p_roundtrip() {
        let m = laplacian_factor(&GraphSpec::build(GraphKind::Path, 4).unwrap().laplacian()).unwrap();
        let target = 1.5 * full_laplacian(4);
        let w = Array2::zeros((4, 4));
        let p = factor_p(&target, &m, &w).unwrap();
        let back = gram(m.view()) + gram(p.view());
        assert!(frobenius((&back - &target).view()) <= 1e-10 * frobenius(target.view()));
        assert!(p.sum_axis(Axis(0)).iter().all(|v| v.abs() < 1e-12));

        let exact = factor_p(&gram(m.view()), &m, &w).unwrap();
        assert_eq!(exact.ncols(), 0);

        let err = factor_p(&(0.5 * gram(m.view())), &m, &w);
        assert!(matches!(err, Err(Error::NotRepresentable { .. })));
    }
}
