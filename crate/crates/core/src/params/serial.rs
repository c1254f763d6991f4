use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{assemble, factor_p, CausalPair, NondecreasingVector, SplittingParams};
use crate::error::{Error, Result};

/// JSON form of a parameter bundle. Matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsDocument {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "F")]
    pub f: Vec<usize>,
    #[serde(rename = "M")]
    pub m_matrix: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
    #[serde(rename = "H")]
    pub h: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub theta: f64,
    pub beta: Vec<f64>,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(name: &str, data: &[Vec<f64>], shape: (usize, usize)) -> Result<Array2<f64>> {
    if data.len() != shape.0 || data.iter().any(|r| r.len() != shape.1) {
        return Err(Error::Shape(format!("{name} must be {}x{}", shape.0, shape.1)));
    }
    let flat: Vec<f64> = data.iter().flatten().copied().collect();
    Array2::from_shape_vec(shape, flat).map_err(|e| Error::Shape(e.to_string()))
}

impl ParamsDocument {
    pub fn from_params(params: &SplittingParams) -> Result<Self> {
        let p = match params.p() {
            Some(p) => p.clone(),
            None => factor_p(params.s(), params.m(), params.w())?,
        };
        Ok(Self {
            n: params.n(),
            m: params.num_forward(),
            f: params.f().entries().to_vec(),
            m_matrix: rows(params.m()),
            p: rows(&p),
            h: rows(params.h()),
            k: rows(params.k()),
            theta: params.theta(),
            beta: params.beta().to_vec(),
        })
    }

    pub fn to_params(&self) -> Result<SplittingParams> {
        let n = self.n;
        if n < 2 {
            return Err(Error::Shape(format!("n must be at least 2, got {n}")));
        }
        let m_mat = matrix("M", &self.m_matrix, (n, n - 1))?;
        let p_cols = self.p.first().map_or(0, |r| r.len());
        let p = matrix("P", &self.p, (n, p_cols))?;
        let h = matrix("H", &self.h, (n, self.m))?;
        let k = matrix("K", &self.k, (self.m, n))?;
        let f = NondecreasingVector::new(self.f.clone(), self.m)?;
        let causal = CausalPair::new(h, k, f)?;
        assemble(m_mat, p, Some(causal), self.beta.clone(), self.theta)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl SplittingParams {
    pub fn to_json(&self) -> Result<String> {
        ParamsDocument::from_params(self)?.to_json()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        ParamsDocument::from_json(s)?.to_params()
    }
}
