//! Named members of the family: Davis-Yin / Douglas-Rachford, graph-DRS,
//! graph forward-backward and its ring and sequential variants, the adapted
//! graph forward-backward method and the heuristic SFB+ design.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::engine::{Form, DEFAULT_THETA};
use crate::error::{Error, Result};
use crate::heuristics::sfb_plus_params;
use crate::params::{
    assemble, factor_p, forward_coupling, infer_f, laplacian_factor, validate_params, CausalPair,
    NondecreasingVector, SplittingParams, Tolerances,
};

pub use crate::params::{GraphKind, GraphSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MethodName {
    #[serde(rename = "DY")]
    Dy,
    #[serde(rename = "DRS")]
    Drs,
    #[serde(rename = "GraphDRS")]
    GraphDrs,
    #[serde(rename = "GFB")]
    Gfb,
    #[serde(rename = "RFB")]
    Rfb,
    #[serde(rename = "SDY")]
    Sdy,
    #[serde(rename = "aGFB")]
    Agfb,
    #[serde(rename = "SFBplus")]
    SfbPlus,
}

impl MethodName {
    pub const ALL: [MethodName; 8] = [
        MethodName::Dy,
        MethodName::Drs,
        MethodName::GraphDrs,
        MethodName::Gfb,
        MethodName::Rfb,
        MethodName::Sdy,
        MethodName::Agfb,
        MethodName::SfbPlus,
    ];

    /// Stable command-line identifier.
    pub fn id(self) -> &'static str {
        match self {
            MethodName::Dy => "dy",
            MethodName::Drs => "drs",
            MethodName::GraphDrs => "graph-drs",
            MethodName::Gfb => "gfb",
            MethodName::Rfb => "rfb",
            MethodName::Sdy => "sdy",
            MethodName::Agfb => "agfb",
            MethodName::SfbPlus => "sfb+",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            MethodName::Dy => "DY",
            MethodName::Drs => "DRS",
            MethodName::GraphDrs => "GraphDRS",
            MethodName::Gfb => "GFB",
            MethodName::Rfb => "RFB",
            MethodName::Sdy => "SDY",
            MethodName::Agfb => "aGFB",
            MethodName::SfbPlus => "SFBplus",
        }
    }
}

impl fmt::Display for MethodName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for MethodName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        MethodName::ALL
            .into_iter()
            .find(|m| m.id() == key || m.display_name().to_ascii_lowercase() == key)
            .ok_or_else(|| Error::InvalidParameters(format!("unknown method '{s}'")))
    }
}

/// A named, validated parameter choice.
#[derive(Debug, Clone)]
pub struct MethodDescriptor {
    pub name: MethodName,
    pub params: SplittingParams,
    /// Form the method is naturally run in.
    pub form: Form,
    pub notes: String,
}

impl MethodDescriptor {
    fn new(name: MethodName, params: SplittingParams, form: Form, notes: impl Into<String>) -> Result<Self> {
        let report = validate_params(&params, &Tolerances::default());
        if !report.passed() {
            return Err(Error::InvalidParameters(format!(
                "{name} parameters fail validation (λ_min = {:e})",
                report.lmi_min_eigenvalue
            )));
        }
        Ok(Self {
            name,
            params,
            form,
            notes: notes.into(),
        })
    }

    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        self.params = self.params.with_theta(theta)?;
        Ok(self)
    }
}

/// Two-operator matrices: `γ_1 = γ_2 = γ`, `M = λ(1, -1)^T` with
/// `λ² = θ̄/γ`, `L_21 = 2/γ` and the forced causal pair. No step-size check.
pub fn davis_yin_matrices(gamma: f64, theta_bar: f64, beta: &[f64], theta: f64) -> Result<SplittingParams> {
    if !(gamma > 0.0 && gamma.is_finite()) || !(theta_bar > 0.0 && theta_bar.is_finite()) {
        return Err(Error::InvalidParameters(format!(
            "need γ > 0 and θ̄ > 0, got γ = {gamma}, θ̄ = {theta_bar}"
        )));
    }
    let lambda = (theta_bar / gamma).sqrt();
    let m = Array2::from_shape_vec((2, 1), vec![lambda, -lambda]).expect("2x1");
    let mut l = Array2::zeros((2, 2));
    l[[1, 0]] = 2.0 / gamma;
    SplittingParams::from_step_sizes(
        m,
        Array1::from_elem(2, gamma),
        l,
        CausalPair::two_node(beta.len()),
        beta.to_vec(),
        theta,
    )
}

/// Davis-Yin with step `γ` and z-relaxation `θ̄`; averaged iff
/// `(4 - βγ)/2 ≥ θ̄` with `β = Σ_j β_j`.
pub fn davis_yin_params(gamma: f64, theta_bar: f64, beta: &[f64]) -> Result<MethodDescriptor> {
    let beta_total: f64 = beta.iter().sum();
    let bound = (4.0 - beta_total * gamma) / 2.0;
    if bound < theta_bar {
        return Err(Error::StepSize { bound, theta_bar });
    }
    let params = davis_yin_matrices(gamma, theta_bar, beta, DEFAULT_THETA)?;
    let name = if beta.is_empty() { MethodName::Drs } else { MethodName::Dy };
    MethodDescriptor::new(
        name,
        params,
        Form::Minimal,
        format!("n = 2, γ = {gamma}, θ̄ = {theta_bar}, Σβ = {beta_total}"),
    )
}

/// Douglas-Rachford: Davis-Yin without forward terms.
pub fn drs_params(gamma: f64, theta_bar: f64) -> Result<MethodDescriptor> {
    davis_yin_params(gamma, theta_bar, &[])
}

fn check_connected(g: &GraphSpec) -> Result<()> {
    if !g.is_connected() {
        return Err(Error::Graph(format!("graph with edges {:?} is not connected", g.edges())));
    }
    Ok(())
}

/// Graph-DRS: `M M^T` is the laplacian of `G`, `P P^T` that of `G' \ G`.
pub fn graph_drs_params(g: &GraphSpec, g_prime: &GraphSpec) -> Result<MethodDescriptor> {
    if g.n() != g_prime.n() {
        return Err(Error::Graph("graphs have different node counts".into()));
    }
    check_connected(g)?;
    if !g.is_subgraph_of(g_prime) {
        return Err(Error::Graph("E is not contained in E'".into()));
    }
    let n = g.n();
    let m = laplacian_factor(&g.laplacian())?;
    let p = factor_p(&g_prime.laplacian(), &m, &Array2::zeros((n, n)))?;
    let params = assemble(m, p, None, vec![], DEFAULT_THETA)?;
    MethodDescriptor::new(
        MethodName::GraphDrs,
        params,
        Form::Minimal,
        format!("G: {:?}, G': {:?}", g.edges(), g_prime.edges()),
    )
}

/// Graph forward-backward with forward graph `G_f` and uniform
/// `β = max_j β_j`.
///
/// Forward slot `s` feeds node `s + 1` and reads the unique `G_f`
/// in-neighbour of that node. With `m = n - 1` every slot holds one
/// forward; otherwise forwards are spread over the slots in order, and a
/// slot holding `c` forwards weighs `cβ` in the target
/// `S = (1 + b/2) 𝓛'`, `b` the largest slot weight.
pub fn gfb_params(g: &GraphSpec, g_prime: &GraphSpec, g_f: &GraphSpec, beta: &[f64]) -> Result<MethodDescriptor> {
    gfb_named(MethodName::Gfb, g, g_prime, g_f, beta)
}

fn gfb_named(
    name: MethodName,
    g: &GraphSpec,
    g_prime: &GraphSpec,
    g_f: &GraphSpec,
    beta: &[f64],
) -> Result<MethodDescriptor> {
    let n = g.n();
    if g_prime.n() != n || g_f.n() != n {
        return Err(Error::Graph("graphs have different node counts".into()));
    }
    check_connected(g)?;
    if !g.is_subgraph_of(g_prime) || !g_f.is_subgraph_of(g_prime) {
        return Err(Error::Graph("need E ⊂ E' and E_f ⊂ E'".into()));
    }
    let mut source = vec![None; n];
    for &(h, i) in g_f.edges() {
        if source[i].replace(h).is_some() {
            return Err(Error::Graph(format!("node {} has two incoming forward edges", i + 1)));
        }
    }
    if let Some(i) = (1..n).find(|&i| source[i].is_none()) {
        return Err(Error::Graph(format!("node {} has no incoming forward edge", i + 1)));
    }
    let m = beta.len();
    if m == 0 {
        return Err(Error::InvalidParameters("graph forward-backward needs forward terms".into()));
    }
    let b = beta.iter().copied().fold(0.0, f64::max);
    let slots = n - 1;
    let slot = |j: usize| j * slots / m;
    let mut h = Array2::zeros((n, m));
    let mut k = Array2::zeros((m, n));
    let mut load = vec![0usize; slots];
    for j in 0..m {
        let s = slot(j);
        h[[s + 1, j]] = 1.0;
        k[[j, source[s + 1].expect("checked")]] = 1.0;
        load[s] += 1;
    }
    let f = infer_f(&h, &k)?;
    let causal = CausalPair::new(h, k, f)?;
    let uniform = vec![b; m];
    let w = forward_coupling(&causal, &uniform);
    let b_slot = b * *load.iter().max().expect("n >= 2") as f64;
    let s_target = g_prime.laplacian() * (1.0 + b_slot / 2.0);
    let mm = laplacian_factor(&g.laplacian())?;
    let p = factor_p(&s_target, &mm, &w)?;
    let params = assemble(mm, p, Some(causal), uniform, DEFAULT_THETA)?;
    MethodDescriptor::new(
        name,
        params,
        Form::Minimal,
        format!(
            "G: {:?}, G': {:?}, G_f: {:?}, uniform β = {b}",
            g.edges(),
            g_prime.edges(),
            g_f.edges()
        ),
    )
}

/// Ring forward-backward, realized as graph forward-backward on a ring with
/// a path of forward edges.
pub fn rfb_params(n: usize, beta: &[f64]) -> Result<MethodDescriptor> {
    let ring = GraphSpec::build(GraphKind::Ring, n)?;
    let path = GraphSpec::build(GraphKind::Path, n)?;
    gfb_named(MethodName::Rfb, &ring, &ring, &path, beta)
}

/// Sequential Davis-Yin, realized as graph forward-backward on a path.
pub fn sdy_params(n: usize, beta: &[f64]) -> Result<MethodDescriptor> {
    let path = GraphSpec::build(GraphKind::Path, n)?;
    gfb_named(MethodName::Sdy, &path, &path, &path, beta)
}

/// Adapted graph forward-backward on `G`.
///
/// `forwards[j] = ((h, i), β_j)` places forward `j` on edge `(h, i)` of `G`:
/// it reads `x_h` and feeds resolvent `i`. Entries must be ordered by target
/// node. Then `P = 0`, `S = 𝓛 + W` with
/// `x^T W x = ½ Σ_j β_j ||x_i - x_h||²`.
pub fn agfb_params(g: &GraphSpec, forwards: &[((usize, usize), f64)], theta: f64) -> Result<MethodDescriptor> {
    let n = g.n();
    check_connected(g)?;
    let m = forwards.len();
    let mut h = Array2::zeros((n, m));
    let mut k = Array2::zeros((m, n));
    let mut last_target = 0;
    for (j, &((src, dst), b)) in forwards.iter().enumerate() {
        if !g.contains((src, dst)) {
            return Err(Error::Graph(format!("forward {} sits on ({src}, {dst}), not an edge", j + 1)));
        }
        if dst < last_target {
            return Err(Error::Graph("forward edges must be ordered by target node".into()));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::InvalidParameters(format!("β = {b} on edge ({src}, {dst})")));
        }
        last_target = dst;
        h[[dst, j]] = 1.0;
        k[[j, src]] = 1.0;
    }
    let beta: Vec<f64> = forwards.iter().map(|(_, b)| *b).collect();
    let causal = if m == 0 {
        CausalPair::empty(n)
    } else {
        let f = infer_f(&h, &k)?;
        CausalPair::new(h, k, f)?
    };
    let mm = laplacian_factor(&g.laplacian())?;
    let params = assemble(mm, Array2::zeros((n, 0)), Some(causal), beta, theta)?;
    MethodDescriptor::new(
        MethodName::Agfb,
        params,
        Form::Lifted,
        format!("G: {:?}, forwards on edges {:?}", g.edges(), forwards.iter().map(|f| f.0).collect::<Vec<_>>()),
    )
}

/// Places `beta.len()` forwards on the edges of `G` ordered by target, spread
/// evenly when there are fewer forwards than edges and grouped onto
/// consecutive edges otherwise.
pub fn agfb_spread(g: &GraphSpec, beta: &[f64], theta: f64) -> Result<MethodDescriptor> {
    let mut edges = g.edges().to_vec();
    edges.sort_by_key(|&(h, i)| (i, h));
    if edges.is_empty() && !beta.is_empty() {
        return Err(Error::Graph("graph has no edges for forward terms".into()));
    }
    let m = beta.len();
    let e = edges.len();
    let forwards: Vec<_> = beta
        .iter()
        .enumerate()
        .map(|(j, b)| (edges[j * e / m.max(1)], *b))
        .collect();
    agfb_params(g, &forwards, theta)
}

/// SFB+: complete-graph coupling, `P = 0` and spectral-norm optimal `(H, K)`.
pub fn sfb_plus(f: &NondecreasingVector, beta: &[f64], theta: f64) -> Result<MethodDescriptor> {
    let params = sfb_plus_params(f, beta, theta)?;
    MethodDescriptor::new(
        MethodName::SfbPlus,
        params,
        Form::Lifted,
        format!("F = {:?}", f.entries()),
    )
}
