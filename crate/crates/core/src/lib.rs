//! Averaged frugal splitting methods with minimal lifting.
//!
//! Solves monotone inclusions `0 ∈ A_1(x) + … + A_n(x) + C_1(x) + … + C_m(x)`
//! with one resolvent evaluation per `A_i` and one direct evaluation per
//! cocoercive `C_j` in every iteration, storing only `n - 1` vectors between
//! iterations.

pub mod engine;
pub mod error;
pub mod experiment;
pub mod heuristics;
pub mod linalg;
pub mod ops;
pub mod params;
pub mod presets;
pub mod problems;

pub use error::{Error, Result};
