//! Problem generators: the Huber-regularized geometric median toy problem and
//! the decarbonized portfolio problem.

mod portfolio;
mod toy;

pub use portfolio::{
    gen_portfolio_problem, load_returns_csv, parse_returns_csv, PortfolioInstance, PortfolioProblemConfig,
};
pub use toy::{gen_toy_problem, ToyInstance, ToyProblemConfig};

use std::ops::Range;

/// Splits `0..len` into `parts` contiguous ranges whose sizes differ by at
/// most one, larger ranges first.
pub fn even_partition(len: usize, parts: usize) -> Vec<Range<usize>> {
    let base = len / parts;
    let extra = len % parts;
    let mut start = 0;
    (0..parts)
        .map(|k| {
            let size = base + usize::from(k < extra);
            let r = start..start + size;
            start += size;
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_sizes() {
        assert_eq!(even_partition(7, 3), vec![0..3, 3..5, 5..7]);
        assert_eq!(even_partition(4, 4), vec![0..1, 1..2, 2..3, 3..4]);
    }
}
