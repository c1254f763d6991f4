use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Directed graph on nodes `0..n` whose edges all point from a lower to a
/// higher index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphSpec {
    n: usize,
    edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphKind {
    Path,
    Ring,
    Complete,
}

impl GraphSpec {
    /// Edges are sorted and deduplicated.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (h, i) in edges {
            if h >= i {
                return Err(Error::Graph(format!("edge ({h}, {i}) must point to a higher index")));
            }
            if i >= n {
                return Err(Error::Graph(format!("edge ({h}, {i}) leaves a graph with {n} nodes")));
            }
            set.insert((h, i));
        }
        Ok(Self {
            n,
            edges: set.into_iter().collect(),
        })
    }

    pub fn build(kind: GraphKind, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Graph(format!("need at least two nodes, got {n}")));
        }
        let edges: Vec<(usize, usize)> = match kind {
            GraphKind::Path => (0..n - 1).map(|i| (i, i + 1)).collect(),
            GraphKind::Ring => {
                let mut e: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
                e.push((0, n - 1));
                e
            }
            GraphKind::Complete => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect(),
        };
        Self::new(n, edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn contains(&self, edge: (usize, usize)) -> bool {
        self.edges.binary_search(&edge).is_ok()
    }

    pub fn is_subgraph_of(&self, other: &GraphSpec) -> bool {
        self.n == other.n && self.edges.iter().all(|&e| other.contains(e))
    }

    /// Edges of `self` not in `other`.
    pub fn difference(&self, other: &GraphSpec) -> GraphSpec {
        GraphSpec {
            n: self.n,
            edges: self.edges.iter().copied().filter(|&e| !other.contains(e)).collect(),
        }
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(h, i) in &self.edges {
            d[h] += 1;
            d[i] += 1;
        }
        d
    }

    /// Connectivity of the underlying undirected graph.
    pub fn is_connected(&self) -> bool {
        if self.n == 0 {
            return false;
        }
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        let mut components = self.n;
        for &(a, b) in &self.edges {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
                components -= 1;
            }
        }
        components == 1
    }

    /// Degree matrix minus adjacency.
    pub fn laplacian(&self) -> Array2<f64> {
        let mut l = Array2::zeros((self.n, self.n));
        for &(h, i) in &self.edges {
            l[[h, h]] += 1.0;
            l[[i, i]] += 1.0;
            l[[h, i]] -= 1.0;
            l[[i, h]] -= 1.0;
        }
        l
    }
}
