use std::sync::Arc;

use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::{CsrPattern, SparseMatrix};

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` with explicit diagonal entries.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency<T> {
    pub matrix: SparseMatrix<T>,
}

impl<T: Scalar> NormalizedAdjacency<T> {
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.matrix.get(i, j)
    }
}

pub fn symmetric_normalize<T: Scalar>(g: &Graph<T>) -> NormalizedAdjacency<T> {
    let n = g.num_vertices();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(g.num_edge_slots() + n);
    offsets.push(0);
    for i in 0..n {
        let nbrs = g.neighbors(i);
        let split = nbrs.partition_point(|&j| j < i);
        indices.extend_from_slice(&nbrs[..split]);
        indices.push(i);
        indices.extend_from_slice(&nbrs[split..]);
        offsets.push(indices.len());
    }
    let deg: Vec<T> = (0..n).map(|i| T::from_usize_lossy(g.degree(i) + 1)).collect();
    let mut values = Vec::with_capacity(indices.len());
    for i in 0..n {
        for &j in &indices[offsets[i]..offsets[i + 1]] {
            values.push(T::one() / (deg[i] * deg[j]).sqrt());
        }
    }
    let pattern = CsrPattern::new(n, n, offsets, indices).expect("valid self-loop pattern");
    NormalizedAdjacency {
        matrix: SparseMatrix::new(Arc::new(pattern), values).expect("one value per entry"),
    }
}

/// Row-normalized adjacency (no self-loops): row `v` averages over `N(v)`.
/// Rows of isolated vertices are empty, so they aggregate to zero.
pub fn mean_aggregation<T: Scalar>(g: &Graph<T>) -> SparseMatrix<T> {
    let mut values = Vec::with_capacity(g.num_edge_slots());
    for v in 0..g.num_vertices() {
        let w = T::one() / T::from_usize_lossy(g.degree(v).max(1));
        values.extend(std::iter::repeat(w).take(g.degree(v)));
    }
    SparseMatrix::new(Arc::clone(g.adjacency()), values).expect("one value per slot")
}
