//! Undirected attributed graphs stored as symmetric CSR adjacency.

mod homophily;
mod normalize;
mod ops;

use std::sync::Arc;

pub use homophily::{
    class_homophily, class_insensitive_homophily, homophily_measures, HomophilyReport,
};
pub use normalize::{mean_aggregation, symmetric_normalize, NormalizedAdjacency};
pub use ops::{induced_subgraph, neighbor_mean, r_hop_mask};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{CsrPattern, DenseMatrix};

/// Immutable vertex-attributed undirected graph.
///
/// Each undirected edge occupies two adjacency slots, `(u, v)` and `(v, u)`.
/// Self-loops are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph<T> {
    adjacency: Arc<CsrPattern>,
    features: DenseMatrix<T>,
    labels: Vec<usize>,
    num_classes: usize,
    timestamps: Option<Vec<i64>>,
}

/// Builds a graph from an arbitrary edge list. Edges are symmetrized,
/// duplicates collapse and self-loops are dropped.
pub fn build_graph<T: Scalar>(
    num_vertices: usize,
    edges: &[(usize, usize)],
    features: DenseMatrix<T>,
    labels: Vec<usize>,
    num_classes: usize,
    timestamps: Option<Vec<i64>>,
) -> Result<Graph<T>> {
    if features.rows() != num_vertices {
        return Err(Error::InvalidGraph(format!(
            "feature matrix has {} rows for {num_vertices} vertices",
            features.rows()
        )));
    }
    if labels.len() != num_vertices {
        return Err(Error::InvalidGraph(format!(
            "{} labels for {num_vertices} vertices",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(Error::InvalidGraph(format!(
            "label {bad} not below class count {num_classes}"
        )));
    }
    if let Some(ts) = &timestamps {
        if ts.len() != num_vertices {
            return Err(Error::InvalidGraph(format!(
                "{} timestamps for {num_vertices} vertices",
                ts.len()
            )));
        }
    }
    let mut slots = Vec::with_capacity(edges.len() * 2);
    for &(u, v) in edges {
        if u >= num_vertices || v >= num_vertices {
            return Err(Error::InvalidGraph(format!(
                "edge ({u}, {v}) has an endpoint outside 0..{num_vertices}"
            )));
        }
        if u != v {
            slots.push((u, v));
            slots.push((v, u));
        }
    }
    slots.sort_unstable();
    slots.dedup();

    let mut offsets = vec![0usize; num_vertices + 1];
    for &(u, _) in &slots {
        offsets[u + 1] += 1;
    }
    for i in 0..num_vertices {
        offsets[i + 1] += offsets[i];
    }
    let targets = slots.into_iter().map(|(_, v)| v).collect();
    let adjacency = CsrPattern::new(num_vertices, num_vertices, offsets, targets)?;
    Ok(Graph {
        adjacency: Arc::new(adjacency),
        features,
        labels,
        num_classes,
        timestamps,
    })
}

impl<T: Scalar> Graph<T> {
    #[inline]
    pub fn num_vertices(&self) -> usize {
        self.adjacency.rows()
    }

    /// Number of stored adjacency slots (twice the undirected edge count).
    #[inline]
    pub fn num_edge_slots(&self) -> usize {
        self.adjacency.nnz()
    }

    #[inline]
    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adjacency.row(v)
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.adjacency.row(v).len()
    }

    pub fn adjacency(&self) -> &Arc<CsrPattern> {
        &self.adjacency
    }

    pub fn features(&self) -> &DenseMatrix<T> {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn timestamps(&self) -> Option<&[i64]> {
        self.timestamps.as_deref()
    }

    /// Undirected edges in canonical `u < v` order, sorted.
    pub fn canonical_edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_vertices() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push((u, v));
                }
            }
        }
        out
    }

    /// Same structure and labels with a different feature matrix.
    pub fn with_features(&self, features: DenseMatrix<T>) -> Result<Self> {
        if features.rows() != self.num_vertices() {
            return Err(Error::InvalidGraph(format!(
                "feature matrix has {} rows for {} vertices",
                features.rows(),
                self.num_vertices()
            )));
        }
        Ok(Self {
            adjacency: Arc::clone(&self.adjacency),
            features,
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            timestamps: self.timestamps.clone(),
        })
    }

    /// Same graph with every edge removed.
    pub fn without_edges(&self) -> Self {
        let n = self.num_vertices();
        let pattern = CsrPattern::new(n, n, vec![0; n + 1], Vec::new()).expect("empty pattern");
        Self {
            adjacency: Arc::new(pattern),
            features: self.features.clone(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            timestamps: self.timestamps.clone(),
        }
    }

    /// Vertex count per class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny(n: usize, edges: &[(usize, usize)], labels: Vec<usize>) -> Graph<f64> {
        let k = labels.iter().max().map_or(1, |m| m + 1);
        build_graph(n, edges, DenseMatrix::zeros(n, 1), labels, k, None).unwrap()
    }

    #[test]
    fn single_edge_is_symmetrized() {
        let g = tiny(2, &[(0, 1)], vec![0, 0]);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(g.num_edge_slots(), 2);
        assert_eq!(g.num_edges(), 1);
    }

    #[test]
    fn duplicates_and_self_loops_dropped() {
        let g = tiny(3, &[(0, 1), (1, 0), (2, 2)], vec![0, 0, 0]);
        let h = tiny(3, &[(0, 1)], vec![0, 0, 0]);
        assert_eq!(g, h);
        assert_eq!(g.degree(2), 0);
    }

    #[test]
    fn invalid_inputs() {
        let f = DenseMatrix::<f64>::zeros(2, 1);
        assert!(build_graph(2, &[(0, 2)], f.clone(), vec![0, 0], 1, None).is_err());
        assert!(build_graph(3, &[], f.clone(), vec![0, 0, 0], 1, None).is_err());
        assert!(build_graph(2, &[], f.clone(), vec![0, 3], 2, None).is_err());
        assert!(build_graph(2, &[], f, vec![0, 0], 1, Some(vec![1])).is_err());
    }

    #[test]
    fn rebuild_from_canonical_edges_is_identity() {
        let g = tiny(5, &[(4, 0), (1, 2), (2, 1), (3, 4), (0, 1)], vec![0, 1, 0, 1, 0]);
        let h = tiny(5, &g.canonical_edges(), g.labels().to_vec());
        assert_eq!(g, h);
    }
}
