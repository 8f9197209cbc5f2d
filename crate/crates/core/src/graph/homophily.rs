//! Homophily statistics of a labelled graph.
//!
//! Edge counts are reported in adjacency slots, so each undirected edge
//! counts twice. Ratios are unaffected by this convention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    /// Fraction of edges joining same-class endpoints.
    pub graph_level: f64,
    /// Mean over non-isolated vertices of the same-class neighbor fraction.
    pub vertex_level: f64,
    /// Class-insensitive edge homophily; `None` for fewer than two classes.
    pub class_insensitive: Option<f64>,
    /// `(inter - intra) / |E|`: -1 for a fully homophilous graph.
    pub homophily_index: f64,
    pub inter_class_edges: usize,
    pub intra_class_edges: usize,
}

pub fn homophily_measures<T: Scalar>(g: &Graph<T>) -> Result<HomophilyReport> {
    if g.num_edge_slots() == 0 {
        return Err(Error::Undefined(
            "homophily of an edgeless graph".into(),
        ));
    }
    let labels = g.labels();
    let mut intra = 0usize;
    let mut vertex_sum = 0.0;
    let mut non_isolated = 0usize;
    for v in 0..g.num_vertices() {
        let nbrs = g.neighbors(v);
        if nbrs.is_empty() {
            continue;
        }
        let same = nbrs.iter().filter(|&&w| labels[w] == labels[v]).count();
        intra += same;
        vertex_sum += same as f64 / nbrs.len() as f64;
        non_isolated += 1;
    }
    let total = g.num_edge_slots();
    let inter = total - intra;
    let class_insensitive = if g.num_classes() >= 2 {
        Some(class_insensitive_homophily(g)?)
    } else {
        None
    };
    Ok(HomophilyReport {
        graph_level: intra as f64 / total as f64,
        vertex_level: vertex_sum / non_isolated as f64,
        class_insensitive,
        homophily_index: (inter as f64 - intra as f64) / total as f64,
        inter_class_edges: inter,
        intra_class_edges: intra,
    })
}

/// Per-class homophily `h_k`: same-class adjacency slots leaving class `k`
/// over all slots leaving class `k`. Classes without incident edges get 0.
pub fn class_homophily<T: Scalar>(g: &Graph<T>) -> Vec<f64> {
    let labels = g.labels();
    let mut same = vec![0usize; g.num_classes()];
    let mut incident = vec![0usize; g.num_classes()];
    for v in 0..g.num_vertices() {
        let y = labels[v];
        for &w in g.neighbors(v) {
            incident[y] += 1;
            if labels[w] == y {
                same[y] += 1;
            }
        }
    }
    same.iter()
        .zip(&incident)
        .map(|(&s, &d)| if d == 0 { 0.0 } else { s as f64 / d as f64 })
        .collect()
}

/// `1/(|C|-1) · Σ_k max(0, h_k - |C_k|/|V|)`.
pub fn class_insensitive_homophily<T: Scalar>(g: &Graph<T>) -> Result<f64> {
    let k = g.num_classes();
    if k < 2 {
        return Err(Error::Undefined(
            "class-insensitive homophily needs at least two classes".into(),
        ));
    }
    if g.num_edge_slots() == 0 {
        return Err(Error::Undefined(
            "homophily of an edgeless graph".into(),
        ));
    }
    let n = g.num_vertices() as f64;
    let h = class_homophily(g);
    let total: f64 = g
        .class_counts()
        .iter()
        .zip(&h)
        .map(|(&count, &hk)| (hk - count as f64 / n).max(0.0))
        .sum();
    Ok(total / (k - 1) as f64)
}
