use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::scalar::Scalar;
use crate::tensor::CsrPattern;

/// Mean of `values` over each vertex's neighbors. Isolated vertices keep
/// their own value.
pub fn neighbor_mean<T: Scalar>(g: &Graph<T>, values: &[T]) -> Result<Vec<T>> {
    if values.len() != g.num_vertices() {
        return Err(Error::shape(
            "neighbor_mean",
            format!("{} values for {} vertices", values.len(), g.num_vertices()),
        ));
    }
    Ok((0..g.num_vertices())
        .map(|v| {
            let nbrs = g.neighbors(v);
            if nbrs.is_empty() {
                values[v]
            } else {
                let total = nbrs.iter().fold(T::zero(), |acc, &w| acc + values[w]);
                total / T::from_usize_lossy(nbrs.len())
            }
        })
        .collect())
}

/// Boolean matrix whose row `i` lists every `j != i` reachable from `i`
/// in at most `r` hops, sorted.
pub fn r_hop_mask<T: Scalar>(g: &Graph<T>, r: usize) -> Result<CsrPattern> {
    if !(1..=3).contains(&r) {
        return Err(Error::InvalidConfig(format!(
            "adjacency power r = {r} outside 1..=3"
        )));
    }
    let n = g.num_vertices();
    let mut dist = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    let mut touched = Vec::new();
    let mut offsets = vec![0];
    let mut indices = Vec::new();
    for src in 0..n {
        dist[src] = 0;
        touched.push(src);
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            if dist[u] == r {
                continue;
            }
            for &w in g.neighbors(u) {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    touched.push(w);
                    queue.push_back(w);
                }
            }
        }
        let start = indices.len();
        indices.extend(touched.iter().copied().filter(|&w| w != src));
        indices[start..].sort_unstable();
        offsets.push(indices.len());
        for &w in &touched {
            dist[w] = usize::MAX;
        }
        touched.clear();
    }
    CsrPattern::new(n, n, offsets, indices)
}

/// Subgraph over the vertices with `keep[v]`. Returns the subgraph and
/// the map from new vertex ids to original ones (increasing).
pub fn induced_subgraph<T: Scalar>(g: &Graph<T>, keep: &[bool]) -> Result<(Graph<T>, Vec<usize>)> {
    if keep.len() != g.num_vertices() {
        return Err(Error::shape(
            "induced_subgraph",
            format!("mask of {} for {} vertices", keep.len(), g.num_vertices()),
        ));
    }
    let map: Vec<usize> = (0..keep.len()).filter(|&v| keep[v]).collect();
    if map.is_empty() {
        return Err(Error::InvalidGraph("induced subgraph keeps no vertex".into()));
    }
    let mut new_id = vec![usize::MAX; keep.len()];
    for (i, &v) in map.iter().enumerate() {
        new_id[v] = i;
    }
    let mut edges = Vec::new();
    for (i, &u) in map.iter().enumerate() {
        for &w in g.neighbors(u) {
            let j = new_id[w];
            if j != usize::MAX && i < j {
                edges.push((i, j));
            }
        }
    }
    let features = g.features().select_rows(&map);
    let labels = map.iter().map(|&v| g.labels()[v]).collect();
    let timestamps = g.timestamps().map(|ts| map.iter().map(|&v| ts[v]).collect());
    let sub = build_graph(map.len(), &edges, features, labels, g.num_classes(), timestamps)?;
    Ok((sub, map))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::tests::tiny;

    #[test]
    fn star_and_isolated_means() {
        let g = tiny(4, &[(0, 1), (0, 2)], vec![0; 4]);
        let m = neighbor_mean(&g, &[0.9, 0.2, 0.8, 0.7]).unwrap();
        assert!((m[0] - 0.5).abs() < 1e-15);
        assert_eq!(m[3], 0.7);
        assert_eq!(m[1], 0.9);
    }

    #[test]
    fn triangle_mean() {
        let g = tiny(3, &[(0, 1), (1, 2), (0, 2)], vec![0; 3]);
        let m = neighbor_mean(&g, &[0.0, 0.3, 0.9]).unwrap();
        assert!((m[0] - 0.6).abs() < 1e-15);
        assert!(neighbor_mean(&g, &[0.0]).is_err());
    }

    #[test]
    fn hop_masks() {
        let path = tiny(3, &[(0, 1), (1, 2)], vec![0; 3]);
        let r1 = r_hop_mask(&path, 1).unwrap();
        assert!(!r1.contains(0, 2));
        assert!(r1.contains(0, 1));
        let r2 = r_hop_mask(&path, 2).unwrap();
        assert!(r2.contains(0, 2));
        assert!(!r2.contains(0, 0));

        let cycle = tiny(4, &[(0, 1), (1, 2), (2, 3), (3, 0)], vec![0; 4]);
        let m = r_hop_mask(&cycle, 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.contains(i, j), i != j, "({i},{j})");
            }
        }
        assert!(r_hop_mask(&cycle, 0).is_err());
        assert!(r_hop_mask(&cycle, 4).is_err());
    }

    #[test]
    fn induced_keeps_internal_edges() {
        let g = tiny(3, &[(0, 1), (1, 2), (0, 2)], vec![0, 1, 0]);
        let (all, map) = induced_subgraph(&g, &[true; 3]).unwrap();
        assert_eq!(all, g);
        assert_eq!(map, vec![0, 1, 2]);

        let (sub, map) = induced_subgraph(&g, &[true, false, true]).unwrap();
        assert_eq!(map, vec![0, 2]);
        assert_eq!(sub.num_edges(), 1);
        assert_eq!(sub.labels(), &[0, 0]);
        assert!(induced_subgraph(&g, &[false; 3]).is_err());
    }
}
