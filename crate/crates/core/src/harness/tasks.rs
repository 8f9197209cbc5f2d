//! Construction of static leave-one-class-out and temporal task streams.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{induced_subgraph, Graph};
use crate::scalar::Scalar;
use crate::seed::derive_seed;

/// One train-then-evaluate step.
///
/// Vertex ids in `eval_vertices` and `tuning_vertices` refer to
/// `eval_graph`; `train_map[i]` is the `eval_graph` id of training vertex `i`.
#[derive(Clone, Debug)]
pub struct Task<T> {
    pub name: String,
    pub train_graph: Graph<T>,
    pub train_map: Vec<usize>,
    pub eval_graph: Graph<T>,
    pub eval_vertices: Vec<usize>,
    /// Per eval vertex: label outside `known_classes`.
    pub ood_truth: Vec<bool>,
    /// Held-out vertices available for choosing hyperparameters such as α.
    pub tuning_vertices: Vec<usize>,
    pub tuning_truth: Vec<bool>,
    /// Distinct labels of the training graph, ascending.
    pub known_classes: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamOrigin {
    StaticLoco,
    Temporal,
}

#[derive(Clone, Debug)]
pub struct TaskStream<T> {
    pub origin: StreamOrigin,
    pub tasks: Vec<Task<T>>,
}

/// Vertex sets of a stratified split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn largest_remainder(total: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = fractions.iter().map(|f| f * total as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Per-class split: each class's vertices are shuffled with a seeded RNG and
/// cut into parts whose sizes follow largest-remainder rounding.
pub fn stratified_split(labels: &[usize], num_classes: usize, fractions: [f64; 3], seed: u64) -> Result<Split> {
    if fractions.iter().any(|&f| !(0.0..=1.0).contains(&f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split fractions {fractions:?} must be in [0, 1] and sum to 1"
        )));
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for (v, &y) in labels.iter().enumerate() {
        by_class[y].push(v);
    }
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for (c, members) in by_class.iter_mut().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[c as u64]));
        members.shuffle(&mut rng);
        let [a, b, _] = largest_remainder(members.len(), &fractions);
        split.train.extend_from_slice(&members[..a]);
        split.val.extend_from_slice(&members[a..a + b]);
        split.test.extend_from_slice(&members[a + b..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Leave-one-class-out task: train on the training vertices outside
/// `holdout` (inductively, their induced subgraph), tune on the validation
/// vertices, and evaluate the test vertices on the full graph with
/// `holdout` as the OOD class.
pub fn make_static_task<T: Scalar>(
    g: &Graph<T>,
    holdout: usize,
    fractions: [f64; 3],
    seed: u64,
) -> Result<Task<T>> {
    if holdout >= g.num_classes() {
        return Err(Error::InvalidConfig(format!(
            "holdout class {holdout} not below {}",
            g.num_classes()
        )));
    }
    let split = stratified_split(g.labels(), g.num_classes(), fractions, seed)?;
    let labels = g.labels();
    let mut keep = vec![false; g.num_vertices()];
    for &v in &split.train {
        keep[v] = labels[v] != holdout;
    }
    if !keep.iter().any(|&k| k) {
        return Err(Error::Data(format!(
            "holding out class {holdout} leaves no training vertex"
        )));
    }
    let (train_graph, train_map) = induced_subgraph(g, &keep)?;
    let known_classes = distinct_labels(train_graph.labels());
    let truth = |vs: &[usize]| vs.iter().map(|&v| !known_classes.contains(&labels[v])).collect::<Vec<_>>();
    let ood_truth = truth(&split.test);
    let tuning_truth = truth(&split.val);
    if ood_truth.iter().all(|&t| t) {
        return Err(Error::Data(format!(
            "holding out class {holdout} leaves no in-distribution test vertex"
        )));
    }
    Ok(Task {
        name: format!("holdout_{holdout}"),
        train_graph,
        train_map,
        eval_graph: g.clone(),
        eval_vertices: split.test,
        ood_truth,
        tuning_vertices: split.val,
        tuning_truth,
        known_classes,
    })
}

/// Static stream with one task per holdout class.
pub fn make_static_tasks<T: Scalar>(
    g: &Graph<T>,
    holdouts: &[usize],
    fractions: [f64; 3],
    seed: u64,
) -> Result<TaskStream<T>> {
    let tasks = holdouts
        .iter()
        .map(|&k| make_static_task(g, k, fractions, seed))
        .collect::<Result<_>>()?;
    Ok(TaskStream {
        origin: StreamOrigin::StaticLoco,
        tasks,
    })
}

fn distinct_labels(labels: &[usize]) -> Vec<usize> {
    let mut out = labels.to_vec();
    out.sort_unstable();
    out.dedup();
    out
}

/// Temporal stream: for consecutive observed years `t_i < t_{i+1}` with
/// `t_i >= t0`, train on every vertex up to `t_i` and evaluate the vertices
/// of `t_{i+1}` on the graph up to `t_{i+1}`.
pub fn make_temporal_tasks<T: Scalar>(g: &Graph<T>, t0: i64) -> Result<TaskStream<T>> {
    let years = g
        .timestamps()
        .ok_or_else(|| Error::Data("temporal tasks need per-vertex years".into()))?;
    let mut distinct = years.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let (first, last) = (distinct[0], *distinct.last().expect("nonempty graph"));
    if t0 < first || t0 >= last {
        return Err(Error::InvalidConfig(format!(
            "t0 = {t0} must lie in [{first}, {last}) so that at least one later year exists"
        )));
    }
    for pair in distinct.windows(2) {
        if pair[1] > pair[0] + 1 {
            log::warn!("years {} to {} have no vertex and are skipped", pair[0] + 1, pair[1] - 1);
        }
    }
    let steps: Vec<(i64, i64)> = distinct
        .windows(2)
        .filter(|p| p[0] >= t0)
        .map(|p| (p[0], p[1]))
        .collect();
    let mut tasks = Vec::with_capacity(steps.len());
    for (t_train, t_eval) in steps {
        let visible: Vec<bool> = years.iter().map(|&y| y <= t_eval).collect();
        let (eval_graph, eval_map) = induced_subgraph(g, &visible)?;
        let eval_years: Vec<i64> = eval_map.iter().map(|&v| years[v]).collect();
        let keep: Vec<bool> = eval_years.iter().map(|&y| y <= t_train).collect();
        let (train_graph, train_map) = induced_subgraph(&eval_graph, &keep)?;
        let known_classes = distinct_labels(train_graph.labels());
        let eval_vertices: Vec<usize> = (0..eval_graph.num_vertices())
            .filter(|&v| eval_years[v] == t_eval)
            .collect();
        let ood_truth = eval_vertices
            .iter()
            .map(|&v| !known_classes.contains(&eval_graph.labels()[v]))
            .collect();
        tasks.push(Task {
            name: format!("year_{t_eval}"),
            train_graph,
            train_map,
            eval_graph,
            eval_vertices,
            ood_truth,
            tuning_vertices: Vec::new(),
            tuning_truth: Vec::new(),
            known_classes,
        });
    }
    Ok(TaskStream {
        origin: StreamOrigin::Temporal,
        tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::tensor::DenseMatrix;

    fn two_class(n: usize) -> Graph<f64> {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let labels = (0..n).map(|v| v % 2).collect();
        build_graph(n, &edges, DenseMatrix::zeros(n, 2), labels, 2, None).unwrap()
    }

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(largest_remainder(10, &[0.6, 0.2, 0.2]), [6, 2, 2]);
        assert_eq!(largest_remainder(7, &[0.6, 0.2, 0.2]), [4, 2, 1]);
        assert_eq!(largest_remainder(1, &[0.6, 0.2, 0.2]), [1, 0, 0]);
        for n in 0..50 {
            assert_eq!(largest_remainder(n, &[0.6, 0.2, 0.2]).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn split_partitions_vertices() {
        let labels: Vec<usize> = (0..53).map(|v| v % 3).collect();
        let s = stratified_split(&labels, 3, [0.6, 0.2, 0.2], 4).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..53).collect::<Vec<_>>());
        assert_eq!(s, stratified_split(&labels, 3, [0.6, 0.2, 0.2], 4).unwrap());
        assert!(stratified_split(&labels, 3, [0.6, 0.2, 0.3], 4).is_err());
    }

    #[test]
    fn static_task_is_inductive() {
        let g = two_class(40);
        let t = make_static_task(&g, 1, [0.6, 0.2, 0.2], 0).unwrap();
        assert!(t.train_graph.labels().iter().all(|&y| y == 0));
        assert_eq!(t.known_classes, vec![0]);
        for &v in &t.train_map {
            assert_eq!(g.labels()[v], 0);
            assert!(!t.eval_vertices.contains(&v));
            assert!(!t.tuning_vertices.contains(&v));
        }
        for (&v, &ood) in t.eval_vertices.iter().zip(&t.ood_truth) {
            assert_eq!(ood, g.labels()[v] == 1);
        }
        assert!(make_static_task(&g, 2, [0.6, 0.2, 0.2], 0).is_err());
    }

    #[test]
    fn temporal_stream_marks_new_class() {
        let n = 9;
        let labels = vec![0, 1, 0, 1, 0, 1, 2, 2, 0];
        let years = vec![1, 1, 1, 2, 2, 2, 3, 3, 3];
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let g = build_graph(n, &edges, DenseMatrix::<f64>::zeros(n, 1), labels, 3, Some(years)).unwrap();
        let s = make_temporal_tasks(&g, 1).unwrap();
        assert_eq!(s.tasks.len(), 2);
        assert_eq!(s.tasks[0].train_graph.num_vertices(), 3);
        assert!(s.tasks[0].ood_truth.iter().all(|&t| !t));
        let last = &s.tasks[1];
        assert_eq!(last.train_graph.num_vertices(), 6);
        assert_eq!(last.ood_truth, vec![true, true, false]);
        assert!(make_temporal_tasks(&g, 3).is_err());
        assert!(make_temporal_tasks(&two_class(4), 0).is_err());
    }
}
