#![allow(dead_code)]

use graph_ood::graph::{build_graph, Graph};
use graph_ood::io::SynthConfig;
use graph_ood::models::{
    train, BackboneConfig, BackboneKind, HeadConfig, HeadKind, ModelState, TrainConfig,
};
use graph_ood::tensor::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A connected random graph with `n` vertices, `d` features and `k`
/// classes covering every class at least once.
pub fn random_graph(n: usize, d: usize, k: usize, seed: u64) -> Graph<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    for _ in 0..n {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        edges.push((u, v));
    }
    let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let features = DenseMatrix::from_vec(n, d, data).unwrap();
    let labels = (0..n).map(|v| if v < k { v } else { rng.gen_range(0..k) }).collect();
    build_graph(n, &edges, features, labels, k, None).unwrap()
}

pub fn backbone(kind: BackboneKind, hidden: usize) -> BackboneConfig {
    let mut b = BackboneConfig::new(kind, 2, hidden, 0.0);
    b.contrastive.batch_size = 8;
    b
}

/// A model trained for a few epochs so that no parameter sits at its
/// initial symmetric value.
pub fn trained(g: &Graph<f64>, kind: BackboneKind, head: HeadKind, epochs: usize) -> ModelState<f64> {
    let cfg = TrainConfig::new(epochs, 0.01, 5);
    let all = vec![true; g.num_vertices()];
    train(g, &backbone(kind, 6), &HeadConfig::new(head), &cfg, &all)
        .unwrap()
        .state
}

/// The homophilous synthetic benchmark: four ID classes and one planted
/// OOD class holding a tenth of the vertices.
pub fn benchmark(seed: u64) -> SynthConfig {
    SynthConfig {
        num_vertices: 600,
        num_classes: 5,
        p_in: 0.05,
        p_out: 0.002,
        feature_dim: 16,
        separation: 1.5,
        noise_std: 1.0,
        ood_class_id: Some(4),
        ood_fraction: Some(0.1),
        num_years: 0,
        first_year: 2000,
        seed,
    }
}
