//! Stochastic-block-model graphs with Gaussian class features.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, Graph};
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub num_vertices: usize,
    pub num_classes: usize,
    /// Edge probability between two vertices of the same class.
    pub p_in: f64,
    /// Edge probability between vertices of different classes.
    pub p_out: f64,
    pub feature_dim: usize,
    /// Euclidean distance between every pair of class means.
    pub separation: f64,
    pub noise_std: f64,
    /// Class planted as the OOD class, if any.
    #[serde(default)]
    pub ood_class_id: Option<usize>,
    /// Share of vertices in the OOD class; the rest is split evenly.
    #[serde(default)]
    pub ood_fraction: Option<f64>,
    /// Number of consecutive years to assign, starting at `first_year`.
    /// The OOD class, if any, only appears in the last year.
    #[serde(default)]
    pub num_years: usize,
    #[serde(default = "default_first_year")]
    pub first_year: i64,
    #[serde(default)]
    pub seed: u64,
}

fn default_first_year() -> i64 {
    2000
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_vertices < 2 || self.num_classes < 1 {
            return bad("need at least 2 vertices and 1 class".into());
        }
        for (name, p) in [("p_in", self.p_in), ("p_out", self.p_out)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        if self.p_in == 0.0 && self.p_out == 0.0 {
            return bad("p_in = p_out = 0 produces an edgeless graph".into());
        }
        if !(self.separation > 0.0) || !(self.noise_std >= 0.0) {
            return bad("separation must be positive and noise_std non-negative".into());
        }
        if self.feature_dim < self.num_classes {
            return bad(format!(
                "feature_dim {} cannot host {} equidistant class means",
                self.feature_dim, self.num_classes
            ));
        }
        if let Some(k) = self.ood_class_id {
            if k >= self.num_classes {
                return bad(format!("ood_class_id {k} not below {}", self.num_classes));
            }
        }
        if let Some(f) = self.ood_fraction {
            if self.ood_class_id.is_none() || !(f > 0.0 && f < 1.0) {
                return bad("ood_fraction needs an ood_class_id and must lie in (0, 1)".into());
            }
        }
        if self.num_years == 1 {
            return bad("num_years must be 0 (no years) or at least 2".into());
        }
        Ok(())
    }

    fn class_sizes(&self) -> Vec<usize> {
        let n = self.num_vertices;
        let k = self.num_classes;
        let mut sizes = vec![0; k];
        let (ood, rest_classes) = match (self.ood_class_id, self.ood_fraction) {
            (Some(c), Some(f)) if k > 1 => {
                let count = ((n as f64) * f).round() as usize;
                sizes[c] = count.clamp(1, n - 1);
                (Some(c), k - 1)
            }
            _ => (None, k),
        };
        let rest = n - sizes.iter().sum::<usize>();
        let mut slot = 0;
        for (c, s) in sizes.iter_mut().enumerate() {
            if Some(c) == ood {
                continue;
            }
            *s = rest / rest_classes + usize::from(slot < rest % rest_classes);
            slot += 1;
        }
        sizes
    }
}

const STREAM_LABELS: u64 = 0;
const STREAM_EDGES: u64 = 1;
const STREAM_FEATURES: u64 = 2;
const STREAM_YEARS: u64 = 3;

/// Draws a graph from `cfg`; the same config always yields the same graph.
pub fn synth_generate<T: Scalar>(cfg: &SynthConfig) -> Result<Graph<T>> {
    cfg.validate()?;
    let n = cfg.num_vertices;

    let mut labels: Vec<usize> = cfg
        .class_sizes()
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat(c).take(s))
        .collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_LABELS])));

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_EDGES]));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    // Scaled one-hot means are pairwise `separation` apart.
    let scale = cfg.separation / std::f64::consts::SQRT_2;
    let noise = Normal::new(0.0, cfg.noise_std).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_FEATURES]));
    let mut data = Vec::with_capacity(n * cfg.feature_dim);
    for &y in &labels {
        for j in 0..cfg.feature_dim {
            let mean = if j == y { scale } else { 0.0 };
            data.push(T::lit(mean + noise.sample(&mut rng)));
        }
    }
    let features = DenseMatrix::from_vec(n, cfg.feature_dim, data)?;

    let timestamps = (cfg.num_years >= 2).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_YEARS]));
        let last = cfg.num_years as i64 - 1;
        labels
            .iter()
            .map(|&y| {
                let offset = if Some(y) == cfg.ood_class_id {
                    last
                } else {
                    rng.gen_range(0..=last)
                };
                cfg.first_year + offset
            })
            .collect()
    });
    build_graph(n, &edges, features, labels, cfg.num_classes, timestamps)
}
