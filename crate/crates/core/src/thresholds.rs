//! Crisp ID/OOD decisions from scores or classifier outputs.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{train_binary, BackboneConfig, BackboneKind, TrainConfig};
use crate::scalar::Scalar;
use crate::scores::ScoreVector;
use crate::tensor::DenseMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdsUsed {
    Scalar(f64),
    PerClass(Vec<f64>),
    /// Open-WRF decides with a trained classifier; records the pseudo-OOD count.
    Classifier { pseudo_ood: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    pub ood_mask: Vec<bool>,
    pub thresholds_used: ThresholdsUsed,
    pub method: String,
}

impl ThresholdDecision {
    pub fn ood_count(&self) -> usize {
        self.ood_mask.iter().filter(|&&b| b).count()
    }

    /// `vertex_id \t score \t is_ood` lines.
    pub fn to_tsv<T: Scalar>(&self, ids: &[usize], scores: &[T]) -> Result<String> {
        if ids.len() != self.ood_mask.len() || scores.len() != self.ood_mask.len() {
            return Err(Error::shape(
                "decision tsv",
                format!(
                    "{} ids and {} scores for {} decisions",
                    ids.len(),
                    scores.len(),
                    self.ood_mask.len()
                ),
            ));
        }
        let mut out = String::new();
        for ((id, s), &ood) in ids.iter().zip(scores).zip(&self.ood_mask) {
            writeln!(out, "{id}\t{:.6}\t{}", s.to_f64_lossy(), u8::from(ood)).expect("write to string");
        }
        Ok(out)
    }

    pub fn write_tsv<T: Scalar>(&self, path: &Path, ids: &[usize], scores: &[T]) -> Result<()> {
        std::fs::write(path, self.to_tsv(ids, scores)?).map_err(|e| Error::io(path, e))
    }
}

/// OOD iff the score exceeds `delta`.
pub fn naive_threshold<T: Scalar>(scores: &ScoreVector<T>, delta: f64) -> Result<ThresholdDecision> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidConfig(format!("delta {delta} outside [0, 1]")));
    }
    let d = T::lit(delta);
    Ok(ThresholdDecision {
        ood_mask: scores.as_slice().iter().map(|&s| s > d).collect(),
        thresholds_used: ThresholdsUsed::Scalar(delta),
        method: "naive".into(),
    })
}

/// Per-class risk-reduction thresholds of the sigmoid head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GdocThresholds {
    pub thresholds: Vec<f64>,
    /// Columns with no training vertex; their threshold is `delta_min`.
    pub empty_classes: Vec<usize>,
}

/// For each column `k`, fits a Gaussian with mean 1 to the outputs of the
/// vertices labelled `k` by mirroring them around 1, and returns
/// `max(delta_min, 1 - alpha_doc·σ_k)`.
pub fn gdoc_thresholds<T: Scalar>(
    sigmoid_outputs: &DenseMatrix<T>,
    labels: &[usize],
    alpha_doc: f64,
    delta_min: f64,
) -> Result<GdocThresholds> {
    if labels.len() != sigmoid_outputs.rows() {
        return Err(Error::shape(
            "gdoc_thresholds",
            format!("{} labels for {} rows", labels.len(), sigmoid_outputs.rows()),
        ));
    }
    if !(alpha_doc >= 0.0) || !(0.0..=1.0).contains(&delta_min) {
        return Err(Error::InvalidConfig(format!(
            "gDOC needs alpha >= 0 and delta_min in [0, 1], got {alpha_doc} and {delta_min}"
        )));
    }
    let k = sigmoid_outputs.cols();
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::shape("gdoc_thresholds", format!("label {bad} with {k} columns")));
    }
    let mut thresholds = Vec::with_capacity(k);
    let mut empty_classes = Vec::new();
    for c in 0..k {
        let mut mirrored = Vec::new();
        for (i, &y) in labels.iter().enumerate() {
            if y == c {
                let p = sigmoid_outputs[(i, c)].to_f64_lossy();
                mirrored.push(p);
                mirrored.push(2.0 - p);
            }
        }
        if mirrored.is_empty() {
            empty_classes.push(c);
            thresholds.push(delta_min);
            continue;
        }
        let m = mirrored.len() as f64;
        let mean = mirrored.iter().sum::<f64>() / m;
        let var = mirrored.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / m;
        thresholds.push(delta_min.max(1.0 - alpha_doc * var.sqrt()));
    }
    Ok(GdocThresholds {
        thresholds,
        empty_classes,
    })
}

/// OOD iff every sigmoid output is below its class threshold. Also returns
/// the argmax column of every row.
pub fn gdoc_decide<T: Scalar>(
    sigmoid_outputs: &DenseMatrix<T>,
    thresholds: &[f64],
) -> Result<(ThresholdDecision, Vec<usize>)> {
    if thresholds.len() != sigmoid_outputs.cols() {
        return Err(Error::shape(
            "gdoc_decide",
            format!("{} thresholds for {} columns", thresholds.len(), sigmoid_outputs.cols()),
        ));
    }
    let ood_mask = (0..sigmoid_outputs.rows())
        .map(|i| {
            sigmoid_outputs
                .row(i)
                .iter()
                .zip(thresholds)
                .all(|(&p, &d)| p < T::lit(d))
        })
        .collect();
    Ok((
        ThresholdDecision {
            ood_mask,
            thresholds_used: ThresholdsUsed::PerClass(thresholds.to_vec()),
            method: "gdoc".into(),
        },
        sigmoid_outputs.argmax_rows(),
    ))
}

/// Sigmoid of every logit.
pub fn sigmoid_outputs<T: Scalar>(logits: &DenseMatrix<T>) -> DenseMatrix<T> {
    logits.map(sigmoid)
}

pub const OPENWGL_MIN_SAMPLES: usize = 10;

fn entropy<T: Scalar>(row: &[T]) -> f64 {
    row.iter()
        .map(|p| p.to_f64_lossy())
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum()
}

fn max_prob<T: Scalar>(row: &[T]) -> f64 {
    row.iter().map(|p| p.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max)
}

/// Average of the mean max-probability over all rows and over the 10% of
/// rows with the largest entropy (ties broken by lower row index).
pub fn openwgl_threshold<T: Scalar>(probs: &DenseMatrix<T>) -> Result<f64> {
    let n = probs.rows();
    if n < OPENWGL_MIN_SAMPLES {
        return Err(Error::Data(format!(
            "OpenWGL threshold needs at least {OPENWGL_MIN_SAMPLES} samples, got {n}"
        )));
    }
    let maxp: Vec<f64> = (0..n).map(|i| max_prob(probs.row(i))).collect();
    let ent: Vec<f64> = (0..n).map(|i| entropy(probs.row(i))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ent[b].total_cmp(&ent[a]).then(a.cmp(&b)));
    let top = n.div_ceil(10);
    let mean_all = maxp.iter().sum::<f64>() / n as f64;
    let mean_top = order[..top].iter().map(|&i| maxp[i]).sum::<f64>() / top as f64;
    Ok((mean_all + mean_top) / 2.0)
}

/// OOD iff the row's max probability is strictly below the OpenWGL threshold.
pub fn openwgl_decide<T: Scalar>(probs: &DenseMatrix<T>) -> Result<ThresholdDecision> {
    let delta = openwgl_threshold(probs)?;
    Ok(ThresholdDecision {
        ood_mask: (0..probs.rows()).map(|i| max_prob(probs.row(i)) < delta).collect(),
        thresholds_used: ThresholdsUsed::Scalar(delta),
        method: "openwgl".into(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenWrfConfig {
    /// Fraction of vertices pseudo-labelled OOD, in `(0, 1)`.
    pub q: f64,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub class_weighting: bool,
    /// Append the score as an extra input column.
    #[serde(default = "default_true")]
    pub score_feature: bool,
}

fn default_hidden() -> usize {
    16
}
fn default_epochs() -> usize {
    200
}
fn default_lr() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}

impl OpenWrfConfig {
    pub fn new(q: f64, seed: u64) -> Self {
        Self {
            q,
            hidden_dim: default_hidden(),
            epochs: default_epochs(),
            learning_rate: default_lr(),
            dropout: 0.0,
            seed,
            class_weighting: true,
            score_feature: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::InvalidConfig(format!("q = {} outside (0, 1)", self.q)));
        }
        Ok(())
    }
}

/// Marks the top `q` fraction of `scores` as OOD. Sorting is ascending and
/// stable with ties broken by position, so ties push higher positions up.
pub fn pseudo_labels<T: Scalar>(scores: &[T], q: f64) -> Result<Vec<bool>> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidConfig(format!("q = {q} outside (0, 1)")));
    }
    let n = scores.len();
    // The guards absorb rounding in products such as 10·0.1 or 10·0.9.
    if (n as f64) * q + 1e-9 < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "q = {q} pseudo-labels no vertex out of {n}; raise q or score more vertices"
        )));
    }
    let cut = (((n as f64) * (1.0 - q) + 1e-9).floor() as usize).min(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores").then(a.cmp(&b)));
    let mut labels = vec![false; n];
    for &v in &order[cut..] {
        labels[v] = true;
    }
    Ok(labels)
}

/// Open-WRF over every vertex of `g`.
pub fn open_wrf<T: Scalar>(
    g: &Graph<T>,
    scores: &ScoreVector<T>,
    cfg: &OpenWrfConfig,
) -> Result<ThresholdDecision> {
    let all: Vec<usize> = (0..g.num_vertices()).collect();
    open_wrf_on(g, scores, &all, cfg)
}

/// Open-WRF restricted to `vertices`: those are ranked and pseudo-labelled,
/// a 2-layer GCN is trained on them over the whole of `g`, and its decisions
/// on them are returned (in the order of `vertices`). `scores` covers all of
/// `g` so the optional score column is defined everywhere.
pub fn open_wrf_on<T: Scalar>(
    g: &Graph<T>,
    scores: &ScoreVector<T>,
    vertices: &[usize],
    cfg: &OpenWrfConfig,
) -> Result<ThresholdDecision> {
    cfg.validate()?;
    if scores.len() != g.num_vertices() {
        return Err(Error::shape(
            "open_wrf",
            format!("{} scores for {} vertices", scores.len(), g.num_vertices()),
        ));
    }
    let subset = scores.select(vertices);
    let labels = pseudo_labels(subset.as_slice(), cfg.q)?;
    let pseudo_ood = labels.iter().filter(|&&b| b).count();

    let input = if cfg.score_feature {
        let column = DenseMatrix::column_vector(scores.as_slice().to_vec());
        g.with_features(g.features().hconcat(&column)?)?
    } else {
        g.clone()
    };
    let backbone = BackboneConfig::new(BackboneKind::Gcn, 2, cfg.hidden_dim, cfg.dropout);
    let mut train_cfg = TrainConfig::new(cfg.epochs, cfg.learning_rate, cfg.seed);
    train_cfg.class_weighting = cfg.class_weighting;
    let outcome = train_binary(&input, &backbone, &train_cfg, vertices, &labels)?;
    let logits = outcome.state.predict(&input)?.logits;
    Ok(ThresholdDecision {
        // sigmoid(f) > 0.5 exactly when f > 0.
        ood_mask: vertices.iter().map(|&v| logits[(v, 0)] > T::zero()).collect(),
        thresholds_used: ThresholdsUsed::Classifier { pseudo_ood },
        method: "open_wrf".into(),
    })
}

/// Decision rule of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdConfig {
    Naive {
        delta: f64,
    },
    Gdoc {
        alpha_doc: f64,
        delta_min: f64,
    },
    Openwgl,
    OpenWrf {
        q: f64,
        #[serde(default = "default_hidden")]
        hidden_dim: usize,
        #[serde(default = "default_epochs")]
        epochs: usize,
        #[serde(default = "default_lr")]
        learning_rate: f64,
        #[serde(default = "default_true")]
        score_feature: bool,
    },
}

impl ThresholdConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdConfig::Naive { delta } if !(0.0..=1.0).contains(&delta) => {
                Err(Error::InvalidConfig(format!("delta {delta} outside [0, 1]")))
            }
            ThresholdConfig::Gdoc {
                alpha_doc,
                delta_min,
            } if !(alpha_doc >= 0.0) || !(0.0..=1.0).contains(&delta_min) => Err(Error::InvalidConfig(
                format!("gDOC needs alpha >= 0 and delta_min in [0, 1], got {alpha_doc} and {delta_min}"),
            )),
            ThresholdConfig::OpenWrf { q, .. } if !(q > 0.0 && q < 1.0) => {
                Err(Error::InvalidConfig(format!("q = {q} outside (0, 1)")))
            }
            _ => Ok(()),
        }
    }

    /// Full Open-WRF settings, seeded by the caller.
    pub fn open_wrf(&self, seed: u64) -> Option<OpenWrfConfig> {
        match *self {
            ThresholdConfig::OpenWrf {
                q,
                hidden_dim,
                epochs,
                learning_rate,
                score_feature,
            } => Some(OpenWrfConfig {
                q,
                hidden_dim,
                epochs,
                learning_rate,
                dropout: 0.0,
                seed,
                class_weighting: true,
                score_feature,
            }),
            _ => None,
        }
    }
}
