//! Per-vertex OOD scores, all oriented so that 0 means in-distribution and
//! 1 means out-of-distribution.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{row_softmax, sigmoid, Tape};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::models::{structure_operator, HeadKind, ModelState};
use crate::scalar::Scalar;
use crate::tensor::{DenseMatrix, SparseMatrix};

/// Per-vertex scores in `[0, 1]`, higher meaning more likely OOD.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector<T> {
    scores: Vec<T>,
}

impl<T: Scalar> ScoreVector<T> {
    pub fn new(scores: Vec<T>) -> Result<Self> {
        if let Some((i, s)) = scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(**s >= T::zero() && **s <= T::one()))
        {
            return Err(Error::Data(format!("score {s} of vertex {i} outside [0, 1]")));
        }
        Ok(Self { scores })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.scores
    }

    pub fn into_vec(self) -> Vec<T> {
        self.scores
    }

    /// Scores of the listed vertices, in that order.
    pub fn select(&self, vertices: &[usize]) -> Self {
        Self {
            scores: vertices.iter().map(|&v| self.scores[v]).collect(),
        }
    }

    /// `vertex_id \t score` lines with six decimals. `ids` renames the rows
    /// (defaults to positions).
    pub fn to_tsv(&self, ids: Option<&[usize]>) -> String {
        let mut out = String::new();
        for (i, s) in self.scores.iter().enumerate() {
            let id = ids.map_or(i, |ids| ids[i]);
            writeln!(out, "{id}\t{:.6}", s.to_f64_lossy()).expect("write to string");
        }
        out
    }

    pub fn write_tsv(&self, path: &Path, ids: Option<&[usize]>) -> Result<()> {
        std::fs::write(path, self.to_tsv(ids)).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdinConfig {
    pub temperature: f64,
    pub epsilon: f64,
}

impl OdinConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ODIN temperature {} must be positive",
                self.temperature
            )));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ODIN epsilon {} must be non-negative",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Which score a run computes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerConfig {
    Msp,
    Odin { temperature: f64, epsilon: f64 },
    Isomax,
    Gdoc,
}

impl ScorerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ScorerConfig::Msp => "msp",
            ScorerConfig::Odin { .. } => "odin",
            ScorerConfig::Isomax => "isomax",
            ScorerConfig::Gdoc => "gdoc",
        }
    }

    /// The head this scorer reads.
    pub fn required_head(&self) -> HeadKind {
        match self {
            ScorerConfig::Msp | ScorerConfig::Odin { .. } => HeadKind::SoftmaxCe,
            ScorerConfig::Isomax => HeadKind::IsomaxPlus,
            ScorerConfig::Gdoc => HeadKind::SigmoidBceWeighted,
        }
    }

    pub fn check_head(&self, head: HeadKind) -> Result<()> {
        if let ScorerConfig::Odin {
            temperature,
            epsilon,
        } = *self
        {
            OdinConfig {
                temperature,
                epsilon,
            }
            .validate()?;
        }
        if head != self.required_head() {
            return Err(Error::InvalidConfig(format!(
                "{} scores need a {:?} head, got {head:?}",
                self.name(),
                self.required_head()
            )));
        }
        Ok(())
    }
}

/// `1 - max_k softmax(f)_k`.
pub fn score_msp<T: Scalar>(logits: &DenseMatrix<T>) -> ScoreVector<T> {
    let p = row_softmax(logits);
    ScoreVector {
        scores: (0..p.rows()).map(|i| T::one() - row_max(p.row(i))).collect(),
    }
}

/// `1 - max_k sigmoid(f_k)`.
pub fn score_gdoc<T: Scalar>(logits: &DenseMatrix<T>) -> ScoreVector<T> {
    ScoreVector {
        scores: (0..logits.rows())
            .map(|i| T::one() - sigmoid(row_max(logits.row(i))))
            .collect(),
    }
}

fn row_max<T: Scalar>(row: &[T]) -> T {
    row.iter().copied().fold(T::neg_infinity(), T::max)
}

fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// ODIN on a graph: temperature-scaled softmax after one signed-gradient
/// step on the features and on the nonzero propagation weights.
pub fn score_odin<T: Scalar>(
    model: &ModelState<T>,
    g: &Graph<T>,
    cfg: &OdinConfig,
) -> Result<ScoreVector<T>> {
    cfg.validate()?;
    if model.head.kind != HeadKind::SoftmaxCe {
        return Err(Error::InvalidConfig(format!(
            "ODIN reads softmax logits; model has a {:?} head",
            model.head.kind
        )));
    }
    let temperature = T::lit(cfg.temperature);
    let epsilon = T::lit(cfg.epsilon);
    let structure = structure_operator(model.backbone.kind, g);

    let (features, structure) = if cfg.epsilon > 0.0 {
        perturb(model, g.features(), structure, temperature, epsilon)?
    } else {
        (g.features().clone(), structure)
    };
    let out = model.predict_with(structure.as_ref(), &features)?;
    let scaled = out.logits.map(|v| v / temperature);
    Ok(score_msp(&scaled))
}

fn perturb<T: Scalar>(
    model: &ModelState<T>,
    features: &DenseMatrix<T>,
    structure: Option<SparseMatrix<T>>,
    temperature: T,
    epsilon: T,
) -> Result<(DenseMatrix<T>, Option<SparseMatrix<T>>)> {
    let mut tape = Tape::new();
    let params = model.record_params(&mut tape, false);
    let x = tape.param(features.clone());
    let adj = structure
        .as_ref()
        .map(|s| tape.param(DenseMatrix::row_vector(s.values().to_vec())));
    let vars = model.forward_on_tape(
        &mut tape,
        &params,
        structure.as_ref().map(|s| s.pattern()).zip(adj),
        x,
        crate::models::Mode::Eval,
        T::one(),
    )?;
    let scaled = tape.scale(vars.logits, T::one() / temperature)?;
    let log_p = tape.row_log_softmax(scaled)?;
    let mut picker = DenseMatrix::zeros(tape.shape(log_p).0, tape.shape(log_p).1);
    for (i, k) in tape.value(log_p).argmax_rows().into_iter().enumerate() {
        picker[(i, k)] = T::one();
    }
    let picker = tape.constant(picker);
    let picked = tape.mul(log_p, picker)?;
    let objective = tape.sum(picked)?;
    let grads = tape.backward(objective)?;

    // Stepping along +sgn(∇ log S_y) raises the confidence of every vertex.
    let gx = grads.get(x).expect("features are differentiable");
    let features = features.zip_map(gx, |v, g| v + epsilon * sign(g))?;
    let structure = match (structure, adj) {
        (Some(mut s), Some(a)) => {
            let ga = grads.get(a).expect("weights are differentiable").as_slice();
            let mirror = s.pattern().transpose_positions()?;
            let half = T::lit(0.5);
            for (p, w) in s.values_mut().iter_mut().enumerate() {
                let sym = (ga[p] + ga[mirror[p]]) * half;
                *w += epsilon * sign(sym);
            }
            Some(s)
        }
        (s, _) => s,
    };
    Ok((features, structure))
}

/// Smallest Euclidean distance from each normalized embedding to a
/// normalized prototype, in `[0, 2]`.
pub fn isomax_raw_scores<T: Scalar>(
    embeddings: &DenseMatrix<T>,
    prototypes: &DenseMatrix<T>,
) -> Result<Vec<T>> {
    if prototypes.rows() == 0 {
        return Err(Error::InvalidConfig("prototype set is empty".into()));
    }
    let mut tape = Tape::new();
    let h = tape.constant(embeddings.clone());
    let p = tape.constant(prototypes.clone());
    let h = tape.row_l2_normalize(h)?;
    let p = tape.row_l2_normalize(p)?;
    let d = tape.pairwise_distance(h, p)?;
    let d = tape.value(d);
    Ok((0..d.rows()).map(|i| d.row(i).iter().copied().fold(T::infinity(), T::min)).collect())
}

/// Affine map of raw distances onto `[0, 1]`, fitted on training scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsomaxCalibration {
    pub min: f64,
    pub max: f64,
}

impl IsomaxCalibration {
    /// The natural range `[0, 2]` of distances between unit vectors.
    pub const NATURAL: IsomaxCalibration = IsomaxCalibration { min: 0.0, max: 2.0 };

    pub fn fit<T: Scalar>(raw: &[T]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Data("calibration needs at least one raw score".into()));
        }
        let min = raw.iter().map(|v| v.to_f64_lossy()).fold(f64::INFINITY, f64::min);
        let max = raw.iter().map(|v| v.to_f64_lossy()).fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { min, max })
    }

    pub fn apply<T: Scalar>(&self, raw: T) -> T {
        let span = self.max - self.min;
        let shifted = raw - T::lit(self.min);
        let scaled = if span > 0.0 { shifted / T::lit(span) } else { shifted };
        scaled.max(T::zero()).min(T::one())
    }
}

/// Minimum prototype distance mapped onto `[0, 1]` and clamped.
pub fn score_isomax<T: Scalar>(
    embeddings: &DenseMatrix<T>,
    prototypes: &DenseMatrix<T>,
    calibration: &IsomaxCalibration,
) -> Result<ScoreVector<T>> {
    let raw = isomax_raw_scores(embeddings, prototypes)?;
    Ok(ScoreVector {
        scores: raw.into_iter().map(|r| calibration.apply(r)).collect(),
    })
}

/// Scores every vertex of `g` with a trained model, plus class predictions.
/// IsoMax+ scores are calibrated on `calibration_graph` (the training graph).
pub fn score_with_model<T: Scalar>(
    model: &ModelState<T>,
    g: &Graph<T>,
    scorer: &ScorerConfig,
    calibration_graph: &Graph<T>,
) -> Result<(ScoreVector<T>, Vec<usize>)> {
    scorer.check_head(model.head.kind)?;
    let out = model.predict(g)?;
    let predictions = model.predict_classes(&out.logits);
    let scores = match *scorer {
        ScorerConfig::Msp => score_msp(&out.logits),
        ScorerConfig::Gdoc => score_gdoc(&out.logits),
        ScorerConfig::Odin {
            temperature,
            epsilon,
        } => score_odin(
            model,
            g,
            &OdinConfig {
                temperature,
                epsilon,
            },
        )?,
        ScorerConfig::Isomax => {
            let protos = model
                .prototypes
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("model has no prototypes".into()))?;
            let train = model.predict(calibration_graph)?;
            let calibration = IsomaxCalibration::fit(&isomax_raw_scores(&train.embeddings, protos)?)?;
            score_isomax(&out.embeddings, protos, &calibration)?
        }
    };
    Ok((scores, predictions))
}
