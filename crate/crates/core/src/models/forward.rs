//! Forward passes of the three backbones and the three output heads.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::{mean_aggregation, symmetric_normalize, Graph, NormalizedAdjacency};
use crate::models::config::{BackboneConfig, BackboneKind, HeadConfig, HeadKind};
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::tensor::{CsrPattern, DenseMatrix, SparseMatrix};

/// Trained parameters of one backbone plus one head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState<T> {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub input_dim: usize,
    /// Per layer weight matrix, `fan_in x fan_out` (`2·fan_in` for GraphSAGE).
    pub weights: Vec<DenseMatrix<T>>,
    /// Per layer `1 x fan_out` bias.
    pub biases: Vec<DenseMatrix<T>>,
    /// One row per known class (prototype head only).
    pub prototypes: Option<DenseMatrix<T>>,
    /// Learnable distance scale of the prototype head.
    pub distance_scale: T,
    /// Original class id of every output column, ascending.
    pub known_classes: Vec<usize>,
}

/// Output of an inference pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput<T> {
    /// Penultimate activations for linear heads; the final-layer embedding
    /// for the prototype head.
    pub embeddings: DenseMatrix<T>,
    /// Class logits (prototype head: `-d·‖ĥ - p̂_k‖` with entropic scale 1).
    pub logits: DenseMatrix<T>,
    /// Graph-MLP only: output of the penultimate linear layer.
    pub contrastive: Option<DenseMatrix<T>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Mode {
    Train { seed: u64 },
    Eval,
}

/// Tape handles of a forward pass.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ForwardVars {
    pub embeddings: Var,
    pub logits: Var,
    pub contrastive: Option<Var>,
}

/// Parameter nodes in the order of [`ModelState::parameters`].
#[derive(Clone, Debug)]
pub(crate) struct ParamVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
    pub prototypes: Option<Var>,
    pub distance_scale: Option<Var>,
}

/// The sparse operator a backbone propagates with, if any.
pub fn structure_operator<T: Scalar>(kind: BackboneKind, g: &Graph<T>) -> Option<SparseMatrix<T>> {
    match kind {
        BackboneKind::Gcn => Some(symmetric_normalize(g).matrix),
        BackboneKind::SageMean => Some(mean_aggregation(g)),
        BackboneKind::GraphMlp => None,
    }
}

impl<T: Scalar> ModelState<T> {
    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_known_classes(&self) -> usize {
        self.known_classes.len()
    }

    /// All trainable matrices: weights, biases, then prototypes and the
    /// 1×1 distance scale for the prototype head.
    pub fn parameters(&self) -> Vec<DenseMatrix<T>> {
        let mut out: Vec<DenseMatrix<T>> = self.weights.clone();
        out.extend(self.biases.iter().cloned());
        if let Some(p) = &self.prototypes {
            out.push(p.clone());
            out.push(DenseMatrix::scalar(self.distance_scale));
        }
        out
    }

    pub fn set_parameters(&mut self, params: Vec<DenseMatrix<T>>) -> Result<()> {
        let layers = self.weights.len();
        let expected = 2 * layers + if self.prototypes.is_some() { 2 } else { 0 };
        if params.len() != expected {
            return Err(Error::shape(
                "set_parameters",
                format!("{} matrices, expected {expected}", params.len()),
            ));
        }
        let mut it = params.into_iter();
        for w in self.weights.iter_mut() {
            *w = it.next().expect("counted");
        }
        for b in self.biases.iter_mut() {
            *b = it.next().expect("counted");
        }
        if self.prototypes.is_some() {
            self.prototypes = it.next();
            self.distance_scale = it.next().expect("counted").item()?;
        }
        Ok(())
    }

    pub(crate) fn record_params(&self, tape: &mut Tape<T>, trainable: bool) -> ParamVars {
        let mut leaf = |m: &DenseMatrix<T>| {
            if trainable {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        };
        let weights = self.weights.iter().map(&mut leaf).collect();
        let biases = self.biases.iter().map(&mut leaf).collect();
        let prototypes = self.prototypes.as_ref().map(&mut leaf);
        let distance_scale = self
            .prototypes
            .as_ref()
            .map(|_| leaf(&DenseMatrix::scalar(self.distance_scale)));
        ParamVars {
            weights,
            biases,
            prototypes,
            distance_scale,
        }
    }

    fn check_input(&self, features: &DenseMatrix<T>) -> Result<()> {
        if features.cols() != self.input_dim {
            return Err(Error::shape(
                "forward",
                format!(
                    "features have {} columns, model expects {}",
                    features.cols(),
                    self.input_dim
                ),
            ));
        }
        Ok(())
    }

    /// Records the forward pass. `structure` carries the propagation
    /// pattern and a 1×nnz node of its weights (ignored by Graph-MLP).
    pub(crate) fn forward_on_tape(
        &self,
        tape: &mut Tape<T>,
        params: &ParamVars,
        structure: Option<(&Arc<CsrPattern>, Var)>,
        x: Var,
        mode: Mode,
        entropic_scale: T,
    ) -> Result<ForwardVars> {
        let kind = self.backbone.kind;
        let layers = self.weights.len();
        let rate = T::lit(self.backbone.dropout);
        let propagate = matches!(kind, BackboneKind::Gcn | BackboneKind::SageMean);
        let (pattern, adj) = match (propagate, structure) {
            (true, Some((p, w))) => (Some(p), Some(w)),
            (true, None) => {
                return Err(Error::InvalidConfig(format!(
                    "{kind:?} backbone needs graph structure"
                )))
            }
            (false, _) => (None, None),
        };
        if let (Some(p), (rows, _)) = (pattern, tape.shape(x)) {
            if p.rows() != rows {
                return Err(Error::shape(
                    "forward",
                    format!("structure over {} vertices, features for {rows}", p.rows()),
                ));
            }
        }

        let mut h = x;
        let mut penultimate = x;
        let mut contrastive = None;
        for l in 0..layers {
            let last = l + 1 == layers;
            let pre = match kind {
                BackboneKind::Gcn => {
                    let hw = tape.matmul(h, params.weights[l])?;
                    tape.spmm(pattern.expect("checked"), adj.expect("checked"), hw)?
                }
                BackboneKind::SageMean => {
                    let nbr = tape.spmm(pattern.expect("checked"), adj.expect("checked"), h)?;
                    let cat = tape.concat_cols(h, nbr)?;
                    tape.matmul(cat, params.weights[l])?
                }
                BackboneKind::GraphMlp => tape.matmul(h, params.weights[l])?,
            };
            let pre = tape.bias_add(pre, params.biases[l])?;
            if last {
                h = pre;
                break;
            }
            if kind == BackboneKind::GraphMlp && l + 2 == layers {
                contrastive = Some(pre);
            }
            let mut act = tape.relu(pre)?;
            if kind == BackboneKind::GraphMlp {
                act = tape.layer_norm(act)?;
            }
            penultimate = act;
            h = match mode {
                Mode::Train { seed } => tape.dropout(act, rate, derive_seed(seed, &[l as u64]))?,
                Mode::Eval => act,
            };
        }

        match self.head.kind {
            HeadKind::SoftmaxCe | HeadKind::SigmoidBceWeighted => Ok(ForwardVars {
                embeddings: penultimate,
                logits: h,
                contrastive,
            }),
            HeadKind::IsomaxPlus => {
                let protos = params
                    .prototypes
                    .ok_or_else(|| Error::InvalidConfig("prototype head without prototypes".into()))?;
                let scale = params.distance_scale.expect("set with prototypes");
                let logits = isomax_logits(tape, h, protos, scale, entropic_scale)?;
                Ok(ForwardVars {
                    embeddings: h,
                    logits,
                    contrastive,
                })
            }
        }
    }

    /// Records an inference pass over `g` using caller-owned nodes: one per
    /// matrix of [`ModelState::parameters`], the features `x`, and optionally
    /// the 1×nnz propagation weights (constants from `g` when absent).
    /// Returns the embedding and logit nodes.
    pub fn forward_with_nodes(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        g: &Graph<T>,
        x: Var,
        structure_weights: Option<Var>,
        entropic_scale: T,
    ) -> Result<(Var, Var)> {
        let layers = self.weights.len();
        let expected = 2 * layers + if self.prototypes.is_some() { 2 } else { 0 };
        if params.len() != expected {
            return Err(Error::shape("forward_with_nodes", format!("{} parameter nodes, expected {expected}", params.len())));
        }
        let vars = ParamVars {
            weights: params[..layers].to_vec(),
            biases: params[layers..2 * layers].to_vec(),
            prototypes: params.get(2 * layers).copied(),
            distance_scale: params.get(2 * layers + 1).copied(),
        };
        let op = structure_operator(self.backbone.kind, g);
        let structure = op.as_ref().map(|s| {
            let w = structure_weights
                .unwrap_or_else(|| tape.constant(DenseMatrix::row_vector(s.values().to_vec())));
            (s.pattern(), w)
        });
        let out = self.forward_on_tape(tape, &vars, structure, x, Mode::Eval, entropic_scale)?;
        Ok((out.embeddings, out.logits))
    }

    /// Inference on an arbitrary graph with matching feature dimension.
    pub fn predict(&self, g: &Graph<T>) -> Result<ModelOutput<T>> {
        let op = structure_operator(self.backbone.kind, g);
        self.predict_with(op.as_ref(), g.features())
    }

    pub(crate) fn predict_with(
        &self,
        structure: Option<&SparseMatrix<T>>,
        features: &DenseMatrix<T>,
    ) -> Result<ModelOutput<T>> {
        self.check_input(features)?;
        let mut tape = Tape::new();
        let params = self.record_params(&mut tape, false);
        let x = tape.constant(features.clone());
        let structure = structure.map(|s| {
            let w = tape.constant(DenseMatrix::row_vector(s.values().to_vec()));
            (s.pattern(), w)
        });
        let vars = self.forward_on_tape(&mut tape, &params, structure, x, Mode::Eval, T::one())?;
        Ok(ModelOutput {
            embeddings: tape.value(vars.embeddings).clone(),
            logits: tape.value(vars.logits).clone(),
            contrastive: vars.contrastive.map(|c| tape.value(c).clone()),
        })
    }

    /// Predicted original class id per vertex (argmax of logits, which for the
    /// prototype head is the nearest prototype).
    pub fn predict_classes(&self, logits: &DenseMatrix<T>) -> Vec<usize> {
        logits
            .argmax_rows()
            .into_iter()
            .map(|k| self.known_classes[k])
            .collect()
    }
}

/// `-E·|d|·‖normalize(h) - normalize(p_k)‖` for every row and prototype.
pub fn isomax_logits<T: Scalar>(
    tape: &mut Tape<T>,
    embeddings: Var,
    prototypes: Var,
    distance_scale: Var,
    entropic_scale: T,
) -> Result<Var> {
    let h = tape.row_l2_normalize(embeddings)?;
    let p = tape.row_l2_normalize(prototypes)?;
    let dist = tape.pairwise_distance(h, p)?;
    let d = tape.abs(distance_scale)?;
    let scaled = tape.scale_by(dist, d)?;
    tape.scale(scaled, -entropic_scale)
}

fn expect_kind<T: Scalar>(state: &ModelState<T>, kind: BackboneKind) -> Result<()> {
    if state.backbone.kind != kind {
        return Err(Error::InvalidConfig(format!(
            "model is a {:?} backbone, not {kind:?}",
            state.backbone.kind
        )));
    }
    Ok(())
}

/// GCN inference: returns `(embeddings, logits)`.
pub fn gcn_forward<T: Scalar>(
    norm_adj: &NormalizedAdjacency<T>,
    features: &DenseMatrix<T>,
    state: &ModelState<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    expect_kind(state, BackboneKind::Gcn)?;
    let out = state.predict_with(Some(&norm_adj.matrix), features)?;
    Ok((out.embeddings, out.logits))
}

/// GraphSAGE-mean inference over the full neighborhood.
pub fn sage_forward<T: Scalar>(
    g: &Graph<T>,
    features: &DenseMatrix<T>,
    state: &ModelState<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    expect_kind(state, BackboneKind::SageMean)?;
    let op = mean_aggregation(g);
    let out = state.predict_with(Some(&op), features)?;
    Ok((out.embeddings, out.logits))
}

/// Graph-MLP inference: returns `(Z, logits)` where `Z` is the penultimate
/// linear output. No adjacency is involved.
pub fn graphmlp_forward<T: Scalar>(
    features: &DenseMatrix<T>,
    state: &ModelState<T>,
) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    expect_kind(state, BackboneKind::GraphMlp)?;
    let out = state.predict_with(None, features)?;
    Ok((out.contrastive.expect("graph-mlp has a penultimate layer"), out.logits))
}
