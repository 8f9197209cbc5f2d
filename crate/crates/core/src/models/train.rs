//! Full-batch training with Adam.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{AdamConfig, AdamState, Tape};
use crate::error::{Error, Result};
use crate::graph::{r_hop_mask, Graph};
use crate::models::config::{BackboneConfig, BackboneKind, HeadConfig, HeadKind, TrainConfig};
use crate::models::forward::{structure_operator, Mode, ModelState};
use crate::models::losses::{
    bce_class_weights, masked_rows, ncontrast_on_tape, softmax_ce_on_tape, weighted_bce_on_tape,
};
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::tensor::DenseMatrix;

const STREAM_INIT: u64 = 0;
const STREAM_DROPOUT: u64 = 1;
const STREAM_BATCH: u64 = 2;

const PROTOTYPE_INIT_STD: f64 = 0.01;

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub state: ModelState<T>,
    /// Total training loss per epoch, evaluated before that epoch's update.
    pub loss_trace: Vec<f64>,
    /// Original ids of classes whose positive weight is zero (sigmoid head).
    pub degenerate_classes: Vec<usize>,
}

enum Targets<T> {
    /// Column index per training row.
    Classes(Vec<usize>),
    /// Explicit 0/1 matrix for the sigmoid loss.
    Binary(DenseMatrix<T>),
}

fn glorot<T: Scalar>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> DenseMatrix<T> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::lit(rng.gen_range(-a..a)))
        .collect();
    DenseMatrix::from_vec(fan_in, fan_out, data).expect("sized buffer")
}

fn init_state<T: Scalar>(
    backbone: &BackboneConfig,
    head: &HeadConfig,
    input_dim: usize,
    known_classes: Vec<usize>,
    output_dim: usize,
    seed: u64,
) -> ModelState<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[STREAM_INIT]));
    let isomax = head.kind == HeadKind::IsomaxPlus;
    let last_dim = if isomax { backbone.hidden_dim } else { output_dim };
    let mut weights = Vec::with_capacity(backbone.layers);
    let mut biases = Vec::with_capacity(backbone.layers);
    let mut fan_in = input_dim;
    for l in 0..backbone.layers {
        let fan_out = if l + 1 == backbone.layers { last_dim } else { backbone.hidden_dim };
        let rows = if backbone.kind == BackboneKind::SageMean { 2 * fan_in } else { fan_in };
        weights.push(glorot(&mut rng, rows, fan_out));
        biases.push(DenseMatrix::zeros(1, fan_out));
        fan_in = fan_out;
    }
    let prototypes = isomax.then(|| {
        let normal = Normal::new(0.0, PROTOTYPE_INIT_STD).expect("valid std");
        let data = (0..output_dim * last_dim)
            .map(|_| T::lit(normal.sample(&mut rng)))
            .collect();
        DenseMatrix::from_vec(output_dim, last_dim, data).expect("sized buffer")
    });
    ModelState {
        backbone: backbone.clone(),
        head: head.clone(),
        input_dim,
        weights,
        biases,
        prototypes,
        distance_scale: T::one(),
        known_classes,
    }
}

/// Trains a classifier on the vertices selected by `train_mask`. The known
/// classes are the distinct labels of those vertices.
pub fn train<T: Scalar>(
    g: &Graph<T>,
    backbone: &BackboneConfig,
    head: &HeadConfig,
    cfg: &TrainConfig,
    train_mask: &[bool],
) -> Result<TrainOutcome<T>> {
    let rows = masked_rows(train_mask, g.num_vertices(), "train")?;
    let mut known: Vec<usize> = rows.iter().map(|&v| g.labels()[v]).collect();
    known.sort_unstable();
    known.dedup();
    let mut column = vec![usize::MAX; g.num_classes()];
    for (k, &c) in known.iter().enumerate() {
        column[c] = k;
    }
    let targets = rows.iter().map(|&v| column[g.labels()[v]]).collect();
    let out_dim = known.len();
    fit(g, backbone, head, cfg, rows, Targets::Classes(targets), known, out_dim)
}

/// Trains a one-output sigmoid classifier on the listed vertices of `g`,
/// with `positive[i]` the target of `rows[i]`, using the class-weighted loss.
pub fn train_binary<T: Scalar>(
    g: &Graph<T>,
    backbone: &BackboneConfig,
    cfg: &TrainConfig,
    rows: &[usize],
    positive: &[bool],
) -> Result<TrainOutcome<T>> {
    if positive.len() != rows.len() || rows.is_empty() {
        return Err(Error::shape(
            "train_binary",
            format!("{} targets for {} rows", positive.len(), rows.len()),
        ));
    }
    if let Some(&bad) = rows.iter().find(|&&v| v >= g.num_vertices()) {
        return Err(Error::shape("train_binary", format!("row {bad} of {}", g.num_vertices())));
    }
    let targets = DenseMatrix::column_vector(
        positive.iter().map(|&p| if p { T::one() } else { T::zero() }).collect(),
    );
    let head = HeadConfig::new(HeadKind::SigmoidBceWeighted);
    fit(g, backbone, &head, cfg, rows.to_vec(), Targets::Binary(targets), vec![1], 1)
}

#[allow(clippy::too_many_arguments)]
fn fit<T: Scalar>(
    g: &Graph<T>,
    backbone: &BackboneConfig,
    head: &HeadConfig,
    cfg: &TrainConfig,
    rows: Vec<usize>,
    targets: Targets<T>,
    known: Vec<usize>,
    out_dim: usize,
) -> Result<TrainOutcome<T>> {
    backbone.validate()?;
    head.validate()?;
    cfg.validate()?;

    let mut state = init_state(backbone, head, g.feature_dim(), known, out_dim, cfg.seed);
    let structure = structure_operator(backbone.kind, g);
    let contrastive = match backbone.kind {
        BackboneKind::GraphMlp if g.num_vertices() >= 2 => {
            Some(r_hop_mask(g, backbone.contrastive.r)?)
        }
        _ => None,
    };

    let mut degenerate = Vec::new();
    let bce = match (&targets, head.kind) {
        (Targets::Classes(t), HeadKind::SigmoidBceWeighted) => {
            let w = if cfg.class_weighting {
                bce_class_weights(t, out_dim)
            } else {
                crate::models::ClassWeights {
                    weights: vec![1.0; out_dim],
                    degenerate: Vec::new(),
                }
            };
            degenerate = w.degenerate.iter().map(|&k| state.known_classes[k]).collect();
            let mut y = DenseMatrix::zeros(t.len(), out_dim);
            for (i, &k) in t.iter().enumerate() {
                y[(i, k)] = T::one();
            }
            Some((y, w.weights))
        }
        (Targets::Binary(y), _) => {
            let n = y.rows() as f64;
            let pos = y.as_slice().iter().filter(|&&v| v > T::zero()).count() as f64;
            let w = if cfg.class_weighting { (n - pos) / n } else { 1.0 };
            if pos == n {
                degenerate.push(1);
            }
            Some((y.clone(), vec![w]))
        }
        _ => None,
    };
    let class_targets = match &targets {
        Targets::Classes(t) => Some(t.clone()),
        Targets::Binary(_) => None,
    };

    let entropic = T::lit(head.entropic_scale);
    let tau = T::lit(backbone.contrastive.tau);
    let beta = T::lit(backbone.contrastive.beta);
    let mut adam = AdamState::new(AdamConfig::with_learning_rate(cfg.learning_rate), &state.parameters());
    let mut trace = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs as u64 {
        let mut tape = Tape::new();
        let params = state.record_params(&mut tape, true);
        let x = tape.constant(g.features().clone());
        let structure_vars = structure.as_ref().map(|s| {
            let w = tape.constant(DenseMatrix::row_vector(s.values().to_vec()));
            (s.pattern(), w)
        });
        let mode = Mode::Train {
            seed: derive_seed(cfg.seed, &[STREAM_DROPOUT, epoch]),
        };
        let out = state.forward_on_tape(&mut tape, &params, structure_vars, x, mode, entropic)?;
        let logits = tape.select_rows(out.logits, &rows)?;
        let mut loss = match (&bce, &class_targets) {
            (Some((y, w)), _) => weighted_bce_on_tape(&mut tape, logits, y, w)?,
            (None, Some(t)) => softmax_ce_on_tape(&mut tape, logits, t)?,
            (None, None) => unreachable!("binary targets always use the sigmoid loss"),
        };
        if let (Some(mask), Some(z)) = (&contrastive, out.contrastive) {
            let n = g.num_vertices();
            let b = backbone.contrastive.batch_size.min(n);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[STREAM_BATCH, epoch]));
            let mut batch = sample(&mut rng, n, b).into_vec();
            batch.sort_unstable();
            let nc = ncontrast_on_tape(&mut tape, z, mask, tau, &batch)?;
            let nc = tape.scale(nc, beta)?;
            loss = tape.add(loss, nc)?;
        }
        trace.push(tape.value(loss).item()?.to_f64_lossy());
        let mut grads = tape.backward(loss)?;
        let mut all = params.weights.clone();
        all.extend(params.biases.iter().copied());
        all.extend(params.prototypes);
        all.extend(params.distance_scale);
        let shapes = state.parameters();
        let grads: Vec<DenseMatrix<T>> = all
            .into_iter()
            .zip(&shapes)
            .map(|(v, p)| grads.take(v).unwrap_or_else(|| DenseMatrix::zeros(p.rows(), p.cols())))
            .collect();
        let mut values = shapes;
        adam.step(&mut values, &grads)?;
        state.set_parameters(values)?;
    }

    Ok(TrainOutcome {
        state,
        loss_trace: trace,
        degenerate_classes: degenerate,
    })
}
