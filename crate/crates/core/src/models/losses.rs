//! Training objectives, recorded on a tape so they can be differentiated.
//!
//! Class targets are column indices into the logit matrix. The value-level
//! `loss_*` functions evaluate the same expressions without keeping
//! gradients.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::models::forward::isomax_logits;
use crate::scalar::Scalar;
use crate::tensor::{CsrPattern, DenseMatrix};

/// Positive-term weights of the class-weighted sigmoid loss.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights {
    /// `(n - n_k)/n` per class, with `n` the number of masked vertices.
    pub weights: Vec<f64>,
    /// Classes whose weight is zero because every masked vertex belongs to them.
    pub degenerate: Vec<usize>,
}

pub(crate) fn masked_rows(mask: &[bool], n: usize, op: &'static str) -> Result<Vec<usize>> {
    if mask.len() != n {
        return Err(Error::shape(op, format!("mask of {} for {n} rows", mask.len())));
    }
    let rows: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
    if rows.is_empty() {
        return Err(Error::InvalidConfig(format!("{op}: mask selects no vertex")));
    }
    Ok(rows)
}

fn check_targets(targets: &[usize], classes: usize, op: &'static str) -> Result<()> {
    if let Some(&bad) = targets.iter().find(|&&y| y >= classes) {
        return Err(Error::shape(op, format!("target {bad} with {classes} logit columns")));
    }
    Ok(())
}

fn one_hot<T: Scalar>(targets: &[usize], classes: usize) -> DenseMatrix<T> {
    let mut m = DenseMatrix::zeros(targets.len(), classes);
    for (i, &y) in targets.iter().enumerate() {
        m[(i, y)] = T::one();
    }
    m
}

/// Weights `(n - n_k)/n` computed over the given targets.
pub fn bce_class_weights(targets: &[usize], classes: usize) -> ClassWeights {
    let n = targets.len();
    let mut counts = vec![0usize; classes];
    for &y in targets {
        counts[y] += 1;
    }
    let weights: Vec<f64> = counts
        .iter()
        .map(|&c| if n == 0 { 0.0 } else { (n - c) as f64 / n as f64 })
        .collect();
    let degenerate = counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| n > 0 && c == n)
        .map(|(k, _)| k)
        .collect();
    ClassWeights { weights, degenerate }
}

/// Mean cross-entropy of `logits` (m×K) against `targets` (length m).
pub fn softmax_ce_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    targets: &[usize],
) -> Result<Var> {
    let (m, k) = tape.shape(logits);
    if targets.len() != m || m == 0 {
        return Err(Error::shape("softmax_ce", format!("{} targets for {m} rows", targets.len())));
    }
    check_targets(targets, k, "softmax_ce")?;
    let log_p = tape.row_log_softmax(logits)?;
    let picker = tape.constant(one_hot(targets, k));
    let picked = tape.mul(log_p, picker)?;
    let total = tape.sum(picked)?;
    tape.scale(total, -T::one() / T::from_usize_lossy(m))
}

/// Sum over columns and mean over rows of
/// `-(w_k·y·log σ(f) + (1 - y)·log σ(-f))` with a 0/1 target matrix.
pub fn weighted_bce_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    logits: Var,
    target_matrix: &DenseMatrix<T>,
    weights: &[f64],
) -> Result<Var> {
    let (m, k) = tape.shape(logits);
    if target_matrix.shape() != (m, k) || weights.len() != k || m == 0 {
        return Err(Error::shape(
            "weighted_bce",
            format!(
                "logits {m}x{k}, targets {}x{}, {} weights",
                target_matrix.rows(),
                target_matrix.cols(),
                weights.len()
            ),
        ));
    }
    let pos_coef = DenseMatrix::from_vec(
        m,
        k,
        target_matrix
            .as_slice()
            .iter()
            .enumerate()
            .map(|(idx, &y)| y * T::lit(weights[idx % k]))
            .collect(),
    )?;
    let neg_coef = target_matrix.map(|y| T::one() - y);
    let log_pos = tape.log_sigmoid(logits)?;
    let neg_logits = tape.scale(logits, -T::one())?;
    let log_neg = tape.log_sigmoid(neg_logits)?;
    let pos_c = tape.constant(pos_coef);
    let neg_c = tape.constant(neg_coef);
    let a = tape.mul(log_pos, pos_c)?;
    let b = tape.mul(log_neg, neg_c)?;
    let both = tape.add(a, b)?;
    let total = tape.sum(both)?;
    tape.scale(total, -T::one() / T::from_usize_lossy(m))
}

/// NContrast over the rows of `z` listed in `batch`. `neighbors` is the
/// r-hop mask over all rows of `z`.
pub fn ncontrast_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    z: Var,
    neighbors: &CsrPattern,
    tau: T,
    batch: &[usize],
) -> Result<Var> {
    let b = batch.len();
    if b < 2 {
        return Err(Error::InvalidConfig(format!(
            "contrastive batch of {b} needs at least 2 samples"
        )));
    }
    let rows = tape.shape(z).0;
    if neighbors.rows() != rows {
        return Err(Error::shape(
            "ncontrast",
            format!("mask over {} rows, embeddings have {rows}", neighbors.rows()),
        ));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= rows) {
        return Err(Error::shape("ncontrast", format!("batch index {bad} of {rows}")));
    }
    let mut off_diag = DenseMatrix::filled(b, b, T::one());
    let mut gamma = DenseMatrix::zeros(b, b);
    for i in 0..b {
        off_diag[(i, i)] = T::zero();
        let mut any = false;
        for j in 0..b {
            if i != j && neighbors.contains(batch[i], batch[j]) {
                gamma[(i, j)] = T::one();
                any = true;
            }
        }
        if !any {
            // Numerator equals denominator, so this sample adds exactly 0.
            gamma.row_mut(i).copy_from_slice(off_diag.row(i));
        }
    }
    let zb = tape.select_rows(z, batch)?;
    let sim = tape.cosine_similarity(zb)?;
    let scaled = tape.scale(sim, T::one() / tau)?;
    let e = tape.exp(scaled)?;
    let gamma = tape.constant(gamma);
    let off_diag = tape.constant(off_diag);
    let num = tape.mul(e, gamma)?;
    let num = tape.row_sum(num)?;
    let den = tape.mul(e, off_diag)?;
    let den = tape.row_sum(den)?;
    let log_num = tape.log(num)?;
    let log_den = tape.log(den)?;
    let diff = tape.sub(log_num, log_den)?;
    let mean = tape.mean(diff)?;
    tape.scale(mean, -T::one())
}

/// Mean negative log-softmax of the target column over masked rows.
pub fn loss_softmax_ce<T: Scalar>(
    logits: &DenseMatrix<T>,
    targets: &[usize],
    mask: &[bool],
) -> Result<T> {
    let rows = masked_rows(mask, logits.rows(), "loss_softmax_ce")?;
    if targets.len() != logits.rows() {
        return Err(Error::shape("loss_softmax_ce", "one target per row required"));
    }
    let picked: Vec<usize> = rows.iter().map(|&i| targets[i]).collect();
    let mut tape = Tape::new();
    let l = tape.constant(logits.select_rows(&rows));
    let loss = softmax_ce_on_tape(&mut tape, l, &picked)?;
    tape.value(loss).item()
}

/// Class-weighted sigmoid cross-entropy over masked rows; weights are
/// computed from the masked targets.
pub fn loss_bce_weighted<T: Scalar>(
    logits: &DenseMatrix<T>,
    targets: &[usize],
    mask: &[bool],
) -> Result<T> {
    let rows = masked_rows(mask, logits.rows(), "loss_bce_weighted")?;
    if targets.len() != logits.rows() {
        return Err(Error::shape("loss_bce_weighted", "one target per row required"));
    }
    let picked: Vec<usize> = rows.iter().map(|&i| targets[i]).collect();
    check_targets(&picked, logits.cols(), "loss_bce_weighted")?;
    let weights = bce_class_weights(&picked, logits.cols());
    let mut tape = Tape::new();
    let l = tape.constant(logits.select_rows(&rows));
    let loss = weighted_bce_on_tape(&mut tape, l, &one_hot(&picked, logits.cols()), &weights.weights)?;
    tape.value(loss).item()
}

/// Cross-entropy of the prototype logits `-E·|d|·‖ĥ - p̂_k‖` over masked rows.
pub fn loss_isomax<T: Scalar>(
    embeddings: &DenseMatrix<T>,
    prototypes: &DenseMatrix<T>,
    distance_scale: T,
    entropic_scale: T,
    targets: &[usize],
    mask: &[bool],
) -> Result<T> {
    if prototypes.rows() == 0 {
        return Err(Error::InvalidConfig("prototype set is empty".into()));
    }
    let rows = masked_rows(mask, embeddings.rows(), "loss_isomax")?;
    if targets.len() != embeddings.rows() {
        return Err(Error::shape("loss_isomax", "one target per row required"));
    }
    let picked: Vec<usize> = rows.iter().map(|&i| targets[i]).collect();
    let mut tape = Tape::new();
    let h = tape.constant(embeddings.select_rows(&rows));
    let p = tape.constant(prototypes.clone());
    let d = tape.constant(DenseMatrix::scalar(distance_scale));
    let logits = isomax_logits(&mut tape, h, p, d, entropic_scale)?;
    let loss = softmax_ce_on_tape(&mut tape, logits, &picked)?;
    tape.value(loss).item()
}

/// Neighborhood-contrastive loss of the batch rows of `z`.
pub fn loss_ncontrast<T: Scalar>(
    z: &DenseMatrix<T>,
    neighbors: &CsrPattern,
    tau: T,
    batch: &[usize],
) -> Result<T> {
    let mut tape = Tape::new();
    let zv = tape.constant(z.clone());
    let loss = ncontrast_on_tape(&mut tape, zv, neighbors, tau, batch)?;
    tape.value(loss).item()
}
