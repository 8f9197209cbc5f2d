//! Evaluation measures of a task.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Area under the ROC curve of `scores` for detecting `truth == true`,
/// via the Mann–Whitney statistic with midranks for ties.
pub fn metric_auroc<T: Scalar>(scores: &[T], truth: &[bool]) -> Result<f64> {
    if scores.len() != truth.len() {
        return Err(Error::shape(
            "metric_auroc",
            format!("{} scores for {} labels", scores.len(), truth.len()),
        ));
    }
    let positives = truth.iter().filter(|&&t| t).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Undefined(format!(
            "AUROC needs both classes, got {positives} OOD and {negatives} ID"
        )));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Data(format!("non-finite score {bad}")));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // Ranks start + 1 ..= end share their average.
        let midrank = (start + 1 + end) as f64 / 2.0;
        let tied_pos = order[start..end].iter().filter(|&&i| truth[i]).count();
        rank_sum += midrank * tied_pos as f64;
        start = end;
    }
    let p = positives as f64;
    let u = rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

/// Micro-averaged F1 of the binary ID/OOD decision. With one label per
/// vertex and both classes counted, this equals accuracy.
pub fn metric_micro_f1(ood_mask: &[bool], truth: &[bool]) -> Result<f64> {
    if ood_mask.len() != truth.len() {
        return Err(Error::shape(
            "metric_micro_f1",
            format!("{} decisions for {} labels", ood_mask.len(), truth.len()),
        ));
    }
    if truth.is_empty() {
        return Err(Error::Undefined("micro-F1 of zero decisions".into()));
    }
    let hits = ood_mask.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Accuracy of `predictions` over the vertices whose truth is ID.
pub fn metric_id_accuracy(predictions: &[usize], labels: &[usize], ood_truth: &[bool]) -> Result<f64> {
    if predictions.len() != labels.len() || labels.len() != ood_truth.len() {
        return Err(Error::shape(
            "metric_id_accuracy",
            format!(
                "{} predictions, {} labels, {} truth flags",
                predictions.len(),
                labels.len(),
                ood_truth.len()
            ),
        ));
    }
    let mut seen = 0usize;
    let mut hits = 0usize;
    for ((&p, &y), &ood) in predictions.iter().zip(labels).zip(ood_truth) {
        if !ood {
            seen += 1;
            hits += usize::from(p == y);
        }
    }
    if seen == 0 {
        return Err(Error::Undefined("ID accuracy with no ID vertex".into()));
    }
    Ok(hits as f64 / seen as f64)
}
