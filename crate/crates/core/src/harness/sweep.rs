//! Parameter sweeps that reuse one set of base scores per task.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::good::{good_aggregate, GoodConfig};
use crate::harness::metrics::metric_micro_f1;
use crate::harness::run::{auroc_on, choose_alpha, train_and_score, PipelineConfig};
use crate::harness::tasks::{Task, TaskStream};
use crate::scalar::Scalar;
use crate::seed::derive_seed;
use crate::thresholds::{naive_threshold, open_wrf_on, OpenWrfConfig};

/// One point of a curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub param: f64,
    pub value: f64,
}

/// A named curve, e.g. `open_wrf` F1 against `q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub method: String,
    pub points: Vec<CurvePoint>,
}

impl Curve {
    /// Trapezoidal area over the parameter axis.
    pub fn area(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].param - w[0].param) * (w[0].value + w[1].value) / 2.0)
            .sum()
    }

    pub fn best(&self) -> Option<CurvePoint> {
        self.points
            .iter()
            .copied()
            .fold(None, |acc: Option<CurvePoint>, p| match acc {
                Some(b) if b.value >= p.value => Some(b),
                _ => Some(p),
            })
    }
}

/// `method \t param \t <value_name>` with a header row.
pub fn curves_to_tsv(curves: &[Curve], value_name: &str) -> String {
    let mut out = format!("method\tparam\t{value_name}\n");
    for c in curves {
        for p in &c.points {
            writeln!(out, "{}\t{:.2}\t{:.6}", c.method, p.param, p.value).expect("write to string");
        }
    }
    out
}

/// `0.05, 0.10, …, 0.50`.
pub fn default_q_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 * 0.05).collect()
}

fn mean_curve(method: &str, params: &[f64], per_task: &[Vec<Option<f64>>]) -> Result<Curve> {
    let mut points = Vec::with_capacity(params.len());
    for (j, &param) in params.iter().enumerate() {
        let defined: Vec<f64> = per_task.iter().filter_map(|row| row[j]).collect();
        if defined.is_empty() {
            return Err(Error::Undefined(format!("{method} at {param}: no task defines the metric")));
        }
        points.push(CurvePoint {
            param,
            value: defined.iter().sum::<f64>() / defined.len() as f64,
        });
    }
    Ok(Curve {
        method: method.into(),
        points,
    })
}

fn task_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &[i as u64])
}

/// Mean AUROC over the stream's tasks for every α, from one training run
/// per task. Tasks whose evaluation truth has one class are skipped.
pub fn sweep_alpha<T: Scalar>(
    stream: &TaskStream<T>,
    cfg: &PipelineConfig,
    alphas: &[f64],
    seed: u64,
) -> Result<Curve> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(stream.tasks.len());
    for (i, task) in stream.tasks.iter().enumerate() {
        let scored = train_and_score(task, cfg, task_seed(seed, i))?;
        rows.push(alpha_row(task, &scored.base_scores, alphas)?);
    }
    mean_curve("good", alphas, &rows)
}

pub(crate) fn alpha_row<T: Scalar>(
    task: &Task<T>,
    base: &crate::scores::ScoreVector<T>,
    alphas: &[f64],
) -> Result<Vec<Option<f64>>> {
    alphas
        .iter()
        .map(|&a| {
            let agg = good_aggregate(&task.eval_graph, base, &GoodConfig::new(a)?)?;
            auroc_on(&agg, &task.eval_vertices, &task.ood_truth)
        })
        .collect()
}

/// Mean micro-F1 of Open-WRF for every `q` and of the naive threshold for
/// every `delta`, over the stream's tasks. GOOD (if configured) is applied
/// to the scores first.
pub fn sweep_q<T: Scalar>(
    stream: &TaskStream<T>,
    cfg: &PipelineConfig,
    qs: &[f64],
    deltas: &[f64],
    seed: u64,
) -> Result<Vec<Curve>> {
    cfg.validate()?;
    let mut wrf_rows = Vec::with_capacity(stream.tasks.len());
    let mut naive_rows = Vec::with_capacity(stream.tasks.len());
    for (i, task) in stream.tasks.iter().enumerate() {
        let s = task_seed(seed, i);
        let scored = train_and_score(task, cfg, s)?;
        let scores = match &cfg.good {
            Some(settings) => {
                let (alpha, _) = choose_alpha(task, &scored.base_scores, settings)?;
                good_aggregate(&task.eval_graph, &scored.base_scores, &GoodConfig::new(alpha)?)?
            }
            None => scored.base_scores.clone(),
        };
        let mut wrf = Vec::with_capacity(qs.len());
        for (j, &q) in qs.iter().enumerate() {
            let mut wrf_cfg = OpenWrfConfig::new(q, derive_seed(s, &[1, j as u64]));
            if let Some(c) = cfg.threshold.open_wrf(0) {
                wrf_cfg.hidden_dim = c.hidden_dim;
                wrf_cfg.epochs = c.epochs;
                wrf_cfg.learning_rate = c.learning_rate;
                wrf_cfg.score_feature = c.score_feature;
            }
            let d = open_wrf_on(&task.eval_graph, &scores, &task.eval_vertices, &wrf_cfg)?;
            wrf.push(Some(metric_micro_f1(&d.ood_mask, &task.ood_truth)?));
        }
        let eval_scores = scores.select(&task.eval_vertices);
        let naive = deltas
            .iter()
            .map(|&delta| {
                let d = naive_threshold(&eval_scores, delta)?;
                Ok(Some(metric_micro_f1(&d.ood_mask, &task.ood_truth)?))
            })
            .collect::<Result<Vec<_>>>()?;
        wrf_rows.push(wrf);
        naive_rows.push(naive);
    }
    Ok(vec![
        mean_curve("open_wrf", qs, &wrf_rows)?,
        mean_curve("naive", deltas, &naive_rows)?,
    ])
}
