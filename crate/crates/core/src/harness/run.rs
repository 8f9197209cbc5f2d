//! The train, score, aggregate, threshold and evaluate loop.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::row_softmax;
use crate::error::{Error, Result};
use crate::good::{good_aggregate, GoodConfig};
use crate::harness::metrics::{metric_auroc, metric_id_accuracy, metric_micro_f1};
use crate::harness::report::{EvalReport, TaskReport};
use crate::harness::tasks::{StreamOrigin, Task, TaskStream};
use crate::models::{train, BackboneConfig, HeadConfig, HeadKind, ModelState, TrainConfig};
use crate::scalar::Scalar;
use crate::scores::{score_with_model, ScoreVector, ScorerConfig};
use crate::seed::derive_seed;
use crate::thresholds::{
    gdoc_decide, gdoc_thresholds, naive_threshold, open_wrf_on, openwgl_decide, sigmoid_outputs,
    ThresholdConfig, ThresholdDecision,
};

/// Training settings that the harness seeds per task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub learning_rate: f64,
    #[serde(default = "default_true")]
    pub class_weighting: bool,
}

fn default_true() -> bool {
    true
}

/// How GOOD chooses α.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodSettings {
    /// Used as is, or as the fallback when tuning is impossible.
    #[serde(default = "default_alpha")]
    pub alpha_ood: f64,
    /// Pick the grid value with the best AUROC on the tuning vertices.
    #[serde(default)]
    pub tune: bool,
    #[serde(default = "default_alpha_grid")]
    pub grid: Vec<f64>,
}

fn default_alpha() -> f64 {
    0.5
}

/// `0.0, 0.1, …, 1.0`.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

impl GoodSettings {
    pub fn fixed(alpha_ood: f64) -> Self {
        Self {
            alpha_ood,
            tune: false,
            grid: default_alpha_grid(),
        }
    }

    pub fn tuned(grid: Vec<f64>) -> Self {
        Self {
            alpha_ood: 0.0,
            tune: true,
            grid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        GoodConfig::new(self.alpha_ood)?;
        for &a in &self.grid {
            GoodConfig::new(a)?;
        }
        if self.tune && self.grid.is_empty() {
            return Err(Error::InvalidConfig("alpha tuning grid is empty".into()));
        }
        Ok(())
    }
}

/// Everything a task run needs besides the data and the seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub backbone: BackboneConfig,
    pub head: HeadConfig,
    pub train: TrainSettings,
    pub scorer: ScorerConfig,
    #[serde(default)]
    pub good: Option<GoodSettings>,
    pub threshold: ThresholdConfig,
}

impl PipelineConfig {
    /// Rejects invalid values and incompatible combinations.
    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        self.head.validate()?;
        TrainConfig::new(self.train.epochs, self.train.learning_rate, 0).validate()?;
        self.scorer.check_head(self.head.kind)?;
        if let Some(good) = &self.good {
            good.validate()?;
        }
        self.threshold.validate()?;
        match (&self.threshold, self.head.kind) {
            (ThresholdConfig::Gdoc { .. }, k) if k != HeadKind::SigmoidBceWeighted => Err(Error::InvalidConfig(
                format!("gDOC thresholds need the sigmoid head, got {k:?}"),
            )),
            (ThresholdConfig::Openwgl, k) if k != HeadKind::SoftmaxCe => Err(Error::InvalidConfig(format!(
                "the OpenWGL rule reads softmax probabilities, got a {k:?} head"
            ))),
            _ => Ok(()),
        }
    }
}

/// A trained model with its scores on the whole evaluation graph.
#[derive(Clone, Debug)]
pub struct ScoredTask<T> {
    pub model: ModelState<T>,
    pub degenerate_classes: Vec<usize>,
    pub base_scores: ScoreVector<T>,
    /// Predicted class of every evaluation-graph vertex.
    pub predictions: Vec<usize>,
}

/// Everything produced for one task.
#[derive(Clone, Debug)]
pub struct TaskOutcome<T> {
    pub report: TaskReport,
    pub scored: ScoredTask<T>,
    /// Scores after optional aggregation, over the whole evaluation graph.
    pub final_scores: ScoreVector<T>,
    /// Decision per evaluation vertex.
    pub decision: ThresholdDecision,
}

const STREAM_TRAIN: u64 = 0;
const STREAM_THRESHOLD: u64 = 1;

/// Trains on `task.train_graph` and scores every vertex of `task.eval_graph`.
pub fn train_and_score<T: Scalar>(task: &Task<T>, cfg: &PipelineConfig, seed: u64) -> Result<ScoredTask<T>> {
    let mut train_cfg = TrainConfig::new(
        cfg.train.epochs,
        cfg.train.learning_rate,
        derive_seed(seed, &[STREAM_TRAIN]),
    );
    train_cfg.class_weighting = cfg.train.class_weighting;
    let all = vec![true; task.train_graph.num_vertices()];
    let outcome = train(&task.train_graph, &cfg.backbone, &cfg.head, &train_cfg, &all)?;
    if !outcome.degenerate_classes.is_empty() {
        log::warn!(
            "{}: classes {:?} have zero positive weight",
            task.name,
            outcome.degenerate_classes
        );
    }
    let (base_scores, predictions) =
        score_with_model(&outcome.state, &task.eval_graph, &cfg.scorer, &task.train_graph)?;
    Ok(ScoredTask {
        model: outcome.state,
        degenerate_classes: outcome.degenerate_classes,
        base_scores,
        predictions,
    })
}

/// AUROC over `vertices`, or `None` when only one class is present.
pub(crate) fn auroc_on<T: Scalar>(scores: &ScoreVector<T>, vertices: &[usize], truth: &[bool]) -> Result<Option<f64>> {
    match metric_auroc(scores.select(vertices).as_slice(), truth) {
        Ok(a) => Ok(Some(a)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Chooses α for a task. Returns the value and whether it was tuned.
pub(crate) fn choose_alpha<T: Scalar>(
    task: &Task<T>,
    base: &ScoreVector<T>,
    settings: &GoodSettings,
) -> Result<(f64, bool)> {
    if !settings.tune {
        return Ok((settings.alpha_ood, false));
    }
    let mut best: Option<(f64, f64)> = None;
    for &alpha in &settings.grid {
        let agg = good_aggregate(&task.eval_graph, base, &GoodConfig::new(alpha)?)?;
        let Some(a) = auroc_on(&agg, &task.tuning_vertices, &task.tuning_truth)? else {
            log::warn!("{}: no OOD among tuning vertices, using alpha {}", task.name, settings.alpha_ood);
            return Ok((settings.alpha_ood, false));
        };
        if best.map_or(true, |(_, b)| a > b) {
            best = Some((alpha, a));
        }
    }
    Ok((best.map_or(settings.alpha_ood, |(alpha, _)| alpha), true))
}

pub(crate) fn decide<T: Scalar>(
    task: &Task<T>,
    cfg: &PipelineConfig,
    scored: &ScoredTask<T>,
    scores: &ScoreVector<T>,
    seed: u64,
) -> Result<ThresholdDecision> {
    let eval = &task.eval_vertices;
    match &cfg.threshold {
        ThresholdConfig::Naive { delta } => naive_threshold(&scores.select(eval), *delta),
        ThresholdConfig::Gdoc {
            alpha_doc,
            delta_min,
        } => {
            let model = &scored.model;
            let train_out = sigmoid_outputs(&model.predict(&task.train_graph)?.logits);
            let columns: Vec<usize> = task
                .train_graph
                .labels()
                .iter()
                .map(|y| model.known_classes.binary_search(y).expect("trained on these labels"))
                .collect();
            let t = gdoc_thresholds(&train_out, &columns, *alpha_doc, *delta_min)?;
            let eval_out = sigmoid_outputs(&model.predict(&task.eval_graph)?.logits.select_rows(eval));
            Ok(gdoc_decide(&eval_out, &t.thresholds)?.0)
        }
        ThresholdConfig::Openwgl => {
            let logits = scored.model.predict(&task.eval_graph)?.logits.select_rows(eval);
            openwgl_decide(&row_softmax(&logits))
        }
        ThresholdConfig::OpenWrf { .. } => {
            let wrf = cfg
                .threshold
                .open_wrf(derive_seed(seed, &[STREAM_THRESHOLD]))
                .expect("open-wrf variant");
            open_wrf_on(&task.eval_graph, scores, eval, &wrf)
        }
    }
}

/// Runs one task end to end.
pub fn run_task<T: Scalar>(task: &Task<T>, cfg: &PipelineConfig, seed: u64) -> Result<TaskOutcome<T>> {
    cfg.validate()?;
    let scored = train_and_score(task, cfg, seed)?;
    let (final_scores, alpha) = match &cfg.good {
        Some(settings) => {
            let (alpha, tuned) = choose_alpha(task, &scored.base_scores, settings)?;
            log::info!("{}: alpha {alpha} ({})", task.name, if tuned { "tuned" } else { "fixed" });
            let agg = good_aggregate(&task.eval_graph, &scored.base_scores, &GoodConfig::new(alpha)?)?;
            (agg, Some(alpha))
        }
        None => (scored.base_scores.clone(), None),
    };
    let decision = decide(task, cfg, &scored, &final_scores, seed)?;

    let eval = &task.eval_vertices;
    let auroc = auroc_on(&final_scores, eval, &task.ood_truth)?;
    let micro_f1 = metric_micro_f1(&decision.ood_mask, &task.ood_truth)?;
    let preds: Vec<usize> = eval.iter().map(|&v| scored.predictions[v]).collect();
    let labels: Vec<usize> = eval.iter().map(|&v| task.eval_graph.labels()[v]).collect();
    let id_accuracy = match metric_id_accuracy(&preds, &labels, &task.ood_truth) {
        Ok(a) => Some(a),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let n_ood = task.ood_truth.iter().filter(|&&t| t).count();
    let report = TaskReport {
        task: task.name.clone(),
        num_train: task.train_graph.num_vertices(),
        num_eval: eval.len(),
        num_ood: n_ood,
        known_classes: task.known_classes.clone(),
        alpha_ood: alpha,
        id_accuracy,
        auroc,
        micro_f1,
        predicted_ood: decision.ood_count(),
        thresholds: decision.thresholds_used.clone(),
        degenerate_classes: scored.degenerate_classes.clone(),
    };
    Ok(TaskOutcome {
        report,
        scored,
        final_scores,
        decision,
    })
}

/// Runs every task of a stream and aggregates. Static tasks are independent
/// and run in parallel (capped by `threads`); temporal tasks run in order.
/// Task `i` uses the seed derived from `(seed, i)`.
pub fn run_lifelong<T: Scalar>(
    stream: &TaskStream<T>,
    cfg: &PipelineConfig,
    seed: u64,
    threads: Option<usize>,
) -> Result<EvalReport> {
    cfg.validate()?;
    if stream.tasks.is_empty() {
        return Err(Error::InvalidConfig("task stream is empty".into()));
    }
    let run = |(i, task): (usize, &Task<T>)| -> Result<TaskReport> {
        Ok(run_task(task, cfg, derive_seed(seed, &[i as u64]))?.report)
    };
    let reports: Vec<TaskReport> = match stream.origin {
        StreamOrigin::StaticLoco => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.unwrap_or(0))
                .build()
                .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
            pool.install(|| stream.tasks.par_iter().enumerate().map(run).collect::<Result<_>>())?
        }
        StreamOrigin::Temporal => stream.tasks.iter().enumerate().map(run).collect::<Result<_>>()?,
    };
    Ok(EvalReport::new(stream.origin, serde_json::to_value(cfg).expect("config serializes"), seed, reports))
}
