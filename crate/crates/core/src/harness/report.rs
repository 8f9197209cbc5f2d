//! Evaluation reports and their JSON/TSV forms.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::harness::tasks::StreamOrigin;
use crate::thresholds::ThresholdsUsed;

/// Bumped whenever a field is added, removed or changes meaning.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: String,
    pub num_train: usize,
    pub num_eval: usize,
    pub num_ood: usize,
    pub known_classes: Vec<usize>,
    /// α used by GOOD, if aggregation was on.
    pub alpha_ood: Option<f64>,
    /// `None` when the task has no ID evaluation vertex.
    pub id_accuracy: Option<f64>,
    /// `None` when the task has only one truth class.
    pub auroc: Option<f64>,
    pub micro_f1: f64,
    pub predicted_ood: usize,
    pub thresholds: ThresholdsUsed,
    pub degenerate_classes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Unweighted means over the tasks where the metric is defined.
    pub id_accuracy: Option<f64>,
    pub auroc: Option<f64>,
    pub micro_f1: f64,
    pub auroc_excluded_tasks: usize,
    pub id_accuracy_excluded_tasks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub protocol: StreamOrigin,
    pub seed: u64,
    pub config: serde_json::Value,
    pub tasks: Vec<TaskReport>,
    pub aggregate: Aggregate,
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut missing = 0usize;
    for v in values {
        match v {
            Some(x) => {
                sum += x;
                count += 1;
            }
            None => missing += 1,
        }
    }
    ((count > 0).then(|| sum / count as f64), missing)
}

impl EvalReport {
    pub fn new(protocol: StreamOrigin, config: serde_json::Value, seed: u64, tasks: Vec<TaskReport>) -> Self {
        let (auroc, auroc_excluded_tasks) = mean_defined(tasks.iter().map(|t| t.auroc));
        let (id_accuracy, id_accuracy_excluded_tasks) = mean_defined(tasks.iter().map(|t| t.id_accuracy));
        let micro_f1 = tasks.iter().map(|t| t.micro_f1).sum::<f64>() / tasks.len().max(1) as f64;
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            protocol,
            seed,
            config,
            aggregate: Aggregate {
                id_accuracy,
                auroc,
                micro_f1,
                auroc_excluded_tasks,
                id_accuracy_excluded_tasks,
            },
            tasks,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One row per task plus a final `mean` row. Undefined values are empty.
    pub fn to_tsv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        let mut out = String::from("task\tnum_eval\tnum_ood\talpha_ood\tid_accuracy\tauroc\tmicro_f1\n");
        for t in &self.tasks {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
                t.task,
                t.num_eval,
                t.num_ood,
                fmt(t.alpha_ood),
                fmt(t.id_accuracy),
                fmt(t.auroc),
                t.micro_f1
            )
            .expect("write to string");
        }
        let a = &self.aggregate;
        writeln!(
            out,
            "mean\t\t\t\t{}\t{}\t{:.6}",
            fmt(a.id_accuracy),
            fmt(a.auroc),
            a.micro_f1
        )
        .expect("write to string");
        out
    }
}
