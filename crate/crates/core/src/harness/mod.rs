//! Lifelong evaluation: task streams, the evaluation loop, metrics, sweeps
//! and reports.

mod metrics;
mod report;
mod run;
mod sweep;
mod tasks;

pub use metrics::{metric_auroc, metric_id_accuracy, metric_micro_f1};
pub use report::{Aggregate, EvalReport, TaskReport, REPORT_SCHEMA_VERSION};
pub use run::{
    default_alpha_grid, run_lifelong, run_task, train_and_score, GoodSettings, PipelineConfig,
    ScoredTask, TaskOutcome, TrainSettings,
};
pub use sweep::{curves_to_tsv, default_q_grid, sweep_alpha, sweep_q, Curve, CurvePoint};
pub use tasks::{
    make_static_task, make_static_tasks, make_temporal_tasks, stratified_split, Split,
    StreamOrigin, Task, TaskStream,
};
