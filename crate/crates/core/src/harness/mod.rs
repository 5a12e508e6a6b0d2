//! Datasets, vertical partitioning, metrics, the centralized baseline and
//! experiment sweeps.

mod auc;
mod baseline;
mod csv_io;
mod dataset;
mod metrics;
mod rate;
mod reference;
mod sweep;
mod synthetic;

pub use auc::eval_auc;
pub use baseline::{centralized_baseline, BaselineOutcome};
pub use csv_io::{load_csv_vertical, write_csv_vertical};
pub use dataset::{equal_split, split_from_widths, split_vertical, VerticalDataset};
pub use metrics::{
    eval_metric, evaluate, full_gradient, total_scores, write_metrics_csv, Evaluation, RoundMetrics, METRICS_HEADER,
};
pub use rate::{rate_shape, GradNormTrace, RatePoint};
pub use reference::{large_q_task, logistic_task, ReferenceTask};
pub use sweep::{run_sweep, SweepCell, SweepSpec, SweepTable, TargetMetric};
pub use synthetic::{gen_synthetic, SyntheticData, SyntheticSpec, SyntheticTask};
