//! Training, evaluation, checkpoints and ablation sweeps.

pub mod ablation;
pub mod checkpoint;
pub mod metrics;
pub mod train;

pub use ablation::{
    ablation_sweep, parse_values, summary_csv, AblationAxis, AblationValue, SummaryRow,
};
pub use metrics::{
    evaluate, instance_count_error, ConfusionCounts, MetricReport, MetricRow, SampleMetrics,
};
pub use train::{
    evaluate_samples, predict, test_samples, train, validation_samples, LogRow, Supervision,
    TrainConfig, TrainOutcome, CSV_HEADER,
};
