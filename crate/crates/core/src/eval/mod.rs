//! Downstream evaluation: task labels, frozen-representation classifiers,
//! ranking metrics, and the factor-sweep benchmark harness.

pub mod benchmark;
pub mod classifier;
pub mod labels;
pub mod metrics;

pub use benchmark::{
    run_benchmark, BenchmarkConfig, EvalReport, FactorOutcome, MetricsSummary, ModelKind,
    ReportRow, TaskSplits,
};
pub use classifier::{
    encode_dataset, train_head, train_index_baseline, ClassifierConfig, IndexBaseline,
    TrainedHead,
};
pub use labels::{derive_labels, TaskLabel, LONG_STAY_HOURS, READMISSION_DAYS};
pub use metrics::{auroc, incidence, youden_threshold};
