//! Experiment harness: synthetic data, missing-modality masks, metrics,
//! k-fold splits, protocol execution, and report emission.

mod config;
mod kfold;
mod metrics;
mod missing;
mod protocol;
mod report;
mod synth;

pub use config::{DataSource, ExperimentConfig, ModelSettings, Protocol, CONFIG_VERSION};
pub use kfold::{kfold_split, train_indices};
pub use metrics::{metrics, softmax_scores, MetricsTriple};
pub use missing::{apply_missing, MissingMask, MissingModality};
pub use protocol::{
    evaluate, evaluate_checkpoint, execute, fit, run_protocol, train_single_fold, worker_cap,
    ExperimentOutcome, FoldOutcome, ModelKind, Trained,
};
pub use report::{
    emit_report, emit_run_info, FoldMetrics, MetricGroup, MetricsReport, ReportFormat,
    ReportMetadata, RunInfo, SummaryTriple,
};
pub use synth::{nearest_class_mean_accuracy, synth_dataset, Dataset, SyntheticSpec};
