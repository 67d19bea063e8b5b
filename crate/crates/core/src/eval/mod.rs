//! Metrics, the field-importance report and experiment sweeps.

mod experiment;
mod metrics;
mod report;

pub use experiment::{
    format_summary, point_label, run_experiment, ExperimentConfig, ExperimentOutcome, SummaryRow, SweepSpec,
};
pub use metrics::{auc, mean_std, median, rmse};
pub use report::{
    evaluate_model, field_importance_report, EvalOptions, FieldPairImportance, MetricsReport, REPORT_HEADER,
};
