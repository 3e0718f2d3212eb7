//! Metrics, significance tests and comparison reports.

mod compare;
mod metrics;
mod plots;
mod wilcoxon;

pub use compare::{compare_experiments, ComparisonReport, GroupMean, PairTest, Pairing, ReportRow, ALPHA};
pub use metrics::{confusion, metrics, per_class, Averaging, ClassMetrics, ConfusionMatrix, MetricSet};
pub use plots::{emit_plots, REFERENCE_ACCURACY};
pub use wilcoxon::{
    signed_rank_null_pmf, wilcoxon_signed_rank, wilcoxon_with, MethodChoice, WilcoxonMethod, WilcoxonOptions,
    WilcoxonResult, ZeroMethod, EXACT_LIMIT,
};
