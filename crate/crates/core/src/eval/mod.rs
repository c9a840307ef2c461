//! Offline evaluation of the detection prompt against a labelled corpus:
//! filtering, assembly, classification, metrics and reports.

pub mod classify;
pub mod dataset;
pub mod metrics;
pub mod report;

pub use classify::{classify_all, pairs, predict, ClassifiedInstance, ClassifyConfig, ClassifyOutcome};
pub use dataset::{
    assemble_eval_set, default_facts, default_fewshot, filter_dataset, filter_dataset_with_stats, load_instances, load_records,
    read_records, stratified_sample, write_instances, EvalInstance, FilterRules, FilterStats,
    RawRecord,
};
pub use metrics::{compute_metrics, MetricsMode, MetricsReport};
pub use report::{breakdown_report, check_targets, render_confusion, Breakdown, ConfusionArtifact, TargetCheck};
