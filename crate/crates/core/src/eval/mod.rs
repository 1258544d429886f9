//! Task loading, dataset adapters, metrics and report rendering.

mod metrics;
mod report;
mod tasks;

pub use metrics::{
    compute_metrics, evaluate_results, load_results, pairwise_sum, parse_results, score_pairs,
    threshold_label, validate_thresholds, AccAt, MetricsReport, ResultRecord, ScoredPair, TaskScore,
    DEFAULT_THRESHOLDS,
};
pub use report::{parse_csv_report, render_report, CsvRow, ReportEntry, ReportFormat, CSV_HEADER};
pub use tasks::{
    adapt_nwpu, adapt_vrsbench, corners_to_bbox, load_canonical, parse_canonical, write_canonical,
    Adapted, TaskRecord, NWPU_CLASSES, NWPU_TAG, VRSBENCH_TAG,
};
