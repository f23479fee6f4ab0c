//! Pipeline orchestration: dataset generation and storage, metrics, the
//! experiment sweeps and their reports.

mod dataset;
mod experiments;
mod metrics;
mod report;

pub use dataset::{
    case_hash, draw_seed, featurize, featurize_all, generate_dataset, read_dataset, write_dataset, Dataset,
    DatasetHeader, GenerateConfig, RawSample, DATASET_MAGIC, DATASET_VERSION,
};
pub use experiments::{
    assess, benchmark_inference, check_dataset_case, check_model_compat, dataset_point, evaluate, history_report,
    k_sweep, mean_std, median_p95, missing_data_experiment, placement_report, satisfies_locality, test_metrics,
    unobserved_nodes, verdict_report, AssessOptions, BenchResult, ExactVerdict, KSweepConfig, Verdict,
};
pub use metrics::{compute_metrics, Metrics};
pub use report::{Cell, ExperimentReport};
